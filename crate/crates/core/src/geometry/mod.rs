//! Pinhole geometry for monocular size recovery.
//!
//! World frame: the optical centre sits at the origin, `y` points up and the
//! water surface is the plane `y = -height_m`. The camera looks along its
//! local `-z` axis; a positive pitch tilts that axis down toward the water.
//! Lens distortion, yaw and roll are not modelled.

mod camera;
mod primitives;
mod sizing;

pub use camera::{focal_pixels, pitch_rotation, pixel_ray_local, pixel_ray_world, CameraRig, PixelBox};
pub use primitives::{plane_from_point_vectors, point_plane_distance, ray_plane_intersection, Plane, Ray};
pub use sizing::{
    estimate_size, pixel_sensitivity, pixel_sensitivity_with_shift, project_point, project_to_box, GroundRect,
    SensitivityReport, SizeEstimate, SizeStage,
};

use thiserror::Error;

/// Below this, cross products and ray/plane dot products count as zero.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Tolerance for geometric identities (unit norms, plane membership).
pub const IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid camera rig: {0}")]
    InvalidRig(String),
    #[error("invalid pixel box: {0}")]
    InvalidBox(String),
    #[error("spanning vectors are colinear (|v1 x v2| = {norm:e})")]
    DegenerateVectors { norm: f64 },
    #[error("ray is parallel to the plane (|n.v| = {dot:e})")]
    ParallelRay { dot: f64 },
    #[error("plane lies behind the ray origin (t = {t})")]
    BehindCamera { t: f64 },
    #[error("{0} is not finite")]
    NonFinite(&'static str),
    #[error("target does not fit in the image: {0}")]
    OutOfView(String),
    #[error("box [{x_min}, {y_min}, {x_max}, {y_max}]: {source}")]
    InBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        #[source]
        source: Box<GeometryError>,
    },
}

impl GeometryError {
    /// The underlying error with any box context stripped.
    pub fn root(&self) -> &GeometryError {
        match self {
            GeometryError::InBox { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, GeometryError>;
