use nalgebra::Vector3;

use super::camera::{focal_pixels, pixel_ray_world, CameraRig, PixelBox};
use super::primitives::{plane_from_point_vectors, point_plane_distance};
use super::{GeometryError, Result};

const M_TO_CM: f64 = 100.0;

/// Which correction stages have been applied to a size estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SizeStage {
    Raw,
    ShapeCorrected,
    DimCorrected,
}

impl SizeStage {
    pub fn as_str(&self) -> &'static str {
        match self {
            SizeStage::Raw => "raw",
            SizeStage::ShapeCorrected => "shape_corrected",
            SizeStage::DimCorrected => "dim_corrected",
        }
    }
}

/// Physical footprint of one detected object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeEstimate {
    dim_x_cm: f64,
    dim_y_cm: f64,
    ground_point: Vector3<f64>,
    stage: SizeStage,
}

impl SizeEstimate {
    pub fn dim_x_cm(&self) -> f64 {
        self.dim_x_cm
    }

    pub fn dim_y_cm(&self) -> f64 {
        self.dim_y_cm
    }

    /// Where the box's central ray meets the water, in metres.
    pub fn ground_point(&self) -> Vector3<f64> {
        self.ground_point
    }

    pub fn stage(&self) -> SizeStage {
        self.stage
    }

    /// Straight-line distance from the optical centre to the ground point, in metres.
    pub fn range_m(&self) -> f64 {
        self.ground_point.norm()
    }

    pub(crate) fn with_dims(&self, dim_x_cm: f64, dim_y_cm: f64, stage: SizeStage) -> Self {
        Self { dim_x_cm, dim_y_cm, ground_point: self.ground_point, stage }
    }
}

fn in_box(bbox: &PixelBox) -> impl Fn(GeometryError) -> GeometryError + '_ {
    move |e| GeometryError::InBox {
        x_min: bbox.x_min(),
        y_min: bbox.y_min(),
        x_max: bbox.x_max(),
        y_max: bbox.y_max(),
        source: Box::new(e),
    }
}

/// Metric width and height of the object framed by `bbox`.
///
/// The four box edges and the optical centre span four bounding planes; the
/// object is placed where the box's central ray meets the water, and each
/// dimension is the sum of that point's distances to the two opposing planes.
pub fn estimate_size(rig: &CameraRig, bbox: &PixelBox) -> Result<SizeEstimate> {
    let wrap = in_box(bbox);
    let [x0, y0, x1, y1] = bbox.corners();
    let top_left = pixel_ray_world(rig, x0, y0).direction();
    let top_right = pixel_ray_world(rig, x1, y0).direction();
    let bottom_left = pixel_ray_world(rig, x0, y1).direction();
    let bottom_right = pixel_ray_world(rig, x1, y1).direction();
    let (cx, cy) = bbox.center();
    let central = pixel_ray_world(rig, cx, cy);

    let c = rig.center();
    let top = plane_from_point_vectors(c, top_left, top_right).map_err(&wrap)?;
    let bottom = plane_from_point_vectors(c, bottom_left, bottom_right).map_err(&wrap)?;
    let left = plane_from_point_vectors(c, top_left, bottom_left).map_err(&wrap)?;
    let right = plane_from_point_vectors(c, top_right, bottom_right).map_err(&wrap)?;

    let (_, o) = central.intersect(&rig.ground_plane()).map_err(&wrap)?;

    let dim_x = point_plane_distance(&o, &left) + point_plane_distance(&o, &right);
    let dim_y = point_plane_distance(&o, &top) + point_plane_distance(&o, &bottom);
    Ok(SizeEstimate { dim_x_cm: dim_x * M_TO_CM, dim_y_cm: dim_y * M_TO_CM, ground_point: o, stage: SizeStage::Raw })
}

/// Pixel coordinates of a world point under the exact pinhole model.
pub fn project_point(rig: &CameraRig, p: Vector3<f64>) -> Result<(f64, f64)> {
    let cam = rig.orientation().transpose() * (p - rig.center());
    let depth = -cam.z;
    if !(depth > 0.0) {
        return Err(GeometryError::OutOfView(format!("point {p:?} is behind the camera")));
    }
    let (fx, fy) = focal_pixels(rig);
    let (cx, cy) = rig.principal_point();
    Ok((cx + fx * cam.x / depth, cy - fy * cam.y / depth))
}

/// An object on the water, centred on a ground point.
///
/// `width_cm` is the object's extent between its left and right viewing
/// planes and `height_cm` its extent between the top and bottom viewing
/// planes, i.e. the quantities the estimator measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundRect {
    pub center_x_m: f64,
    /// Ground coordinate along the world `z` axis; the camera looks toward `-z`.
    pub center_z_m: f64,
    pub width_cm: f64,
    pub height_cm: f64,
}

impl GroundRect {
    pub fn center(&self, rig: &CameraRig) -> Vector3<f64> {
        Vector3::new(self.center_x_m, -rig.height_m(), self.center_z_m)
    }
}

/// Combined distance from a point at `depth` on normalized image coordinate
/// `c` to the two viewing planes at `c - a` and `c + a`.
fn plane_span(depth: f64, c: f64, a: f64) -> f64 {
    let g = |t: f64| 1.0 / (1.0 + t * t).sqrt();
    depth * a * (g(c - a) + g(c + a))
}

fn solve_half_extent(depth: f64, c: f64, target_m: f64, max_half: f64, axis: &str) -> Result<f64> {
    if !(target_m > 0.0) {
        return Ok(0.0);
    }
    if plane_span(depth, c, max_half) < target_m {
        return Err(GeometryError::OutOfView(format!(
            "{axis} extent {target_m} m exceeds the field of view at depth {depth} m"
        )));
    }
    let (mut lo, mut hi) = (0.0, max_half);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if plane_span(depth, c, mid) < target_m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Tight pixel box of a ground object, inverse of [`estimate_size`].
///
/// The box centre is the projection of the object's ground point and its
/// half-extents are chosen so that the bounding viewing planes enclose the
/// object's width and height.
pub fn project_to_box(rig: &CameraRig, rect: &GroundRect) -> Result<PixelBox> {
    let centre = rect.center(rig);
    let cam = rig.orientation().transpose() * (centre - rig.center());
    let depth = -cam.z;
    if !(depth > 0.0) {
        return Err(GeometryError::OutOfView("ground point is behind the camera".into()));
    }
    let (fx, fy) = focal_pixels(rig);
    let (cx, cy) = rig.principal_point();
    let (u_lim, v_lim) = (cx / fx, cy / fy);
    let (u, v) = (cam.x / depth, cam.y / depth);
    if u.abs() > u_lim || v.abs() > v_lim {
        return Err(GeometryError::OutOfView("ground point projects outside the image".into()));
    }
    let a = solve_half_extent(depth, u, rect.width_cm / M_TO_CM, u_lim - u.abs(), "width")?;
    let b = solve_half_extent(depth, v, rect.height_cm / M_TO_CM, v_lim - v.abs(), "height")?;
    PixelBox::new(cx + fx * (u - a), cy - fy * (v + b), cx + fx * (u + a), cy - fy * (v - b))
}

/// Mean change in estimated size caused by a one-pixel box shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityReport {
    pub s_width_cm: f64,
    pub s_height_cm: f64,
    /// Boxes that contributed to the means.
    pub evaluated: usize,
    /// Boxes dropped because a shifted copy left the image.
    pub skipped: usize,
}

pub fn pixel_sensitivity(rig: &CameraRig, boxes: &[PixelBox]) -> Result<SensitivityReport> {
    pixel_sensitivity_with_shift(rig, boxes, 1.0)
}

/// Per-pixel sensitivity with an arbitrary shift magnitude in pixels.
///
/// Each box is translated left, right, up and down by `shift_px`; width
/// sensitivity averages `|dim_x - dim_x'|` over the horizontal shifts, height
/// sensitivity averages `|dim_y - dim_y'|` over the vertical ones.
pub fn pixel_sensitivity_with_shift(rig: &CameraRig, boxes: &[PixelBox], shift_px: f64) -> Result<SensitivityReport> {
    if boxes.is_empty() {
        return Err(GeometryError::InvalidBox("sensitivity needs at least one box".into()));
    }
    let mut width_sum = 0.0;
    let mut height_sum = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for bbox in boxes {
        let shifted = [
            bbox.translated(-shift_px, 0.0),
            bbox.translated(shift_px, 0.0),
            bbox.translated(0.0, -shift_px),
            bbox.translated(0.0, shift_px),
        ];
        if shifted.iter().any(|b| !b.within(rig)) {
            skipped += 1;
            continue;
        }
        let base = estimate_size(rig, bbox)?;
        let [left, right, up, down] = [
            estimate_size(rig, &shifted[0])?,
            estimate_size(rig, &shifted[1])?,
            estimate_size(rig, &shifted[2])?,
            estimate_size(rig, &shifted[3])?,
        ];
        width_sum += ((base.dim_x_cm - left.dim_x_cm).abs() + (base.dim_x_cm - right.dim_x_cm).abs()) / 2.0;
        height_sum += ((base.dim_y_cm - up.dim_y_cm).abs() + (base.dim_y_cm - down.dim_y_cm).abs()) / 2.0;
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(GeometryError::OutOfView(format!(
            "all {skipped} boxes leave the image when shifted by {shift_px} px"
        )));
    }
    Ok(SensitivityReport {
        s_width_cm: width_sum / evaluated as f64,
        s_height_cm: height_sum / evaluated as f64,
        evaluated,
        skipped,
    })
}
