use nalgebra::{Matrix3, Vector3};

use super::{GeometryError, Ray, Result};

/// Intrinsics and installation pose of a fixed camera above the water.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    focal_mm: f64,
    sensor_w_mm: f64,
    sensor_h_mm: f64,
    image_w_px: u32,
    image_h_px: u32,
    height_m: f64,
    pitch_rad: f64,
}

impl CameraRig {
    pub fn new(
        focal_mm: f64,
        sensor_w_mm: f64,
        sensor_h_mm: f64,
        image_w_px: u32,
        image_h_px: u32,
        height_m: f64,
        pitch_rad: f64,
    ) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(GeometryError::InvalidRig(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        positive("focal_mm", focal_mm)?;
        positive("sensor_w_mm", sensor_w_mm)?;
        positive("sensor_h_mm", sensor_h_mm)?;
        positive("height_m", height_m)?;
        if image_w_px < 2 || image_h_px < 2 {
            return Err(GeometryError::InvalidRig(format!(
                "image must be at least 2x2 pixels, got {image_w_px}x{image_h_px}"
            )));
        }
        if !(pitch_rad.is_finite() && pitch_rad > 0.0 && pitch_rad < std::f64::consts::FRAC_PI_2) {
            return Err(GeometryError::InvalidRig(format!(
                "pitch must lie strictly between 0 and pi/2 rad, got {pitch_rad}"
            )));
        }
        Ok(Self { focal_mm, sensor_w_mm, sensor_h_mm, image_w_px, image_h_px, height_m, pitch_rad })
    }

    pub fn focal_mm(&self) -> f64 {
        self.focal_mm
    }

    pub fn sensor_w_mm(&self) -> f64 {
        self.sensor_w_mm
    }

    pub fn sensor_h_mm(&self) -> f64 {
        self.sensor_h_mm
    }

    pub fn image_w_px(&self) -> u32 {
        self.image_w_px
    }

    pub fn image_h_px(&self) -> u32 {
        self.image_h_px
    }

    pub fn height_m(&self) -> f64 {
        self.height_m
    }

    pub fn pitch_rad(&self) -> f64 {
        self.pitch_rad
    }

    /// Image centre `((W-1)/2, (H-1)/2)` in pixel coordinates.
    pub fn principal_point(&self) -> (f64, f64) {
        ((self.image_w_px as f64 - 1.0) / 2.0, (self.image_h_px as f64 - 1.0) / 2.0)
    }

    /// The water surface, `y = -height_m`.
    pub fn ground_plane(&self) -> super::Plane {
        super::Plane::from_raw(Vector3::new(0.0, 1.0, 0.0), self.height_m)
    }

    /// Optical centre in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        Vector3::zeros()
    }

    /// Camera-to-world rotation.
    pub fn orientation(&self) -> Matrix3<f64> {
        pitch_rotation(-self.pitch_rad)
    }

    pub fn contains_pixel(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= self.image_w_px as f64 - 1.0 && y <= self.image_h_px as f64 - 1.0
    }
}

/// Focal length in pixels along each image axis: `(W f / w_s, H f / h_s)`.
pub fn focal_pixels(rig: &CameraRig) -> (f64, f64) {
    (rig.image_w_px as f64 * rig.focal_mm / rig.sensor_w_mm, rig.image_h_px as f64 * rig.focal_mm / rig.sensor_h_mm)
}

/// Unit direction of the ray through a pixel, in the camera frame.
///
/// Image `y` grows downward while camera `y` grows upward, hence the flip.
pub fn pixel_ray_local(rig: &CameraRig, x_pix: f64, y_pix: f64) -> Vector3<f64> {
    let (fx, fy) = focal_pixels(rig);
    let (cx, cy) = rig.principal_point();
    Vector3::new((x_pix - cx) / fx, (cy - y_pix) / fy, -1.0).normalize()
}

/// Rotation about the horizontal `x` axis.
pub fn pitch_rotation(phi: f64) -> Matrix3<f64> {
    let (s, c) = phi.sin_cos();
    Matrix3::new(
        1.0, 0.0, 0.0, //
        0.0, c, -s, //
        0.0, s, c,
    )
}

/// World-frame ray from the optical centre through a pixel.
pub fn pixel_ray_world(rig: &CameraRig, x_pix: f64, y_pix: f64) -> Ray {
    let local = pixel_ray_local(rig, x_pix, y_pix);
    Ray::from_unit(rig.center(), rig.orientation() * local)
}

/// Axis-aligned bounding box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    class_id: Option<u32>,
    confidence: Option<f64>,
}

impl PixelBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidBox("non-finite coordinate".into()));
        }
        if !(x_min < x_max && y_min < y_max) {
            return Err(GeometryError::InvalidBox(format!("empty box [{x_min}, {y_min}, {x_max}, {y_max}]")));
        }
        Ok(Self { x_min, y_min, x_max, y_max, class_id: None, confidence: None })
    }

    pub fn with_class(mut self, class_id: u32) -> Self {
        self.class_id = Some(class_id);
        self
    }

    pub fn with_confidence(mut self, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(GeometryError::InvalidBox(format!("confidence {confidence} outside [0, 1]")));
        }
        self.confidence = Some(confidence);
        Ok(self)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn class_id(&self) -> Option<u32> {
        self.class_id
    }

    pub fn confidence(&self) -> Option<f64> {
        self.confidence
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    /// The same box moved by `(dx, dy)` pixels.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self { x_min: self.x_min + dx, x_max: self.x_max + dx, y_min: self.y_min + dy, y_max: self.y_max + dy, ..*self }
    }

    /// True when every corner lies inside `[0, W-1] x [0, H-1]`.
    pub fn within(&self, rig: &CameraRig) -> bool {
        rig.contains_pixel(self.x_min, self.y_min) && rig.contains_pixel(self.x_max, self.y_max)
    }

    pub(crate) fn corners(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}
