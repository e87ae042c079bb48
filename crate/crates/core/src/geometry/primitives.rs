use nalgebra::Vector3;

use super::{GeometryError, Result, DEGENERACY_TOL};

/// Half-line `origin + t * direction`, `t >= 0`, with a unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    origin: Vector3<f64>,
    direction: Vector3<f64>,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Result<Self> {
        finite("ray origin", &origin)?;
        finite("ray direction", &direction)?;
        let norm = direction.norm();
        if !(norm > DEGENERACY_TOL) {
            return Err(GeometryError::DegenerateVectors { norm });
        }
        if !norm.is_finite() {
            return Err(GeometryError::NonFinite("ray direction norm"));
        }
        Ok(Self { origin, direction: direction / norm })
    }

    /// Caller guarantees a finite origin and a unit direction.
    pub(crate) fn from_unit(origin: Vector3<f64>, direction: Vector3<f64>) -> Self {
        Self { origin, direction }
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn direction(&self) -> Vector3<f64> {
        self.direction
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }

    /// Ray parameter and point where the ray meets `plane`.
    pub fn intersect(&self, plane: &Plane) -> Result<(f64, Vector3<f64>)> {
        let denom = plane.normal.dot(&self.direction);
        if denom.abs() <= DEGENERACY_TOL {
            return Err(GeometryError::ParallelRay { dot: denom.abs() });
        }
        let t = -(plane.normal.dot(&self.origin) + plane.offset) / denom;
        if !t.is_finite() {
            return Err(GeometryError::NonFinite("intersection parameter"));
        }
        if t < 0.0 {
            return Err(GeometryError::BehindCamera { t });
        }
        let p = self.at(t);
        finite("intersection point", &p)?;
        Ok((t, p))
    }
}

/// Plane in implicit form `n . x + d = 0` with unit normal `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    normal: Vector3<f64>,
    offset: f64,
}

impl Plane {
    /// Plane through `point` with the given normal; the normal is normalized.
    pub fn from_normal_point(normal: Vector3<f64>, point: Vector3<f64>) -> Result<Self> {
        finite("plane normal", &normal)?;
        finite("plane point", &point)?;
        let norm = normal.norm();
        if !(norm > DEGENERACY_TOL) {
            return Err(GeometryError::DegenerateVectors { norm });
        }
        if !norm.is_finite() {
            return Err(GeometryError::NonFinite("plane normal norm"));
        }
        Plane::checked(normal / norm, &point)
    }

    fn checked(normal: Vector3<f64>, point: &Vector3<f64>) -> Result<Self> {
        let offset = -normal.dot(point);
        if !offset.is_finite() {
            return Err(GeometryError::NonFinite("plane offset"));
        }
        Ok(Self { normal, offset })
    }

    /// Caller guarantees `normal` is unit length.
    pub(crate) fn from_raw(normal: Vector3<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }
}

fn finite(what: &'static str, v: &Vector3<f64>) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(GeometryError::NonFinite(what))
    }
}

/// Plane through `p0` spanned by `v1` and `v2`.
pub fn plane_from_point_vectors(p0: Vector3<f64>, v1: Vector3<f64>, v2: Vector3<f64>) -> Result<Plane> {
    finite("plane point", &p0)?;
    finite("spanning vector", &v1)?;
    finite("spanning vector", &v2)?;
    let cross = v1.cross(&v2);
    let norm = cross.norm();
    if !norm.is_finite() {
        return Err(GeometryError::NonFinite("spanning vector cross product"));
    }
    if !(norm > DEGENERACY_TOL) {
        return Err(GeometryError::DegenerateVectors { norm });
    }
    Plane::checked(cross / norm, &p0)
}

pub fn ray_plane_intersection(ray: &Ray, plane: &Plane) -> Result<Vector3<f64>> {
    ray.intersect(plane).map(|(_, p)| p)
}

/// Unsigned point-to-plane distance `|n . p + d|`.
pub fn point_plane_distance(p: &Vector3<f64>, plane: &Plane) -> f64 {
    plane.signed_distance(p).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn canonical_planes() {
        let p = plane_from_point_vectors(v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.)).unwrap();
        assert_eq!(p.normal(), v(0., 0., 1.));
        assert_eq!(p.offset(), 0.0);
        let p = plane_from_point_vectors(v(0., 0., -5.), v(1., 0., 0.), v(0., 1., 0.)).unwrap();
        assert_eq!(p.normal(), v(0., 0., 1.));
        assert_eq!(p.offset(), 5.0);
    }

    #[test]
    fn colinear_vectors_are_rejected() {
        let err = plane_from_point_vectors(v(1., 2., 3.), v(1., 1., 0.), v(2., 2., 0.)).unwrap_err();
        assert!(matches!(err, GeometryError::DegenerateVectors { .. }));
        let err = plane_from_point_vectors(v(0., 0., 0.), v(f64::NAN, 0., 0.), v(0., 1., 0.)).unwrap_err();
        assert_eq!(err, GeometryError::NonFinite("spanning vector"));
        assert!(matches!(Ray::new(v(0., 0., 0.), v(0., 0., 0.)), Err(GeometryError::DegenerateVectors { .. })));
        assert!(Ray::new(v(f64::INFINITY, 0., 0.), v(0., 0., 1.)).is_err());
        assert!(Plane::from_normal_point(v(0., 1., 0.), v(0., f64::NAN, 0.)).is_err());
    }

    #[test]
    fn axis_aligned_intersection() {
        let ground = Plane::from_normal_point(v(0., 1., 0.), v(0., -2., 0.)).unwrap();
        let ray = Ray::new(v(0., 0., 0.), v(0., -1., 0.)).unwrap();
        let (t, p) = ray.intersect(&ground).unwrap();
        assert_eq!(t, 2.0);
        assert_eq!(p, v(0., -2., 0.));

        let flat = Ray::new(v(0., 0., 0.), v(0., 0., -1.)).unwrap();
        assert!(matches!(ray_plane_intersection(&flat, &ground), Err(GeometryError::ParallelRay { .. })));

        let up = Ray::new(v(0., 0., 0.), v(0., 1., 0.)).unwrap();
        assert!(matches!(ray_plane_intersection(&up, &ground), Err(GeometryError::BehindCamera { .. })));
    }

    #[test]
    fn distances() {
        let p = Plane::from_normal_point(v(0., 1., 0.), v(0., 0., 0.)).unwrap();
        assert_eq!(point_plane_distance(&v(0., 3., 0.), &p), 3.0);
        assert_eq!(point_plane_distance(&v(7., 0., -2.), &p), 0.0);
        assert_eq!(point_plane_distance(&v(0., -3., 0.), &p), 3.0);
    }

    fn vec3() -> impl Strategy<Value = Vector3<f64>> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| v(x, y, z))
    }

    proptest! {
        #[test]
        fn constructed_plane_contains_its_spanning_points(p0 in vec3(), v1 in vec3(), v2 in vec3()) {
            prop_assume!(v1.cross(&v2).norm() > 1e-3);
            let plane = plane_from_point_vectors(p0, v1, v2).unwrap();
            prop_assert!((plane.normal().norm() - 1.0).abs() < 1e-12);
            for q in [p0, p0 + v1, p0 + v2] {
                prop_assert!(plane.signed_distance(&q).abs() < 1e-9);
            }
        }

        #[test]
        fn intersection_lies_on_ray_and_plane(o in vec3(), d in vec3(), n in vec3(), q in vec3()) {
            prop_assume!(d.norm() > 1e-3 && n.norm() > 1e-3);
            let ray = Ray::new(o, d).unwrap();
            let plane = Plane::from_normal_point(n, q).unwrap();
            prop_assume!(plane.normal().dot(&ray.direction()).abs() > 1e-2);
            match ray.intersect(&plane) {
                Ok((t, p)) => {
                    prop_assert!(t >= 0.0);
                    prop_assert!(plane.signed_distance(&p).abs() < 1e-9);
                    prop_assert!((ray.at(t) - p).norm() < 1e-12);
                }
                Err(GeometryError::BehindCamera { t }) => prop_assert!(t < 0.0),
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }

        #[test]
        fn distance_is_the_distance_to_the_foot_point(p in vec3(), n in vec3(), q in vec3()) {
            prop_assume!(n.norm() > 1e-3);
            let plane = Plane::from_normal_point(n, q).unwrap();
            let d = point_plane_distance(&p, &plane);
            let foot = p - plane.normal() * plane.signed_distance(&p);
            prop_assert!(plane.signed_distance(&foot).abs() < 1e-9);
            assert_relative_eq!(d, (p - foot).norm(), epsilon = 1e-9);
        }
    }
}
