mod common;

use approx::assert_relative_eq;
use monometry::geometry::{estimate_size, focal_pixels, pixel_ray_world, CameraRig, PixelBox};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_box(rng: &mut ChaCha8Rng, rig: &CameraRig) -> PixelBox {
    let (w, h) = (rig.image_w_px() as f64 - 1.0, rig.image_h_px() as f64 - 1.0);
    let bw = rng.random_range(2.0..w / 3.0);
    let bh = rng.random_range(2.0..h / 4.0);
    let x = rng.random_range(0.0..w - bw);
    let y = rng.random_range(h * 0.6..h - bh);
    PixelBox::new(x, y, x + bw, y + bh).unwrap()
}

#[test]
fn estimator_matches_independent_derivation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    while checked < 2000 {
        let rig = common::rig(&mut rng);
        let b = random_box(&mut rng, &rig);
        let (cx, cy) = b.center();
        if common::ray_direction(&rig, cx, cy)[1] > -1e-2 {
            continue;
        }
        let est = estimate_size(&rig, &b).unwrap();
        let (w, h) = common::reference_size(&rig, &b);
        assert_relative_eq!(est.dim_x_cm(), w, max_relative = 1e-9);
        assert_relative_eq!(est.dim_y_cm(), h, max_relative = 1e-9);
        checked += 1;
    }
}

#[test]
fn pixel_rays_match_independent_derivation() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..1000 {
        let rig = common::rig(&mut rng);
        let x = rng.random_range(0.0..rig.image_w_px() as f64);
        let y = rng.random_range(0.0..rig.image_h_px() as f64);
        let d = pixel_ray_world(&rig, x, y).direction();
        let r = common::ray_direction(&rig, x, y);
        for k in 0..3 {
            assert!((d[k] - r[k]).abs() < 1e-12, "{d:?} vs {r:?}");
        }
    }
}

#[test]
fn focal_pixels_of_reference_camera() {
    // 2048 * 2.8 / 5.37 = 573440 / 537 and 1536 * 2.8 / 4.04 = 107520 / 101.
    let rig = CameraRig::new(2.8, 5.37, 4.04, 2048, 1536, 4.5, 0.6).unwrap();
    let (fx, fy) = focal_pixels(&rig);
    assert_relative_eq!(fx, 573440.0 / 537.0, max_relative = 1e-14);
    assert_relative_eq!(fy, 107520.0 / 101.0, max_relative = 1e-14);
}

#[test]
fn point_plane_distance_matches_grid_search() {
    // Minimizes |p - (s a + t b)| over a refining grid instead of solving for it.
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..50 {
        let v = |rng: &mut ChaCha8Rng| {
            [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]
        };
        let (p, a, b) = (v(&mut rng), v(&mut rng), v(&mut rng));
        let dist = |s: f64, t: f64| (0..3).map(|k| (p[k] - s * a[k] - t * b[k]).powi(2)).sum::<f64>().sqrt();
        let (mut s, mut t, mut step) = (0.0, 0.0, 8.0);
        while step > 1e-10 {
            let mut best = (dist(s, t), s, t);
            for ds in [-step, 0.0, step] {
                for dt in [-step, 0.0, step] {
                    let d = dist(s + ds, t + dt);
                    if d < best.0 {
                        best = (d, s + ds, t + dt);
                    }
                }
            }
            if best.1 == s && best.2 == t {
                step /= 2.0;
            }
            (s, t) = (best.1, best.2);
        }
        let plane = monometry::geometry::plane_from_point_vectors(
            nalgebra::Vector3::zeros(),
            nalgebra::Vector3::from(a),
            nalgebra::Vector3::from(b),
        )
        .unwrap();
        let lib = monometry::geometry::point_plane_distance(&nalgebra::Vector3::from(p), &plane);
        assert!((lib - dist(s, t)).abs() < 1e-6, "{lib} vs {}", dist(s, t));
        assert!((lib - common::distance_to_span(p, a, b)).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn sizes_grow_with_the_box(seed in 0u64..10_000, grow in 1.0f64..40.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rig = common::rig(&mut rng);
        let b = random_box(&mut rng, &rig);
        let (cx, cy) = b.center();
        prop_assume!(common::ray_direction(&rig, cx, cy)[1] < -1e-2);
        let wider = PixelBox::new(b.x_min() - grow, b.y_min(), b.x_max() + grow, b.y_max()).unwrap();
        let (small, large) = (estimate_size(&rig, &b).unwrap(), estimate_size(&rig, &wider).unwrap());
        prop_assert!(large.dim_x_cm() > small.dim_x_cm());
        prop_assert!(small.dim_x_cm() > 0.0 && small.dim_y_cm() > 0.0);
    }
}
