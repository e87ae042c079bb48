//! Reference implementations and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use monometry::evaluation::{Detection, GroundTruth};
use monometry::geometry::{estimate_size, CameraRig, PixelBox};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rig(rng: &mut ChaCha8Rng) -> CameraRig {
    let focal = rng.random_range(2.0..12.0);
    let sensor_w = rng.random_range(3.0..9.0);
    let aspect = rng.random_range(0.5..0.9);
    let w: u32 = rng.random_range(320..4096);
    let h = ((w as f64 * aspect) as u32).max(2);
    let height = rng.random_range(1.0..10.0);
    let pitch = rng.random_range(5.0f64..80.0).to_radians();
    CameraRig::new(focal, sensor_w, sensor_w * aspect, w, h, height, pitch).unwrap()
}

// ---------------------------------------------------------------- geometry

type V3 = [f64; 3];

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// World ray direction of a pixel, derived directly from the pinhole relations.
pub fn ray_direction(rig: &CameraRig, x: f64, y: f64) -> V3 {
    let w = rig.image_w_px() as f64;
    let h = rig.image_h_px() as f64;
    let fx = w * rig.focal_mm() / rig.sensor_w_mm();
    let fy = h * rig.focal_mm() / rig.sensor_h_mm();
    let u = (x - (w - 1.0) / 2.0) / fx;
    let v = ((h - 1.0) / 2.0 - y) / fy;
    // Tilting the optical axis (0, 0, -1) down by the pitch angle.
    let (s, c) = rig.pitch_rad().sin_cos();
    let d = [u, v * c - s, -v * s - c];
    scale(d, 1.0 / dot(d, d).sqrt())
}

/// Distance from `p` to the plane through the origin spanned by `a` and `b`,
/// as the residual of the least-squares fit `p ~ s a + t b`.
pub fn distance_to_span(p: V3, a: V3, b: V3) -> f64 {
    let (aa, ab, bb) = (dot(a, a), dot(a, b), dot(b, b));
    let (pa, pb) = (dot(p, a), dot(p, b));
    let det = aa * bb - ab * ab;
    let s = (pa * bb - pb * ab) / det;
    let t = (pb * aa - pa * ab) / det;
    let r = sub(p, [s * a[0] + t * b[0], s * a[1] + t * b[1], s * a[2] + t * b[2]]);
    dot(r, r).sqrt()
}

/// Width and height in centimetres from a second, independently written estimator.
pub fn reference_size(rig: &CameraRig, b: &PixelBox) -> (f64, f64) {
    let (x0, y0, x1, y1) = (b.x_min(), b.y_min(), b.x_max(), b.y_max());
    let tl = ray_direction(rig, x0, y0);
    let tr = ray_direction(rig, x1, y0);
    let bl = ray_direction(rig, x0, y1);
    let br = ray_direction(rig, x1, y1);
    let d = ray_direction(rig, (x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let o = scale(d, -rig.height_m() / d[1]);
    let width = distance_to_span(o, tl, bl) + distance_to_span(o, tr, br);
    let height = distance_to_span(o, tl, tr) + distance_to_span(o, bl, br);
    (width * 100.0, height * 100.0)
}

/// Mean absolute size change under one-pixel translations, written out term by term.
///
/// Returns `(s_width, s_height, evaluated)`; boxes whose shifted copies leave
/// the image are dropped.
pub fn brute_sensitivity(rig: &CameraRig, boxes: &[PixelBox], shift: f64) -> Option<(f64, f64, usize)> {
    let w = rig.image_w_px() as f64 - 1.0;
    let h = rig.image_h_px() as f64 - 1.0;
    let mut sw = Vec::new();
    let mut sh = Vec::new();
    for b in boxes {
        let inside =
            b.x_min() - shift >= 0.0 && b.x_max() + shift <= w && b.y_min() - shift >= 0.0 && b.y_max() + shift <= h;
        if !inside {
            continue;
        }
        let dims = |dx: f64, dy: f64| {
            let moved = PixelBox::new(b.x_min() + dx, b.y_min() + dy, b.x_max() + dx, b.y_max() + dy).unwrap();
            let e = estimate_size(rig, &moved).unwrap();
            (e.dim_x_cm(), e.dim_y_cm())
        };
        let (w0, h0) = dims(0.0, 0.0);
        let dw = (w0 - dims(-shift, 0.0).0).abs() + (w0 - dims(shift, 0.0).0).abs();
        let dh = (h0 - dims(0.0, -shift).1).abs() + (h0 - dims(0.0, shift).1).abs();
        sw.push(dw / 2.0);
        sh.push(dh / 2.0);
    }
    if sw.is_empty() {
        return None;
    }
    let n = sw.len() as f64;
    Some((sw.iter().sum::<f64>() / n, sh.iter().sum::<f64>() / n, sw.len()))
}

// -------------------------------------------------------------- evaluation

pub fn overlap(a: &PixelBox, b: &PixelBox) -> f64 {
    let iw = a.x_max().min(b.x_max()) - a.x_min().max(b.x_min());
    let ih = a.y_max().min(b.y_max()) - a.y_min().max(b.y_min());
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / (a.area() + b.area() - inter)
}

/// Detection indices by descending confidence, ties in input order.
fn ranked(dets: &[&Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.partial_cmp(&dets[a].confidence).unwrap());
    order
}

fn search(
    k: usize,
    order: &[usize],
    iou: &[Vec<f64>],
    thresh: f64,
    used: &mut Vec<bool>,
    current: &mut Vec<Option<(usize, f64)>>,
    best: &mut Option<Vec<Option<(usize, f64)>>>,
) {
    if k == order.len() {
        let score = |v: &[Option<(usize, f64)>]| v.iter().map(|m| m.map_or(0.0, |(_, x)| x)).collect::<Vec<f64>>();
        let better = match best {
            None => true,
            Some(b) => score(current).partial_cmp(&score(b)) == Some(std::cmp::Ordering::Greater),
        };
        if better {
            *best = Some(current.clone());
        }
        return;
    }
    let d = order[k];
    current.push(None);
    search(k + 1, order, iou, thresh, used, current, best);
    current.pop();
    for g in 0..used.len() {
        if !used[g] && iou[d][g] >= thresh {
            used[g] = true;
            current.push(Some((g, iou[d][g])));
            search(k + 1, order, iou, thresh, used, current, best);
            current.pop();
            used[g] = false;
        }
    }
}

/// Exhaustive one-to-one matching: among all assignments within each image
/// and class, the one whose confidence-ordered IoU vector is lexicographically
/// largest. Returns the matched ground truth index of every detection.
pub fn exhaustive_match(dets: &[Detection], gts: &[GroundTruth], thresh: f64) -> Vec<Option<usize>> {
    let mut groups: BTreeMap<(String, u32), (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        groups.entry((d.image_id.clone(), d.class_id)).or_default().0.push(i);
    }
    for (i, g) in gts.iter().enumerate() {
        groups.entry((g.image_id.clone(), g.class_id)).or_default().1.push(i);
    }
    let mut out = vec![None; dets.len()];
    for (d_idx, g_idx) in groups.values() {
        if d_idx.is_empty() {
            continue;
        }
        let group_dets: Vec<&Detection> = d_idx.iter().map(|&i| &dets[i]).collect();
        let iou: Vec<Vec<f64>> =
            group_dets.iter().map(|d| g_idx.iter().map(|&g| overlap(&d.bbox, &gts[g].bbox)).collect()).collect();
        let order = ranked(&group_dets);
        let mut best = None;
        search(0, &order, &iou, thresh, &mut vec![false; g_idx.len()], &mut Vec::new(), &mut best);
        for (k, m) in best.unwrap().into_iter().enumerate() {
            out[d_idx[order[k]]] = m.map(|(g, _)| g_idx[g]);
        }
    }
    out
}

/// 101-point interpolated AP of one class, straight from the definition.
pub fn brute_ap(dets: &[Detection], gts: &[GroundTruth], class_id: u32, thresh: f64) -> f64 {
    let cd: Vec<Detection> = dets.iter().filter(|d| d.class_id == class_id).cloned().collect();
    let cg: Vec<GroundTruth> = gts.iter().filter(|g| g.class_id == class_id).cloned().collect();
    let matched = exhaustive_match(&cd, &cg, thresh);
    let order = ranked(&cd.iter().collect::<Vec<_>>());
    let mut points = Vec::new();
    let mut tp = 0.0;
    for (rank, &d) in order.iter().enumerate() {
        if matched[d].is_some() {
            tp += 1.0;
        }
        points.push((tp / cg.len() as f64, tp / (rank + 1) as f64));
    }
    (0..=100)
        .map(|k| {
            let r = k as f64 / 100.0;
            points.iter().filter(|(rec, _)| *rec >= r).map(|(_, p)| *p).fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 101.0
}

pub struct BruteReport {
    pub precision: f64,
    pub recall: f64,
    pub ap50: BTreeMap<u32, f64>,
    pub ap50_95: BTreeMap<u32, f64>,
    pub map50: f64,
    pub map50_95: f64,
}

pub fn brute_eval(dets: &[Detection], gts: &[GroundTruth], conf_thresh: f64, iou_thresh: f64) -> BruteReport {
    let kept: Vec<Detection> = dets.iter().filter(|d| d.confidence >= conf_thresh).cloned().collect();
    let tp = exhaustive_match(&kept, gts, iou_thresh).iter().filter(|m| m.is_some()).count() as f64;
    let precision = if kept.is_empty() { 0.0 } else { tp / kept.len() as f64 };
    let recall = tp / gts.len() as f64;
    let mut classes: Vec<u32> = gts.iter().map(|g| g.class_id).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut ap50 = BTreeMap::new();
    let mut ap50_95 = BTreeMap::new();
    for &c in &classes {
        ap50.insert(c, brute_ap(dets, gts, c, 0.5));
        let all: f64 = (0..10).map(|k| brute_ap(dets, gts, c, 0.5 + 0.05 * k as f64)).sum();
        ap50_95.insert(c, all / 10.0);
    }
    let n = classes.len() as f64;
    BruteReport {
        precision,
        recall,
        map50: ap50.values().sum::<f64>() / n,
        map50_95: ap50_95.values().sum::<f64>() / n,
        ap50,
        ap50_95,
    }
}

/// Up to three images with up to five ground truths and five detections each.
pub fn micro_dataset(rng: &mut ChaCha8Rng) -> (Vec<Detection>, Vec<GroundTruth>) {
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    let images = rng.random_range(1..=3);
    for img in 0..images {
        let id = format!("img{img}");
        let n_gt = rng.random_range(if img == 0 { 1 } else { 0 }..=5);
        let mut boxes = Vec::new();
        for _ in 0..n_gt {
            let x = rng.random_range(0.0..80.0);
            let y = rng.random_range(0.0..80.0);
            let b = PixelBox::new(x, y, x + rng.random_range(5.0..30.0), y + rng.random_range(5.0..30.0)).unwrap();
            gts.push(GroundTruth::new(id.clone(), rng.random_range(0..3), b));
            boxes.push(b);
        }
        for _ in 0..rng.random_range(0..=5) {
            let b = if !boxes.is_empty() && rng.random_bool(0.7) {
                let base = boxes[rng.random_range(0..boxes.len())];
                let j = |rng: &mut ChaCha8Rng| rng.random_range(-4.0..4.0);
                let (x0, y0) = (base.x_min() + j(rng), base.y_min() + j(rng));
                PixelBox::new(x0, y0, x0 + base.width() + j(rng).abs(), y0 + base.height() + j(rng).abs()).unwrap()
            } else {
                let x = rng.random_range(0.0..80.0);
                let y = rng.random_range(0.0..80.0);
                PixelBox::new(x, y, x + rng.random_range(5.0..30.0), y + rng.random_range(5.0..30.0)).unwrap()
            };
            let class = rng.random_range(0..3);
            dets.push(Detection::new(id.clone(), class, rng.random_range(0.0..1.0), b).unwrap());
        }
    }
    (dets, gts)
}

// ----------------------------------------------------------------- dbscan

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    parent[i] = r;
    r
}

/// Quadratic DBSCAN: core points joined by union-find, border points attached
/// to the neighbouring component whose smallest core index is lowest.
pub fn brute_dbscan(points: &[[f64; 2]], eps: f64, min_samples: usize) -> Vec<i32> {
    let n = points.len();
    let near = |i: usize, j: usize| {
        let (a, b) = (points[i], points[j]);
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) <= eps * eps
    };
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_samples).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                let (lo, hi) = (a.min(b), a.max(b));
                parent[hi] = lo;
            }
        }
    }
    // Roots are the smallest index of each component, so root order is discovery order.
    let roots: Vec<Option<usize>> = (0..n).map(|i| core[i].then(|| find(&mut parent, i))).collect();
    let mut sorted: Vec<usize> = roots.iter().flatten().copied().collect();
    sorted.sort_unstable();
    sorted.dedup();
    let label_of: BTreeMap<usize, i32> = sorted.into_iter().enumerate().map(|(k, r)| (r, k as i32)).collect();
    (0..n)
        .map(|i| match roots[i] {
            Some(r) => label_of[&r],
            None => {
                (0..n).filter(|&j| core[j] && near(i, j)).map(|j| roots[j].unwrap()).min().map_or(-1, |r| label_of[&r])
            }
        })
        .collect()
}

/// True when the two labelings describe the same partition and agree on noise.
pub fn same_partition(a: &[i32], b: &[i32]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = BTreeMap::new();
    let mut back = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if (x == -1) != (y == -1) {
            return false;
        }
        if *fwd.entry(x).or_insert(y) != y || *back.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 2]> {
    let centres: Vec<[f64; 2]> =
        (0..rng.random_range(1..6)).map(|_| [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)]).collect();
    (0..n)
        .map(|_| {
            if rng.random_bool(0.2) {
                [rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0)]
            } else {
                let c = centres[rng.random_range(0..centres.len())];
                [c[0] + rng.random_range(-3.0..3.0), c[1] + rng.random_range(-3.0..3.0)]
            }
        })
        .collect()
}
