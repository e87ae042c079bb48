//! Detector quality metrics: IoU, greedy matching, precision, recall,
//! 101-point average precision, mAP@50, mAP@[.50:.95] and the class
//! confusion matrix with a background row and column.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PixelBox;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("class {0} has no ground truth")]
    NoGroundTruth(u32),
    #[error("ground truth set is empty")]
    EmptyGroundTruth,
    #[error("class id {class_id} does not fit a {num_classes}-class confusion matrix")]
    ClassOutOfRange { class_id: u32, num_classes: usize },
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: PixelBox,
    pub class_id: u32,
    pub confidence: f64,
    pub image_id: String,
}

impl Detection {
    pub fn new(image_id: impl Into<String>, class_id: u32, confidence: f64, bbox: PixelBox) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(EvalError::InvalidConfidence(confidence));
        }
        Ok(Self { bbox, class_id, confidence, image_id: image_id.into() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub bbox: PixelBox,
    pub class_id: u32,
    pub image_id: String,
}

impl GroundTruth {
    pub fn new(image_id: impl Into<String>, class_id: u32, bbox: PixelBox) -> Self {
        Self { bbox, class_id, image_id: image_id.into() }
    }
}

/// Intersection over union of two boxes; 0 when they do not overlap.
pub fn iou(a: &PixelBox, b: &PixelBox) -> f64 {
    let w = a.x_max().min(b.x_max()) - a.x_min().max(b.x_min());
    let h = a.y_max().min(b.y_max()) - a.y_min().max(b.y_min());
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Outcome for one detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub detection: usize,
    /// Index of the matched ground truth; `None` for a false positive.
    pub ground_truth: Option<usize>,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// One entry per detection, in input order.
    pub matches: Vec<Match>,
    /// Ground truths no detection claimed (false negatives), ascending.
    pub unmatched_ground_truth: Vec<usize>,
}

impl Matching {
    pub fn true_positives(&self) -> usize {
        self.matches.iter().filter(|m| m.ground_truth.is_some()).count()
    }
}

/// Greedy one-to-one matching per image and class.
///
/// Detections are visited by descending confidence (ties in input order); each
/// claims the unclaimed same-class ground truth with the highest IoU, provided
/// that IoU is at least `iou_thresh`.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_thresh: f64) -> Matching {
    greedy_match(dets, gts, iou_thresh, true)
}

fn greedy_match(dets: &[Detection], gts: &[GroundTruth], iou_thresh: f64, class_aware: bool) -> Matching {
    let key = |image: &str, class: u32| (image.to_owned(), if class_aware { class } else { 0 });
    let mut gt_groups: HashMap<(String, u32), Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        gt_groups.entry(key(&g.image_id, g.class_id)).or_default().push(i);
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));

    let mut claimed = vec![false; gts.len()];
    let mut matches: Vec<Match> =
        (0..dets.len()).map(|d| Match { detection: d, ground_truth: None, iou: 0.0 }).collect();
    for d in order {
        let det = &dets[d];
        let Some(candidates) = gt_groups.get(&key(&det.image_id, det.class_id)) else {
            continue;
        };
        let mut best: Option<(usize, f64)> = None;
        for &g in candidates {
            if claimed[g] {
                continue;
            }
            let overlap = iou(&det.bbox, &gts[g].bbox);
            if overlap >= iou_thresh && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        if let Some((g, overlap)) = best {
            claimed[g] = true;
            matches[d] = Match { detection: d, ground_truth: Some(g), iou: overlap };
        }
    }
    let unmatched_ground_truth = (0..gts.len()).filter(|&g| !claimed[g]).collect();
    Matching { matches, unmatched_ground_truth }
}

/// One point of a precision-recall curve, after the detection at `confidence`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision-recall curve of one class, detections ranked by confidence.
pub fn pr_curve(dets: &[Detection], gts: &[GroundTruth], class_id: u32, iou_thresh: f64) -> Result<Vec<PrPoint>> {
    let class_dets: Vec<Detection> = dets.iter().filter(|d| d.class_id == class_id).cloned().collect();
    let class_gts: Vec<GroundTruth> = gts.iter().filter(|g| g.class_id == class_id).cloned().collect();
    if class_gts.is_empty() {
        return Err(EvalError::NoGroundTruth(class_id));
    }
    let matching = match_detections(&class_dets, &class_gts, iou_thresh);
    let mut order: Vec<usize> = (0..class_dets.len()).collect();
    order.sort_by(|&a, &b| class_dets[b].confidence.total_cmp(&class_dets[a].confidence));

    let npos = class_gts.len() as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    Ok(order
        .into_iter()
        .map(|d| {
            if matching.matches[d].ground_truth.is_some() {
                tp += 1;
            } else {
                fp += 1;
            }
            PrPoint {
                confidence: class_dets[d].confidence,
                precision: tp as f64 / (tp + fp) as f64,
                recall: tp as f64 / npos,
            }
        })
        .collect())
}

/// Average precision of one class with 101-point interpolation.
///
/// Precision is replaced by its running maximum from the right, then sampled
/// at recall 0.00, 0.01, ..., 1.00 (first point reaching each recall level;
/// 0 where the curve never gets there).
pub fn average_precision(dets: &[Detection], gts: &[GroundTruth], class_id: u32, iou_thresh: f64) -> Result<f64> {
    let curve = pr_curve(dets, gts, class_id, iou_thresh)?;
    Ok(interpolated_ap(&curve))
}

fn interpolated_ap(curve: &[PrPoint]) -> f64 {
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut total = 0.0;
    for k in 0..=100 {
        let level = k as f64 / 100.0;
        let idx = curve.partition_point(|p| p.recall < level);
        if idx < curve.len() {
            total += envelope[idx];
        }
    }
    total / 101.0
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> [f64; 10] {
    std::array::from_fn(|k| (50 + 5 * k) as f64 / 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// Detections below this confidence are ignored for precision, recall and the confusion matrix.
    pub conf_thresh: f64,
    /// Number of object classes; defaults to one more than the largest class id seen.
    pub num_classes: Option<usize>,
    /// Overlap needed for a true positive in precision, recall and the confusion matrix.
    pub iou_thresh: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { conf_thresh: 0.25, num_classes: None, iou_thresh: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class_ap50: BTreeMap<u32, f64>,
    pub per_class_ap50_95: BTreeMap<u32, f64>,
    pub map50: f64,
    pub map50_95: f64,
    pub precision: f64,
    pub recall: f64,
    pub conf_thresh: f64,
    pub iou_thresh: f64,
    pub num_classes: usize,
    /// Counts indexed `[true class][predicted class]`; index `num_classes` is background.
    pub confusion: Vec<Vec<u64>>,
}

impl EvalReport {
    /// Row-normalized confusion matrix; empty rows stay zero.
    pub fn confusion_normalized(&self) -> Vec<Vec<f64>> {
        self.confusion
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter().map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 }).collect()
            })
            .collect()
    }
}

/// The full metric suite at the default IoU conventions.
pub fn map_suite(dets: &[Detection], gts: &[GroundTruth], config: &EvalConfig) -> Result<EvalReport> {
    if gts.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    let classes: BTreeSet<u32> = gts.iter().map(|g| g.class_id).collect();
    let thresholds = coco_thresholds();
    let mut per_class_ap50 = BTreeMap::new();
    let mut per_class_ap50_95 = BTreeMap::new();
    for &c in &classes {
        let aps = thresholds.iter().map(|&t| average_precision(dets, gts, c, t)).collect::<Result<Vec<f64>>>()?;
        per_class_ap50.insert(c, aps[0]);
        per_class_ap50_95.insert(c, aps.iter().sum::<f64>() / aps.len() as f64);
    }
    let mean = |m: &BTreeMap<u32, f64>| m.values().sum::<f64>() / m.len() as f64;

    let kept: Vec<Detection> = dets.iter().filter(|d| d.confidence >= config.conf_thresh).cloned().collect();
    let matching = match_detections(&kept, gts, config.iou_thresh);
    let tp = matching.true_positives() as f64;
    let precision = if kept.is_empty() { 0.0 } else { tp / kept.len() as f64 };
    let recall = tp / gts.len() as f64;

    let largest = gts.iter().map(|g| g.class_id).chain(dets.iter().map(|d| d.class_id)).max().unwrap_or(0);
    let num_classes = config.num_classes.unwrap_or(largest as usize + 1);
    let confusion = confusion_matrix(&kept, gts, num_classes, config.iou_thresh)?;

    Ok(EvalReport {
        map50: mean(&per_class_ap50),
        map50_95: mean(&per_class_ap50_95),
        per_class_ap50,
        per_class_ap50_95,
        precision,
        recall,
        conf_thresh: config.conf_thresh,
        iou_thresh: config.iou_thresh,
        num_classes,
        confusion,
    })
}

/// Class confusion counts with class-agnostic greedy matching at `iou_thresh`.
///
/// Unmatched ground truths land in the background column, unmatched
/// detections in the background row.
pub fn confusion_matrix(
    dets: &[Detection],
    gts: &[GroundTruth],
    num_classes: usize,
    iou_thresh: f64,
) -> Result<Vec<Vec<u64>>> {
    let check = |class_id: u32| {
        if (class_id as usize) < num_classes {
            Ok(class_id as usize)
        } else {
            Err(EvalError::ClassOutOfRange { class_id, num_classes })
        }
    };
    let bg = num_classes;
    let mut m = vec![vec![0u64; num_classes + 1]; num_classes + 1];
    let matching = greedy_match(dets, gts, iou_thresh, false);
    for mt in &matching.matches {
        let pred = check(dets[mt.detection].class_id)?;
        let truth = match mt.ground_truth {
            Some(g) => check(gts[g].class_id)?,
            None => bg,
        };
        m[truth][pred] += 1;
    }
    for &g in &matching.unmatched_ground_truth {
        m[check(gts[g].class_id)?][bg] += 1;
    }
    Ok(m)
}
