use crate::evaluation::GroundTruth;

use super::{LeakageError, Result};

pub const VISUAL_DIM: usize = 256;
/// Counts for classes 0, 1 and 2 plus the mean box area.
pub const ANNOTATION_DIM: usize = 4;
pub const EMBEDDING_DIM: usize = VISUAL_DIM + ANNOTATION_DIM + 1;

/// Per-image feature vector before dataset-level standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEmbedding {
    pub image_id: String,
    pub visual: Vec<f64>,
    pub annotation_features: [f64; ANNOTATION_DIM],
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
}

impl ImageEmbedding {
    /// `visual ++ annotation_features ++ [timestamp]`, unstandardized.
    pub fn raw_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(EMBEDDING_DIM);
        v.extend_from_slice(&self.visual);
        v.extend_from_slice(&self.annotation_features);
        v.push(self.timestamp);
        v
    }
}

pub fn build_embedding(
    image_id: impl Into<String>,
    visual: Vec<f64>,
    annotations: &[GroundTruth],
    timestamp: f64,
) -> Result<ImageEmbedding> {
    if visual.len() != VISUAL_DIM {
        return Err(LeakageError::WrongVisualLength(visual.len()));
    }
    let mut features = [0.0; ANNOTATION_DIM];
    for a in annotations {
        let class = a.class_id as usize;
        if class < 3 {
            features[class] += 1.0;
        }
    }
    if !annotations.is_empty() {
        features[3] = annotations.iter().map(|a| a.bbox.area()).sum::<f64>() / annotations.len() as f64;
    }
    Ok(ImageEmbedding { image_id: image_id.into(), visual, annotation_features: features, timestamp })
}

/// Zero-mean, unit-variance columns (population variance); constant columns become 0.
pub fn standardize_columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(width) = rows.first().map(Vec::len) else {
        return Vec::new();
    };
    let n = rows.len() as f64;
    let mut out = vec![vec![0.0; width]; rows.len()];
    for c in 0..width {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            continue;
        }
        for (o, r) in out.iter_mut().zip(rows) {
            o[c] = (r[c] - mean) / sd;
        }
    }
    out
}

/// Standardized full vectors for a whole dataset, one row per image.
pub fn embedding_matrix(embeddings: &[ImageEmbedding]) -> Vec<Vec<f64>> {
    let raw: Vec<Vec<f64>> = embeddings.iter().map(ImageEmbedding::raw_vector).collect();
    standardize_columns(&raw)
}
