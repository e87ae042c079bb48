//! Two-stage regression correction of estimated object sizes.
//!
//! Stage one maps sizes computed on detector boxes onto sizes computed on
//! hand-annotated boxes (box-shape correction); stage two maps geometric
//! estimates onto measured object dimensions (dimension correction). Width
//! and height are corrected by independent polynomial models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{SizeEstimate, SizeStage};

/// Corrected sizes never drop below this many centimetres.
pub const MIN_CORRECTED_CM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorrectionError {
    #[error("need at least {needed} samples for degree {degree}, got {got}")]
    InsufficientSamples { degree: usize, needed: usize, got: usize },
    #[error("design matrix is numerically singular (inputs too clustered for degree {degree})")]
    RankDeficient { degree: usize },
    #[error("unsupported polynomial degree {0} (expected 1 or 2)")]
    UnsupportedDegree(usize),
    #[error("invalid sample {id}: predicted {predicted} / reference {reference} must be finite and > 0")]
    InvalidSample { id: String, predicted: f64, reference: f64 },
    #[error("{expected:?} model expected, got a model for {found:?} ({stage:?} stage)")]
    AxisMismatch { expected: Axis, found: Axis, stage: CorrectionStage },
    #[error("model fitted for the {found:?} stage used as {expected:?} correction")]
    StageMismatch { expected: CorrectionStage, found: CorrectionStage },
    #[error("error report needs at least one sample")]
    EmptyInput,
}

pub type Result<T> = std::result::Result<T, CorrectionError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Width,
    Height,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionStage {
    BoxShape,
    Dimension,
}

/// One predicted/reference size pair, in centimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub predicted: f64,
    pub reference: f64,
    pub object_id: String,
}

impl PairedSample {
    pub fn new(object_id: impl Into<String>, predicted: f64, reference: f64) -> Result<Self> {
        let object_id = object_id.into();
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(predicted) && ok(reference)) {
            return Err(CorrectionError::InvalidSample { id: object_id, predicted, reference });
        }
        Ok(Self { predicted, reference, object_id })
    }
}

/// Fitted polynomial `sum_k c_k x^k` for one axis and one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionModel {
    pub degree: usize,
    /// Constant term first.
    pub coefficients: Vec<f64>,
    pub axis: Axis,
    pub stage: CorrectionStage,
    pub fit_range: [f64; 2],
}

/// Result of applying a model to one value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corrected {
    pub value: f64,
    /// The raw polynomial value fell below [`MIN_CORRECTED_CM`].
    pub clamped: bool,
    /// The input lay outside the model's fit range.
    pub extrapolated: bool,
}

impl CorrectionModel {
    pub fn identity(axis: Axis, stage: CorrectionStage) -> Self {
        Self { degree: 1, coefficients: vec![0.0, 1.0], axis, stage, fit_range: [0.0, f64::MAX] }
    }

    pub fn polynomial(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    fn derivative(&self, x: f64) -> f64 {
        self.coefficients.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, c)| acc * x + k as f64 * c)
    }

    pub fn apply(&self, predicted: f64) -> f64 {
        self.apply_flagged(predicted).value
    }

    pub fn apply_flagged(&self, predicted: f64) -> Corrected {
        let raw = self.polynomial(predicted);
        let clamped = !(raw >= MIN_CORRECTED_CM);
        let [lo, hi] = self.fit_range;
        Corrected {
            value: if clamped { MIN_CORRECTED_CM } else { raw },
            clamped,
            extrapolated: predicted < lo || predicted > hi,
        }
    }

    /// True when the polynomial is strictly increasing over the fit range.
    ///
    /// For degree 2 the derivative is linear, so checking both range ends suffices.
    pub fn is_monotone(&self) -> bool {
        let [lo, hi] = self.fit_range;
        self.derivative(lo) > 0.0 && self.derivative(hi) > 0.0
    }
}

/// Least-squares polynomial fit of `reference` against `predicted`.
pub fn fit(samples: &[PairedSample], degree: usize, axis: Axis, stage: CorrectionStage) -> Result<CorrectionModel> {
    if !(1..=2).contains(&degree) {
        return Err(CorrectionError::UnsupportedDegree(degree));
    }
    let needed = degree + 2;
    if samples.len() < needed {
        return Err(CorrectionError::InsufficientSamples { degree, needed, got: samples.len() });
    }
    let x: Vec<f64> = samples.iter().map(|s| s.predicted).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.reference).collect();
    let coefficients = least_squares_poly(&x, &y, degree)?;
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let model = CorrectionModel { degree, coefficients, axis, stage, fit_range: [lo, hi] };
    if !model.is_monotone() {
        log::warn!("{axis:?} {stage:?} correction is not monotone over [{lo}, {hi}]: {:?}", model.coefficients);
    }
    Ok(model)
}

/// Polynomial least squares via Householder QR.
///
/// Inputs are centred and scaled to `[-1, 1]` before factorization; the
/// coefficients are mapped back to the raw variable afterwards.
fn least_squares_poly(x: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let half = (hi - lo) / 2.0;
    if !(half > 0.0) || !half.is_finite() {
        return Err(CorrectionError::RankDeficient { degree });
    }
    let mid = (hi + lo) / 2.0;
    let n = x.len();
    let cols = degree + 1;
    let design = DMatrix::from_fn(n, cols, |i, k| ((x[i] - mid) / half).powi(k as i32));
    let rhs = DVector::from_column_slice(y);

    let qr = design.qr();
    let r = qr.r();
    let max_diag = (0..cols).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
    if (0..cols).any(|k| r[(k, k)].abs() <= 1e-10 * max_diag.max(f64::MIN_POSITIVE)) {
        return Err(CorrectionError::RankDeficient { degree });
    }
    let qty = qr.q().transpose() * rhs;
    let scaled = r.solve_upper_triangular(&qty).ok_or(CorrectionError::RankDeficient { degree })?;

    // p(x) = sum_k b_k ((x - mid) / half)^k, expanded binomially into powers of x.
    let mut coefficients = vec![0.0; cols];
    for (k, b) in scaled.iter().enumerate() {
        let scale = b / half.powi(k as i32);
        for j in 0..=k {
            coefficients[j] += scale * binomial(k, j) * (-mid).powi((k - j) as i32);
        }
    }
    Ok(coefficients)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Width and height models for one correction stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageModels {
    pub width: CorrectionModel,
    pub height: CorrectionModel,
}

impl StageModels {
    fn check(&self, stage: CorrectionStage) -> Result<()> {
        for (model, expected) in [(&self.width, Axis::Width), (&self.height, Axis::Height)] {
            if model.axis != expected {
                return Err(CorrectionError::AxisMismatch { expected, found: model.axis, stage: model.stage });
            }
            if model.stage != stage {
                return Err(CorrectionError::StageMismatch { expected: stage, found: model.stage });
            }
        }
        Ok(())
    }

    fn apply(&self, dim_x: f64, dim_y: f64) -> (f64, f64) {
        (self.width.apply(dim_x), self.height.apply(dim_y))
    }
}

/// Applies box-shape then dimension correction; either stage may be absent.
pub fn correct_pipeline(
    shape: Option<&StageModels>,
    dimension: Option<&StageModels>,
    raw: &SizeEstimate,
) -> Result<SizeEstimate> {
    let (mut x, mut y) = (raw.dim_x_cm(), raw.dim_y_cm());
    let mut stage = raw.stage();
    if let Some(models) = shape {
        models.check(CorrectionStage::BoxShape)?;
        (x, y) = models.apply(x, y);
        stage = SizeStage::ShapeCorrected;
    }
    if let Some(models) = dimension {
        models.check(CorrectionStage::Dimension)?;
        (x, y) = models.apply(x, y);
        stage = SizeStage::DimCorrected;
    }
    Ok(raw.with_dims(x, y, stage))
}

/// Accuracy summary of predicted versus reference sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rmse: f64,
    pub mae: f64,
    pub mean_residual: f64,
    /// Min, first quartile, median, third quartile and max of `reference - predicted`.
    pub residual_quartiles: [f64; 5],
    pub n: usize,
}

pub fn error_report(pairs: &[PairedSample]) -> Result<ErrorReport> {
    if pairs.is_empty() {
        return Err(CorrectionError::EmptyInput);
    }
    let mut residuals: Vec<f64> = pairs.iter().map(|p| p.reference - p.predicted).collect();
    let n = residuals.len() as f64;
    let rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    let mae = residuals.iter().map(|r| r.abs()).sum::<f64>() / n;
    let mean_residual = residuals.iter().sum::<f64>() / n;
    residuals.sort_by(f64::total_cmp);
    let q = |p: f64| quantile_sorted(&residuals, p);
    Ok(ErrorReport {
        // sqrt(mean r^2) >= mean |r| holds exactly; rounding can flip the last ulp.
        rmse: rmse.max(mae),
        mae,
        mean_residual,
        residual_quartiles: [q(0.0), q(0.25), q(0.5), q(0.75), q(1.0)],
        n: pairs.len(),
    })
}

/// Linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// How one correction stage is handled in the strategy grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    None,
    Linear,
    Polynomial,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::None, Strategy::Linear, Strategy::Polynomial];

    pub fn degree(&self) -> Option<usize> {
        match self {
            Strategy::None => None,
            Strategy::Linear => Some(1),
            Strategy::Polynomial => Some(2),
        }
    }
}

/// One cell of the box-shape x dimension strategy grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub shape: Strategy,
    pub dimension: Strategy,
    pub report: ErrorReport,
}

/// Object sizes for one axis as seen by the three data sources of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleSample {
    pub object_id: String,
    /// Size from the detector's box.
    pub detected: f64,
    /// Size from the hand-annotated box.
    pub annotated: f64,
    /// Measured object size.
    pub measured: f64,
}

/// Evaluates every combination of box-shape and dimension strategies for one axis.
///
/// Shape models are fitted detected -> annotated; dimension models are fitted
/// on the shape-corrected values -> measured. Reports are computed on the same
/// samples.
pub fn strategy_grid(samples: &[TripleSample], axis: Axis) -> Result<Vec<GridCell>> {
    let mut cells = Vec::with_capacity(9);
    for shape in Strategy::ALL {
        let shaped: Vec<f64> = match shape.degree() {
            None => samples.iter().map(|s| s.detected).collect(),
            Some(degree) => {
                let pairs = pairs_of(samples, |s| s.detected, |s| s.annotated)?;
                let model = fit(&pairs, degree, axis, CorrectionStage::BoxShape)?;
                samples.iter().map(|s| model.apply(s.detected)).collect()
            }
        };
        for dimension in Strategy::ALL {
            let corrected: Vec<f64> = match dimension.degree() {
                None => shaped.clone(),
                Some(degree) => {
                    let pairs = samples
                        .iter()
                        .zip(&shaped)
                        .map(|(s, &p)| PairedSample::new(s.object_id.clone(), p, s.measured))
                        .collect::<Result<Vec<_>>>()?;
                    let model = fit(&pairs, degree, axis, CorrectionStage::Dimension)?;
                    shaped.iter().map(|&p| model.apply(p)).collect()
                }
            };
            let pairs: Vec<PairedSample> = samples
                .iter()
                .zip(&corrected)
                .map(|(s, &p)| PairedSample { predicted: p, reference: s.measured, object_id: s.object_id.clone() })
                .collect();
            cells.push(GridCell { shape, dimension, report: error_report(&pairs)? });
        }
    }
    Ok(cells)
}

fn pairs_of(
    samples: &[TripleSample],
    predicted: impl Fn(&TripleSample) -> f64,
    reference: impl Fn(&TripleSample) -> f64,
) -> Result<Vec<PairedSample>> {
    samples.iter().map(|s| PairedSample::new(s.object_id.clone(), predicted(s), reference(s))).collect()
}
