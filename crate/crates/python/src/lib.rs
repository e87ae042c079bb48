//! Python bindings: camera geometry, size correction, detector evaluation and
//! leak-free splitting. Failures surface as subclasses of `MonometryError`.

use monometry::correction::{self, Axis, CorrectionStage, PairedSample};
use monometry::evaluation::{self, Detection, EvalConfig, GroundTruth};
use monometry::geometry::{self, GroundRect};
use monometry::{io, leakage};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(pymonometry, MonometryError, PyException);
create_exception!(pymonometry, GeometryError, MonometryError);
create_exception!(pymonometry, CorrectionError, MonometryError);
create_exception!(pymonometry, EvaluationError, MonometryError);
create_exception!(pymonometry, LeakageError, MonometryError);
create_exception!(pymonometry, ParseError, MonometryError);

fn geometry_err(e: geometry::GeometryError) -> PyErr {
    GeometryError::new_err(e.to_string())
}

fn correction_err(e: correction::CorrectionError) -> PyErr {
    CorrectionError::new_err(e.to_string())
}

fn evaluation_err(e: evaluation::EvalError) -> PyErr {
    EvaluationError::new_err(e.to_string())
}

fn leakage_err(e: leakage::LeakageError) -> PyErr {
    LeakageError::new_err(e.to_string())
}

fn parse_err(e: io::IoError) -> PyErr {
    ParseError::new_err(e.to_string())
}

/// Intrinsics and pose of a fixed camera; pitch in radians, positive looks down.
#[pyclass(frozen, from_py_object, module = "pymonometry")]
#[derive(Clone)]
pub struct CameraRig(geometry::CameraRig);

#[pymethods]
impl CameraRig {
    #[new]
    #[allow(clippy::too_many_arguments)]
    fn new(
        focal_mm: f64,
        sensor_w_mm: f64,
        sensor_h_mm: f64,
        image_w_px: u32,
        image_h_px: u32,
        height_m: f64,
        pitch_rad: f64,
    ) -> PyResult<Self> {
        geometry::CameraRig::new(focal_mm, sensor_w_mm, sensor_h_mm, image_w_px, image_h_px, height_m, pitch_rad)
            .map(Self)
            .map_err(geometry_err)
    }

    /// Reads the `key = value` rig format (pitch given in degrees).
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        io::parse_rig(text).map(Self).map_err(parse_err)
    }

    fn to_text(&self) -> String {
        io::write_rig(&io::RigConfig::new(None, self.0))
    }

    #[getter]
    fn focal_mm(&self) -> f64 {
        self.0.focal_mm()
    }

    #[getter]
    fn image_size(&self) -> (u32, u32) {
        (self.0.image_w_px(), self.0.image_h_px())
    }

    #[getter]
    fn height_m(&self) -> f64 {
        self.0.height_m()
    }

    #[getter]
    fn pitch_rad(&self) -> f64 {
        self.0.pitch_rad()
    }

    fn focal_pixels(&self) -> (f64, f64) {
        geometry::focal_pixels(&self.0)
    }

    /// Unit world direction of the ray through pixel `(x, y)`.
    fn pixel_ray(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let d = geometry::pixel_ray_world(&self.0, x, y).direction();
        (d.x, d.y, d.z)
    }

    fn __repr__(&self) -> String {
        format!(
            "CameraRig(focal_mm={}, image={}x{}, height_m={}, pitch_rad={})",
            self.0.focal_mm(),
            self.0.image_w_px(),
            self.0.image_h_px(),
            self.0.height_m(),
            self.0.pitch_rad()
        )
    }
}

#[pyclass(frozen, from_py_object, module = "pymonometry")]
#[derive(Clone)]
pub struct PixelBox(geometry::PixelBox);

#[pymethods]
impl PixelBox {
    #[new]
    #[pyo3(signature = (x_min, y_min, x_max, y_max, class_id=None, confidence=None))]
    fn new(
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        class_id: Option<u32>,
        confidence: Option<f64>,
    ) -> PyResult<Self> {
        let mut b = geometry::PixelBox::new(x_min, y_min, x_max, y_max).map_err(geometry_err)?;
        if let Some(c) = class_id {
            b = b.with_class(c);
        }
        if let Some(c) = confidence {
            b = b.with_confidence(c).map_err(geometry_err)?;
        }
        Ok(Self(b))
    }

    #[getter]
    fn corners(&self) -> (f64, f64, f64, f64) {
        (self.0.x_min(), self.0.y_min(), self.0.x_max(), self.0.y_max())
    }

    #[getter]
    fn class_id(&self) -> Option<u32> {
        self.0.class_id()
    }

    #[getter]
    fn confidence(&self) -> Option<f64> {
        self.0.confidence()
    }

    fn __repr__(&self) -> String {
        format!("PixelBox({}, {}, {}, {})", self.0.x_min(), self.0.y_min(), self.0.x_max(), self.0.y_max())
    }
}

#[pyclass(frozen, module = "pymonometry")]
pub struct SizeEstimate(geometry::SizeEstimate);

#[pymethods]
impl SizeEstimate {
    #[getter]
    fn dim_x_cm(&self) -> f64 {
        self.0.dim_x_cm()
    }

    #[getter]
    fn dim_y_cm(&self) -> f64 {
        self.0.dim_y_cm()
    }

    #[getter]
    fn range_m(&self) -> f64 {
        self.0.range_m()
    }

    #[getter]
    fn ground_point(&self) -> (f64, f64, f64) {
        let p = self.0.ground_point();
        (p.x, p.y, p.z)
    }

    #[getter]
    fn stage(&self) -> &'static str {
        self.0.stage().as_str()
    }

    fn __repr__(&self) -> String {
        format!("SizeEstimate(dim_x_cm={:.4}, dim_y_cm={:.4})", self.0.dim_x_cm(), self.0.dim_y_cm())
    }
}

#[pyfunction]
fn estimate_size(rig: &CameraRig, bbox: &PixelBox) -> PyResult<SizeEstimate> {
    geometry::estimate_size(&rig.0, &bbox.0).map(SizeEstimate).map_err(geometry_err)
}

/// Pixel box of an object of the given size centred at ground point `(x, z)`.
#[pyfunction]
fn project_to_box(
    rig: &CameraRig,
    center_x_m: f64,
    center_z_m: f64,
    width_cm: f64,
    height_cm: f64,
) -> PyResult<PixelBox> {
    let rect = GroundRect { center_x_m, center_z_m, width_cm, height_cm };
    geometry::project_to_box(&rig.0, &rect).map(PixelBox).map_err(geometry_err)
}

#[pyfunction]
#[pyo3(signature = (rig, boxes, shift_px=1.0))]
fn pixel_sensitivity<'py>(
    py: Python<'py>,
    rig: &CameraRig,
    boxes: Vec<PixelBox>,
    shift_px: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let boxes: Vec<geometry::PixelBox> = boxes.into_iter().map(|b| b.0).collect();
    let r = geometry::pixel_sensitivity_with_shift(&rig.0, &boxes, shift_px).map_err(geometry_err)?;
    let d = PyDict::new(py);
    d.set_item("s_width_cm", r.s_width_cm)?;
    d.set_item("s_height_cm", r.s_height_cm)?;
    d.set_item("evaluated", r.evaluated)?;
    d.set_item("skipped", r.skipped)?;
    Ok(d)
}

fn axis(name: &str) -> PyResult<Axis> {
    match name {
        "width" => Ok(Axis::Width),
        "height" => Ok(Axis::Height),
        _ => Err(PyValueError::new_err(format!("axis must be 'width' or 'height', got {name:?}"))),
    }
}

fn stage(name: &str) -> PyResult<CorrectionStage> {
    match name {
        "box_shape" => Ok(CorrectionStage::BoxShape),
        "dimension" => Ok(CorrectionStage::Dimension),
        _ => Err(PyValueError::new_err(format!("stage must be 'box_shape' or 'dimension', got {name:?}"))),
    }
}

fn pairs(predicted: &[f64], reference: &[f64]) -> PyResult<Vec<PairedSample>> {
    if predicted.len() != reference.len() {
        return Err(PyValueError::new_err(format!(
            "{} predicted values but {} reference values",
            predicted.len(),
            reference.len()
        )));
    }
    predicted
        .iter()
        .zip(reference)
        .enumerate()
        .map(|(i, (&p, &r))| PairedSample::new(i.to_string(), p, r).map_err(correction_err))
        .collect()
}

#[pyclass(frozen, module = "pymonometry")]
pub struct CorrectionModel(correction::CorrectionModel);

#[pymethods]
impl CorrectionModel {
    /// Least-squares polynomial mapping `predicted` onto `reference`.
    #[staticmethod]
    #[pyo3(signature = (predicted, reference, degree=1, axis="width", stage="dimension"))]
    fn fit(predicted: Vec<f64>, reference: Vec<f64>, degree: usize, axis: &str, stage: &str) -> PyResult<Self> {
        let samples = pairs(&predicted, &reference)?;
        correction::fit(&samples, degree, self::axis(axis)?, self::stage(stage)?).map(Self).map_err(correction_err)
    }

    /// Corrected value, clamped at 0.1 cm.
    fn apply(&self, predicted: f64) -> f64 {
        self.0.apply(predicted)
    }

    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.0.coefficients.clone()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.0.degree
    }

    #[getter]
    fn fit_range(&self) -> (f64, f64) {
        (self.0.fit_range[0], self.0.fit_range[1])
    }

    fn is_monotone(&self) -> bool {
        self.0.is_monotone()
    }

    fn __repr__(&self) -> String {
        format!("CorrectionModel(degree={}, coefficients={:?})", self.0.degree, self.0.coefficients)
    }
}

#[pyfunction]
fn error_report<'py>(py: Python<'py>, predicted: Vec<f64>, reference: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let r = correction::error_report(&pairs(&predicted, &reference)?).map_err(correction_err)?;
    let d = PyDict::new(py);
    d.set_item("rmse", r.rmse)?;
    d.set_item("mae", r.mae)?;
    d.set_item("mean_residual", r.mean_residual)?;
    d.set_item("residual_quartiles", r.residual_quartiles.to_vec())?;
    d.set_item("n", r.n)?;
    Ok(d)
}

#[pyfunction]
fn iou(a: &PixelBox, b: &PixelBox) -> f64 {
    evaluation::iou(&a.0, &b.0)
}

/// Full metric suite.
///
/// `detections` holds `(image_id, class_id, confidence, box)` tuples and
/// `ground_truth` holds `(image_id, class_id, box)` tuples.
#[pyfunction]
#[pyo3(signature = (detections, ground_truth, conf_thresh=0.25, iou_thresh=0.5, num_classes=None))]
fn map_suite<'py>(
    py: Python<'py>,
    detections: Vec<(String, u32, f64, PixelBox)>,
    ground_truth: Vec<(String, u32, PixelBox)>,
    conf_thresh: f64,
    iou_thresh: f64,
    num_classes: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let dets = detections
        .into_iter()
        .map(|(img, c, conf, b)| Detection::new(img, c, conf, b.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(evaluation_err)?;
    let gts: Vec<GroundTruth> = ground_truth.into_iter().map(|(img, c, b)| GroundTruth::new(img, c, b.0)).collect();
    let config = EvalConfig { conf_thresh, num_classes, iou_thresh };
    let r = evaluation::map_suite(&dets, &gts, &config).map_err(evaluation_err)?;
    let d = PyDict::new(py);
    d.set_item("map50", r.map50)?;
    d.set_item("map50_95", r.map50_95)?;
    d.set_item("precision", r.precision)?;
    d.set_item("recall", r.recall)?;
    d.set_item("per_class_ap50", r.per_class_ap50.clone())?;
    d.set_item("per_class_ap50_95", r.per_class_ap50_95.clone())?;
    d.set_item("confusion", r.confusion.clone())?;
    d.set_item("confusion_normalized", r.confusion_normalized())?;
    Ok(d)
}

fn points(rows: Vec<(f64, f64)>) -> Vec<[f64; 2]> {
    rows.into_iter().map(|(x, y)| [x, y]).collect()
}

/// Exact t-SNE to two dimensions.
#[pyfunction]
#[pyo3(signature = (data, seed, perplexity=30.0, learning_rate=200.0, iterations=1000))]
fn tsne(
    py: Python<'_>,
    data: Vec<Vec<f64>>,
    seed: u64,
    perplexity: f64,
    learning_rate: f64,
    iterations: usize,
) -> PyResult<Vec<(f64, f64)>> {
    let params = leakage::TsneParams { perplexity, learning_rate, iterations, seed, ..Default::default() };
    let y = py.detach(|| leakage::tsne(&data, &params)).map_err(leakage_err)?;
    Ok(y.into_iter().map(|[a, b]| (a, b)).collect())
}

/// Cluster ids per point; `-1` marks noise.
#[pyfunction]
#[pyo3(signature = (points, eps=5.0, min_samples=10))]
fn dbscan(points: Vec<(f64, f64)>, eps: f64, min_samples: usize) -> PyResult<Vec<i32>> {
    leakage::dbscan(&self::points(points), eps, min_samples).map_err(leakage_err)
}

#[pyfunction]
fn dbcv(points: Vec<(f64, f64)>, labels: Vec<i32>) -> PyResult<f64> {
    leakage::dbcv(&self::points(points), &labels).map_err(leakage_err)
}

/// Subset name (`train`, `val`, `test`) of every point, whole clusters kept together.
#[pyfunction]
#[pyo3(signature = (labels, seed, ratios=(0.8, 0.1, 0.1)))]
fn cluster_split(labels: Vec<i32>, seed: u64, ratios: (f64, f64, f64)) -> PyResult<Vec<&'static str>> {
    let r = leakage::cluster_split(&labels, [ratios.0, ratios.1, ratios.2], seed).map_err(leakage_err)?;
    Ok(r.assignment.iter().map(|s| s.as_str()).collect())
}

/// `(cloudiest, sunniest)` ISO dates from `date,INST,GLOT,SIGMA` CSV text.
#[pyfunction]
fn select_extreme_days(csv_text: &str) -> PyResult<(String, String)> {
    let records = io::parse_weather(csv_text).map_err(parse_err)?;
    let days = leakage::select_extreme_days(&records).map_err(leakage_err)?;
    Ok((days.cloudiest.to_string(), days.sunniest.to_string()))
}

/// Boxes of a YOLO label file for an image of `image_w` x `image_h` pixels.
#[pyfunction]
#[pyo3(signature = (text, image_w, image_h, with_confidence=false))]
fn parse_labels(text: &str, image_w: u32, image_h: u32, with_confidence: bool) -> PyResult<Vec<PixelBox>> {
    let parsed = io::parse_labels(text, image_w, image_h, with_confidence).map_err(parse_err)?;
    Ok(parsed.into_iter().map(|p| PixelBox(p.bbox)).collect())
}

#[pyfunction]
fn write_labels(boxes: Vec<PixelBox>, image_w: u32, image_h: u32) -> String {
    let boxes: Vec<geometry::PixelBox> = boxes.into_iter().map(|b| b.0).collect();
    io::write_labels(&boxes, image_w, image_h)
}

#[pymodule]
fn pymonometry(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("MonometryError", py.get_type::<MonometryError>())?;
    m.add("GeometryError", py.get_type::<GeometryError>())?;
    m.add("CorrectionError", py.get_type::<CorrectionError>())?;
    m.add("EvaluationError", py.get_type::<EvaluationError>())?;
    m.add("LeakageError", py.get_type::<LeakageError>())?;
    m.add("ParseError", py.get_type::<ParseError>())?;
    m.add_class::<CameraRig>()?;
    m.add_class::<PixelBox>()?;
    m.add_class::<SizeEstimate>()?;
    m.add_class::<CorrectionModel>()?;
    m.add_function(wrap_pyfunction!(estimate_size, m)?)?;
    m.add_function(wrap_pyfunction!(project_to_box, m)?)?;
    m.add_function(wrap_pyfunction!(pixel_sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(error_report, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(map_suite, m)?)?;
    m.add_function(wrap_pyfunction!(tsne, m)?)?;
    m.add_function(wrap_pyfunction!(dbscan, m)?)?;
    m.add_function(wrap_pyfunction!(dbcv, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_split, m)?)?;
    m.add_function(wrap_pyfunction!(select_extreme_days, m)?)?;
    m.add_function(wrap_pyfunction!(parse_labels, m)?)?;
    m.add_function(wrap_pyfunction!(write_labels, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_and_stage_names() {
        assert_eq!(axis("height").unwrap(), Axis::Height);
        assert_eq!(stage("box_shape").unwrap(), CorrectionStage::BoxShape);
    }

    #[test]
    fn pairs_reject_invalid_samples() {
        assert_eq!(pairs(&[1.0, 2.0], &[1.5, 2.5]).unwrap().len(), 2);
        assert!(matches!(
            correction::fit(
                &pairs(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(),
                2,
                Axis::Width,
                CorrectionStage::Dimension
            ),
            Err(correction::CorrectionError::InsufficientSamples { .. })
        ));
    }
}
