use std::fmt::Write as _;

use crate::evaluation::{Detection, GroundTruth};
use crate::geometry::PixelBox;

use super::{IoError, MalformedLine, Result};

/// Whether a label line carries a sixth, confidence field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfidenceField {
    /// Exactly five fields (ground truth).
    Absent,
    /// Exactly six fields (detections).
    Required,
    /// Five or six fields.
    Optional,
}

impl From<bool> for ConfidenceField {
    fn from(expect_confidence: bool) -> Self {
        if expect_confidence {
            ConfidenceField::Required
        } else {
            ConfidenceField::Absent
        }
    }
}

/// One line of a YOLO label file in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelLine {
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: Option<f64>,
}

impl LabelLine {
    /// Pixel box for an image whose last pixel sits at `(scale_x, scale_y)`.
    ///
    /// Edges that fall outside `[0, 1]` are clamped; the flag reports it.
    pub fn to_box(&self, scale_x: f64, scale_y: f64) -> std::result::Result<(PixelBox, bool), String> {
        let raw = [self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.cx + self.w / 2.0, self.cy + self.h / 2.0];
        let clamped_edges = raw.map(|v| v.clamp(0.0, 1.0));
        let clamped = raw != clamped_edges;
        let [x0, y0, x1, y1] = clamped_edges;
        let mut bbox = PixelBox::new(x0 * scale_x, y0 * scale_y, x1 * scale_x, y1 * scale_y)
            .map_err(|e| e.to_string())?
            .with_class(self.class_id);
        if let Some(c) = self.confidence {
            bbox = bbox.with_confidence(c).map_err(|e| e.to_string())?;
        }
        Ok((bbox, clamped))
    }

    /// Normalized label of a pixel box; boxes without a class are written as class 0.
    pub fn from_box(bbox: &PixelBox, scale_x: f64, scale_y: f64) -> Self {
        let (cx, cy) = bbox.center();
        Self {
            class_id: bbox.class_id().unwrap_or(0),
            cx: cx / scale_x,
            cy: cy / scale_y,
            w: bbox.width() / scale_x,
            h: bbox.height() / scale_y,
            confidence: bbox.confidence(),
        }
    }
}

/// A label line turned into a pixel box.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedBox {
    /// 1-based source line.
    pub line: usize,
    pub label: LabelLine,
    pub bbox: PixelBox,
    /// Some edge lay outside the image and was clamped.
    pub clamped: bool,
}

impl ParsedBox {
    pub fn ground_truth(&self, image_id: &str) -> GroundTruth {
        GroundTruth::new(image_id, self.label.class_id, self.bbox)
    }

    /// Detection with the line's confidence (1 when the line has none).
    pub fn detection(&self, image_id: &str) -> Detection {
        Detection {
            bbox: self.bbox,
            class_id: self.label.class_id,
            confidence: self.label.confidence.unwrap_or(1.0),
            image_id: image_id.to_string(),
        }
    }
}

fn parse_line(text: &str, confidence: ConfidenceField) -> std::result::Result<LabelLine, String> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    let expected: &[usize] = match confidence {
        ConfidenceField::Absent => &[5],
        ConfidenceField::Required => &[6],
        ConfidenceField::Optional => &[5, 6],
    };
    if !expected.contains(&fields.len()) {
        let want = expected.iter().map(ToString::to_string).collect::<Vec<_>>().join(" or ");
        return Err(format!("expected {want} fields, found {}", fields.len()));
    }
    let class_id: u32 =
        fields[0].parse().map_err(|_| format!("class id `{}` is not a non-negative integer", fields[0]))?;
    let mut values = [0.0; 5];
    for (k, (name, field)) in ["cx", "cy", "w", "h", "confidence"].iter().zip(&fields[1..]).enumerate() {
        values[k] = field.parse::<f64>().map_err(|_| format!("{name} `{field}` is not a number"))?;
    }
    let [cx, cy, w, h, conf] = values;
    for (name, v) in [("cx", cx), ("cy", cy)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("{name} = {v} outside [0, 1]"));
        }
    }
    for (name, v) in [("w", w), ("h", h)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(format!("{name} = {v} outside (0, 1]"));
        }
    }
    let confidence = if fields.len() == 6 {
        if !(0.0..=1.0).contains(&conf) {
            return Err(format!("confidence = {conf} outside [0, 1]"));
        }
        Some(conf)
    } else {
        None
    };
    Ok(LabelLine { class_id, cx, cy, w, h, confidence })
}

/// Parses every non-blank line; all bad lines are reported together.
pub fn parse_label_lines(text: &str, confidence: ConfidenceField) -> Result<Vec<(usize, LabelLine)>> {
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        match parse_line(raw, confidence) {
            Ok(l) => good.push((i + 1, l)),
            Err(reason) => bad.push(MalformedLine { line: i + 1, reason }),
        }
    }
    if bad.is_empty() {
        Ok(good)
    } else {
        Err(IoError::Malformed(bad))
    }
}

fn to_boxes(text: &str, scale_x: f64, scale_y: f64, confidence: ConfidenceField) -> Result<Vec<ParsedBox>> {
    let lines = parse_label_lines(text, confidence)?;
    let mut good = Vec::with_capacity(lines.len());
    let mut bad = Vec::new();
    for (line, label) in lines {
        match label.to_box(scale_x, scale_y) {
            Ok((bbox, clamped)) => good.push(ParsedBox { line, label, bbox, clamped }),
            Err(reason) => bad.push(MalformedLine { line, reason }),
        }
    }
    if bad.is_empty() {
        Ok(good)
    } else {
        Err(IoError::Malformed(bad))
    }
}

/// YOLO label text to pixel boxes of a `image_w` x `image_h` image.
///
/// Normalized coordinates scale by `W - 1` and `H - 1`, so `0` and `1` land on
/// the first and last pixel centres.
pub fn parse_labels(
    text: &str,
    image_w: u32,
    image_h: u32,
    confidence: impl Into<ConfidenceField>,
) -> Result<Vec<ParsedBox>> {
    to_boxes(text, image_w.saturating_sub(1) as f64, image_h.saturating_sub(1) as f64, confidence.into())
}

/// Like [`parse_labels`] but keeps boxes in normalized `[0, 1]` units.
pub fn parse_labels_normalized(text: &str, confidence: impl Into<ConfidenceField>) -> Result<Vec<ParsedBox>> {
    to_boxes(text, 1.0, 1.0, confidence.into())
}

/// [`parse_labels`] over raw bytes; invalid UTF-8 surfaces as malformed lines.
pub fn parse_labels_bytes(
    bytes: &[u8],
    image_w: u32,
    image_h: u32,
    confidence: impl Into<ConfidenceField>,
) -> Result<Vec<ParsedBox>> {
    parse_labels(&String::from_utf8_lossy(bytes), image_w, image_h, confidence)
}

/// Label text for pixel boxes, one line per box, shortest round-trip number formatting.
pub fn write_labels(boxes: &[PixelBox], image_w: u32, image_h: u32) -> String {
    let (sx, sy) = (image_w.saturating_sub(1) as f64, image_h.saturating_sub(1) as f64);
    let mut out = String::new();
    for b in boxes {
        let l = LabelLine::from_box(b, sx, sy);
        let _ = write!(out, "{} {} {} {} {}", l.class_id, l.cx, l.cy, l.w, l.h);
        if let Some(c) = l.confidence {
            let _ = write!(out, " {c}");
        }
        out.push('\n');
    }
    out
}
