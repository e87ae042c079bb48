use serde::Serialize;
use serde_json::Value;

use crate::correction::{Axis, CorrectionModel, StageModels};

use super::{IoError, Result};

const SIG_DIGITS: usize = 6;

/// `x` to 6 significant digits, trailing zeros removed; `nan`, `inf` and `-inf` for non-finite values.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if (-5..15).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        let rounded: f64 = sci.parse().unwrap_or(x);
        trim_zeros(format!("{:.*}", decimals, rounded))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// `x` rounded to 6 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        fmt_sig(x).parse().unwrap_or(x)
    } else {
        x
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with object keys sorted and floats rounded to 6 significant digits.
pub fn write_json_report<T: Serialize + ?Sized>(report: &T) -> String {
    let mut value = serde_json::to_value(report).unwrap_or(Value::Null);
    round_value(&mut value);
    let mut out = serde_json::to_string_pretty(&value).unwrap_or_default();
    out.push('\n');
    out
}

/// Full-precision JSON of a width/height model pair.
pub fn write_models(models: &StageModels) -> String {
    let mut out = serde_json::to_string_pretty(models).unwrap_or_default();
    out.push('\n');
    out
}

fn check_model(m: &CorrectionModel, axis: Axis) -> std::result::Result<(), String> {
    if m.axis != axis {
        return Err(format!("{axis:?} slot holds a {:?} model", m.axis));
    }
    if !(1..=2).contains(&m.degree) {
        return Err(format!("unsupported degree {}", m.degree));
    }
    if m.coefficients.len() != m.degree + 1 {
        return Err(format!("degree {} needs {} coefficients, found {}", m.degree, m.degree + 1, m.coefficients.len()));
    }
    if !m.coefficients.iter().chain(&m.fit_range).all(|c| c.is_finite()) {
        return Err("non-finite coefficient or fit range".into());
    }
    if m.fit_range[0] > m.fit_range[1] {
        return Err(format!("fit range {:?} is reversed", m.fit_range));
    }
    Ok(())
}

/// Reads a model file written by [`write_models`].
pub fn parse_models(text: &str) -> Result<StageModels> {
    let models: StageModels = serde_json::from_str(text)
        .map_err(|e| IoError::InvalidModel(format!("line {} column {}: {e}", e.line(), e.column())))?;
    check_model(&models.width, Axis::Width).map_err(|r| IoError::InvalidModel(format!("width: {r}")))?;
    check_model(&models.height, Axis::Height).map_err(|r| IoError::InvalidModel(format!("height: {r}")))?;
    if models.width.stage != models.height.stage {
        return Err(IoError::InvalidModel("width and height models belong to different stages".into()));
    }
    Ok(models)
}
