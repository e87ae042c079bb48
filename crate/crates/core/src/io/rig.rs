use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::geometry::CameraRig;

use super::{IoError, Result};

/// Required keys of a rig file, in the order they are written.
pub const RIG_KEYS: [&str; 7] =
    ["focal_mm", "sensor_w_mm", "sensor_h_mm", "image_w_px", "image_h_px", "height_m", "pitch_deg"];

const OPTIONAL_KEYS: [&str; 2] = ["id", "units"];

/// A camera rig together with its file-level metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RigConfig {
    pub id: Option<String>,
    pub rig: CameraRig,
}

impl RigConfig {
    pub fn new(id: Option<String>, rig: CameraRig) -> Self {
        Self { id, rig }
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> IoError {
    IoError::InvalidValue { key: key.to_string(), reason: reason.into() }
}

fn violation(key: &str, reason: impl Into<String>) -> IoError {
    IoError::InvariantViolation { key: key.to_string(), reason: reason.into() }
}

fn number(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value.parse().map_err(|_| invalid(key, format!("`{value}` is not a number")))?;
    if !v.is_finite() {
        return Err(invalid(key, format!("`{value}` is not finite")));
    }
    Ok(v)
}

fn positive(key: &str, value: &str) -> Result<f64> {
    let v = number(key, value)?;
    if v <= 0.0 {
        return Err(violation(key, format!("must be > 0, got {v}")));
    }
    Ok(v)
}

fn pixels(key: &str, value: &str) -> Result<u32> {
    let v: u32 = value.parse().map_err(|_| invalid(key, format!("`{value}` is not a pixel count")))?;
    if v < 2 {
        return Err(violation(key, format!("must be at least 2, got {v}")));
    }
    Ok(v)
}

/// Parses `key = value` lines (`:` also separates); `#` starts a comment line.
///
/// The seven [`RIG_KEYS`] are required; `id` and `units` (which must be
/// `metric`) are optional. Unknown and repeated keys are rejected.
pub fn parse_rig_config(text: &str) -> Result<RigConfig> {
    let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some(split) = line.find(['=', ':']) else {
            return Err(IoError::Syntax { line: i + 1, reason: format!("expected `key = value`, found `{line}`") });
        };
        let key = line[..split].trim();
        let value = line[split + 1..].trim();
        if key.is_empty() {
            return Err(IoError::Syntax { line: i + 1, reason: "empty key".into() });
        }
        if !RIG_KEYS.contains(&key) && !OPTIONAL_KEYS.contains(&key) {
            return Err(invalid(key, "unknown key"));
        }
        if let Some((first, _)) = entries.get(key) {
            return Err(invalid(key, format!("duplicate key (lines {first} and {})", i + 1)));
        }
        entries.insert(key.to_string(), (i + 1, value.to_string()));
    }
    let get = |key: &str| entries.get(key).map(|(_, v)| v.as_str()).ok_or_else(|| IoError::MissingKey(key.into()));
    for key in RIG_KEYS {
        get(key)?;
    }

    if let Some((_, units)) = entries.get("units") {
        if !units.eq_ignore_ascii_case("metric") {
            return Err(invalid("units", format!("only `metric` is supported, got `{units}`")));
        }
    }
    let id = match entries.get("id") {
        Some((_, v)) => {
            let v = v.trim_matches('"');
            if v.is_empty() {
                return Err(invalid("id", "empty identifier"));
            }
            Some(v.to_string())
        }
        None => None,
    };

    let focal = positive("focal_mm", get("focal_mm")?)?;
    let sensor_w = positive("sensor_w_mm", get("sensor_w_mm")?)?;
    let sensor_h = positive("sensor_h_mm", get("sensor_h_mm")?)?;
    let image_w = pixels("image_w_px", get("image_w_px")?)?;
    let image_h = pixels("image_h_px", get("image_h_px")?)?;
    let height = positive("height_m", get("height_m")?)?;
    let pitch_deg = number("pitch_deg", get("pitch_deg")?)?;
    if !(pitch_deg > 0.0 && pitch_deg < 90.0) {
        return Err(violation(
            "pitch_deg",
            format!("must lie strictly between 0 and 90, got {pitch_deg} (a level camera never sees the water plane)"),
        ));
    }
    let rig = CameraRig::new(focal, sensor_w, sensor_h, image_w, image_h, height, pitch_deg.to_radians())
        .map_err(|e| violation("pitch_deg", e.to_string()))?;
    Ok(RigConfig { id, rig })
}

pub fn parse_rig(text: &str) -> Result<CameraRig> {
    parse_rig_config(text).map(|c| c.rig)
}

/// [`parse_rig`] over raw bytes; invalid UTF-8 surfaces as an invalid value or syntax error.
pub fn parse_rig_bytes(bytes: &[u8]) -> Result<CameraRig> {
    parse_rig(&String::from_utf8_lossy(bytes))
}

pub fn write_rig(config: &RigConfig) -> String {
    let mut out = String::new();
    if let Some(id) = &config.id {
        let clean: String = id.chars().map(|c| if c.is_control() { ' ' } else { c }).collect();
        let clean = clean.trim();
        if !clean.is_empty() {
            let _ = writeln!(out, "id = {clean}");
        }
    }
    out.push_str("units = metric\n");
    let r = &config.rig;
    let _ = writeln!(out, "focal_mm = {}", r.focal_mm());
    let _ = writeln!(out, "sensor_w_mm = {}", r.sensor_w_mm());
    let _ = writeln!(out, "sensor_h_mm = {}", r.sensor_h_mm());
    let _ = writeln!(out, "image_w_px = {}", r.image_w_px());
    let _ = writeln!(out, "image_h_px = {}", r.image_h_px());
    let _ = writeln!(out, "height_m = {}", r.height_m());
    let _ = writeln!(out, "pitch_deg = {}", r.pitch_rad().to_degrees());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const VALID: &str = "# site camera\nid = quay-east\nunits = metric\nfocal_mm = 2.8\nsensor_w_mm = 5.37\nsensor_h_mm: 4.04\nimage_w_px = 2048\nimage_h_px = 1536\nheight_m = 3.5\npitch_deg = 30\n";

    fn replace(key: &str, value: &str) -> String {
        VALID
            .lines()
            .map(|l| if l.starts_with(key) { format!("{key} = {value}") } else { l.to_string() })
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn valid_file() {
        let c = parse_rig_config(VALID).unwrap();
        assert_eq!(c.id.as_deref(), Some("quay-east"));
        assert_eq!(c.rig.image_w_px(), 2048);
        assert!((c.rig.pitch_rad() - 30f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn level_camera_is_rejected() {
        assert_eq!(parse_rig(&replace("pitch_deg", "0")).unwrap_err().key(), Some("pitch_deg"));
        assert!(matches!(parse_rig(&replace("pitch_deg", "90")), Err(IoError::InvariantViolation { .. })));
    }

    #[test]
    fn duplicate_unknown_and_missing_keys() {
        let dup = format!("{VALID}height_m = 4\n");
        assert_eq!(
            parse_rig(&dup),
            Err(IoError::InvalidValue { key: "height_m".into(), reason: "duplicate key (lines 9 and 11)".into() })
        );
        assert_eq!(parse_rig(&format!("{VALID}roll_deg = 1\n")).unwrap_err().key(), Some("roll_deg"));
        let missing: String = VALID.lines().filter(|l| !l.starts_with("sensor_h")).map(|l| format!("{l}\n")).collect();
        assert_eq!(parse_rig(&missing), Err(IoError::MissingKey("sensor_h_mm".into())));
        assert_eq!(parse_rig(&format!("{VALID}oops\n")).unwrap_err().lines(), vec![11]);
    }

    #[test]
    fn bad_values_name_their_key() {
        for (key, value) in [
            ("focal_mm", "abc"),
            ("focal_mm", "-1"),
            ("sensor_w_mm", "nan"),
            ("image_w_px", "2048.5"),
            ("image_h_px", "1"),
            ("height_m", "0"),
            ("units", "imperial"),
        ] {
            assert_eq!(parse_rig(&replace(key, value)).unwrap_err().key(), Some(key), "{key} = {value}");
        }
    }

    #[test]
    fn round_trip() {
        let c = parse_rig_config(VALID).unwrap();
        assert_eq!(parse_rig_config(&write_rig(&c)).unwrap(), c);
    }

    proptest! {
        #[test]
        fn parser_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
            if let Err(e) = parse_rig_bytes(&bytes) {
                prop_assert!(e.key().is_some() || !e.lines().is_empty());
            }
        }

        #[test]
        fn written_rigs_reparse(
            f in 0.5f64..50.0, sw in 1.0f64..40.0, sh in 1.0f64..30.0,
            w in 2u32..10000, h in 2u32..10000, height in 0.1f64..100.0, pitch in 0.01f64..89.99,
        ) {
            let rig = CameraRig::new(f, sw, sh, w, h, height, pitch.to_radians()).unwrap();
            let back = parse_rig(&write_rig(&RigConfig::new(None, rig))).unwrap();
            prop_assert_eq!(back.focal_mm(), f);
            prop_assert_eq!(back.image_w_px(), w);
            prop_assert!((back.pitch_rad() - rig.pitch_rad()).abs() < 1e-12);
        }
    }
}
