use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{LeakageError, Result};

/// Daily station record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayRecord {
    pub date: NaiveDate,
    /// Insolation duration.
    pub inst: f64,
    /// Global irradiance.
    pub glot: f64,
    /// Sunshine fraction of the day length, in `[0, 1]`.
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremeDays {
    pub cloudiest: NaiveDate,
    pub sunniest: NaiveDate,
}

/// Cloudiest and sunniest days by the mean of min-max normalized INST, GLOT and SIGMA.
///
/// A variable that is constant over the records normalizes to 0. Equal
/// scores resolve to the earliest date.
pub fn select_extreme_days(records: &[DayRecord]) -> Result<ExtremeDays> {
    if records.len() < 2 {
        return Err(LeakageError::EmptyInput(format!("need at least 2 day records, got {}", records.len())));
    }
    if records.iter().any(|r| !(r.inst.is_finite() && r.glot.is_finite() && r.sigma.is_finite())) {
        return Err(LeakageError::InvalidParameter("weather variables must be finite".into()));
    }
    let columns: [Vec<f64>; 3] = [
        records.iter().map(|r| r.inst).collect(),
        records.iter().map(|r| r.glot).collect(),
        records.iter().map(|r| r.sigma).collect(),
    ];
    let normalized: Vec<Option<Vec<f64>>> = columns
        .iter()
        .map(|col| {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (hi > lo).then(|| col.iter().map(|v| (v - lo) / (hi - lo)).collect())
        })
        .collect();
    if normalized.iter().all(Option::is_none) {
        return Err(LeakageError::ConstantVariables);
    }
    let score = |i: usize| normalized.iter().flatten().map(|col| col[i]).sum::<f64>() / 3.0;

    let mut cloudiest = 0;
    let mut sunniest = 0;
    for i in 1..records.len() {
        let (s, date) = (score(i), records[i].date);
        let (c, sun) = (score(cloudiest), score(sunniest));
        if s < c || (s == c && date < records[cloudiest].date) {
            cloudiest = i;
        }
        if s > sun || (s == sun && date < records[sunniest].date) {
            sunniest = i;
        }
    }
    Ok(ExtremeDays { cloudiest: records[cloudiest].date, sunniest: records[sunniest].date })
}
