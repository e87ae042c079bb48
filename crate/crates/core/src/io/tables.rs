use std::collections::{BTreeMap, HashMap};

use chrono::{NaiveDate, NaiveDateTime};

use crate::correction::PairedSample;
use crate::leakage::{DayRecord, Reduced2D, VISUAL_DIM};

use super::{fmt_sig, IoError, MalformedLine, Result};

pub const SIZE_HEADER: [&str; 6] = ["object_id", "image_id", "class_id", "dim_x_cm", "dim_y_cm", "range_m"];

/// One estimated object size, as written by the size report.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeRow {
    pub object_id: String,
    pub image_id: String,
    pub class_id: Option<u32>,
    pub dim_x_cm: f64,
    pub dim_y_cm: f64,
    pub range_m: f64,
}

/// Object id with its width and height, read back from any size table.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeRecord {
    pub object_id: String,
    pub dim_x_cm: f64,
    pub dim_y_cm: f64,
}

/// One row of an embedding matrix file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub image_id: String,
    pub visual: Vec<f64>,
    /// Seconds since the Unix epoch; 0 when the file has no timestamp column.
    pub timestamp: f64,
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(writer: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(writer.into_inner().unwrap_or_default()).unwrap_or_default()
}

/// Size report; rows are written in the given order, numbers to 6 significant digits.
pub fn write_size_csv(rows: &[SizeRow]) -> String {
    let mut w = csv_writer();
    let _ = w.write_record(SIZE_HEADER);
    for r in rows {
        let class = r.class_id.map(|c| c.to_string()).unwrap_or_default();
        let _ = w.write_record([
            r.object_id.as_str(),
            r.image_id.as_str(),
            class.as_str(),
            &fmt_sig(r.dim_x_cm),
            &fmt_sig(r.dim_y_cm),
            &fmt_sig(r.range_m),
        ]);
    }
    finish(w)
}

/// `object_id,predicted,reference,residual` table of paired samples.
pub fn write_paired_csv(pairs: &[PairedSample]) -> String {
    let mut w = csv_writer();
    let _ = w.write_record(["object_id", "predicted", "reference", "residual"]);
    for p in pairs {
        let _ = w.write_record([
            p.object_id.as_str(),
            &fmt_sig(p.predicted),
            &fmt_sig(p.reference),
            &fmt_sig(p.reference - p.predicted),
        ]);
    }
    finish(w)
}

/// `object_id,dim_x_cm,dim_y_cm` table, readable by [`parse_size_table`].
pub fn write_size_table(records: &[SizeRecord]) -> String {
    let mut w = csv_writer();
    let _ = w.write_record(["object_id", "dim_x_cm", "dim_y_cm"]);
    for r in records {
        let _ = w.write_record([r.object_id.as_str(), &fmt_sig(r.dim_x_cm), &fmt_sig(r.dim_y_cm)]);
    }
    finish(w)
}

/// `image_id,x,y` table of embedded points.
pub fn write_reduced_csv(points: &[Reduced2D]) -> String {
    let mut w = csv_writer();
    let _ = w.write_record(["image_id", "x", "y"]);
    for p in points {
        let _ = w.write_record([p.image_id.as_str(), &fmt_sig(p.x), &fmt_sig(p.y)]);
    }
    finish(w)
}

/// `image_id,cluster` table; noise is `-1`.
pub fn write_cluster_labels(ids: &[String], labels: &[i32]) -> String {
    let mut w = csv_writer();
    let _ = w.write_record(["image_id", "cluster"]);
    for (id, l) in ids.iter().zip(labels) {
        let _ = w.write_record([id.as_str(), &l.to_string()]);
    }
    finish(w)
}

/// Reads records of a headed CSV. Each row goes through `row`, which returns
/// either a value or a reason; all bad rows are reported together.
fn read_rows<H, T>(
    text: &str,
    header: impl FnOnce(&csv::StringRecord) -> Result<H>,
    mut row: impl FnMut(&H, &csv::StringRecord) -> std::result::Result<T, String>,
) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let head = reader.headers().map_err(|e| IoError::Syntax { line: 1, reason: e.to_string() })?.clone();
    let layout = header(&head)?;
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for record in reader.records() {
        match record {
            Ok(r) => {
                let line = r.position().map_or(0, |p| p.line() as usize);
                if r.iter().all(|f| f.trim().is_empty()) {
                    continue;
                }
                match row(&layout, &r) {
                    Ok(v) => good.push(v),
                    Err(reason) => bad.push(MalformedLine { line, reason }),
                }
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                bad.push(MalformedLine { line, reason: e.to_string() });
            }
        }
    }
    if bad.is_empty() {
        Ok(good)
    } else {
        Err(IoError::Malformed(bad))
    }
}

fn column(head: &csv::StringRecord, name: &str) -> Result<usize> {
    head.iter().position(|h| h.trim().eq_ignore_ascii_case(name)).ok_or_else(|| IoError::MissingColumn(name.into()))
}

fn field<'a>(r: &'a csv::StringRecord, idx: usize, name: &str) -> std::result::Result<&'a str, String> {
    r.get(idx).map(str::trim).ok_or_else(|| format!("missing `{name}` field"))
}

fn finite(r: &csv::StringRecord, idx: usize, name: &str) -> std::result::Result<f64, String> {
    let s = field(r, idx, name)?;
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("{name} `{s}` is not a finite number")),
    }
}

/// Any CSV with `object_id`, `dim_x_cm` and `dim_y_cm` columns; other columns are ignored.
pub fn parse_size_table(text: &str) -> Result<Vec<SizeRecord>> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut count = 0;
    read_rows(
        text,
        |head| Ok([column(head, "object_id")?, column(head, "dim_x_cm")?, column(head, "dim_y_cm")?]),
        |cols, r| {
            count += 1;
            let id = field(r, cols[0], "object_id")?;
            if id.is_empty() {
                return Err("empty object_id".into());
            }
            if let Some(first) = seen.insert(id.to_string(), count) {
                return Err(format!("object_id `{id}` repeats data row {first}"));
            }
            Ok(SizeRecord {
                object_id: id.to_string(),
                dim_x_cm: finite(r, cols[1], "dim_x_cm")?,
                dim_y_cm: finite(r, cols[2], "dim_y_cm")?,
            })
        },
    )
}

fn parse_timestamp(s: &str) -> Option<f64> {
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let s = s.trim_end_matches('Z');
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"].iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok()).map(
        |dt| {
            let utc = dt.and_utc();
            utc.timestamp() as f64 + f64::from(utc.timestamp_subsec_nanos()) * 1e-9
        },
    )
}

/// Embedding matrix: header, then `image_id`, 256 visual values and an optional
/// `timestamp` (epoch seconds or ISO-8601 date-time, read as UTC).
pub fn parse_embeddings(text: &str) -> Result<Vec<EmbeddingRow>> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut count = 0;
    read_rows(
        text,
        |head| {
            let has_time = match head.len() {
                n if n == VISUAL_DIM + 1 => false,
                n if n == VISUAL_DIM + 2 => true,
                n => {
                    return Err(IoError::Syntax {
                        line: 1,
                        reason: format!("expected {} or {} columns, found {n}", VISUAL_DIM + 1, VISUAL_DIM + 2),
                    })
                }
            };
            if !head.get(0).is_some_and(|h| h.trim().eq_ignore_ascii_case("image_id")) {
                return Err(IoError::MissingColumn("image_id".into()));
            }
            Ok(has_time)
        },
        |&has_time, r| {
            count += 1;
            let want = VISUAL_DIM + 1 + usize::from(has_time);
            if r.len() != want {
                return Err(format!("expected {want} fields, found {}", r.len()));
            }
            let id = field(r, 0, "image_id")?;
            if id.is_empty() {
                return Err("empty image_id".into());
            }
            if let Some(first) = seen.insert(id.to_string(), count) {
                return Err(format!("image_id `{id}` repeats data row {first}"));
            }
            let visual = (1..=VISUAL_DIM)
                .map(|k| finite(r, k, &format!("visual column {k}")))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let timestamp = if has_time {
                let s = field(r, VISUAL_DIM + 1, "timestamp")?;
                parse_timestamp(s).ok_or_else(|| format!("timestamp `{s}` is neither epoch seconds nor a date-time"))?
            } else {
                0.0
            };
            Ok(EmbeddingRow { image_id: id.to_string(), visual, timestamp })
        },
    )
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().or_else(|| {
        if s.len() == 8 {
            NaiveDate::parse_from_str(s, "%Y%m%d").ok()
        } else {
            None
        }
    })
}

/// Weather records with columns `date,INST,GLOT,SIGMA` (any order, case-insensitive).
///
/// Dates are `YYYY-MM-DD` or `YYYYMMDD`. SIGMA is read as a percentage when
/// any value exceeds 1 and must end up in `[0, 1]`.
pub fn parse_weather(text: &str) -> Result<Vec<DayRecord>> {
    let mut seen: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    let mut count = 0;
    let mut records = read_rows(
        text,
        |head| Ok([column(head, "date")?, column(head, "INST")?, column(head, "GLOT")?, column(head, "SIGMA")?]),
        |cols, r| {
            count += 1;
            let d = field(r, cols[0], "date")?;
            let date = parse_date(d).ok_or_else(|| format!("date `{d}` is not YYYY-MM-DD or YYYYMMDD"))?;
            if let Some(first) = seen.insert(date, count) {
                return Err(format!("date {date} repeats data row {first}"));
            }
            let sigma = finite(r, cols[3], "SIGMA")?;
            if sigma < 0.0 {
                return Err(format!("SIGMA {sigma} is negative"));
            }
            Ok(DayRecord { date, inst: finite(r, cols[1], "INST")?, glot: finite(r, cols[2], "GLOT")?, sigma })
        },
    )?;
    if records.iter().any(|r| r.sigma > 1.0) {
        for r in &mut records {
            r.sigma /= 100.0;
        }
    }
    if let Some(r) = records.iter().find(|r| r.sigma > 1.0) {
        return Err(IoError::InvalidValue {
            key: "SIGMA".into(),
            reason: format!("{} on {} exceeds 100 %", r.sigma * 100.0, r.date),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn embedding_text(rows: usize, with_time: bool) -> String {
        let mut header = vec!["image_id".to_string()];
        header.extend((0..VISUAL_DIM).map(|k| format!("v{k}")));
        if with_time {
            header.push("timestamp".into());
        }
        let mut out = header.join(",") + "\n";
        for i in 0..rows {
            let mut row = vec![format!("img{i}")];
            row.extend((0..VISUAL_DIM).map(|k| format!("{}", (i * k) as f64 * 0.5)));
            if with_time {
                row.push(if i % 2 == 0 { format!("{}", 1_700_000_000 + i) } else { "2025-02-10T12:00:00Z".into() });
            }
            out += &(row.join(",") + "\n");
        }
        out
    }

    #[test]
    fn size_csv_header_only_when_empty() {
        assert_eq!(write_size_csv(&[]), "object_id,image_id,class_id,dim_x_cm,dim_y_cm,range_m\n");
    }

    #[test]
    fn size_csv_round_trip_and_quoting() {
        let rows = vec![
            SizeRow {
                object_id: "a,b_3".into(),
                image_id: "a,b".into(),
                class_id: Some(1),
                dim_x_cm: 30.123456789,
                dim_y_cm: 20.0,
                range_m: 5.5,
            },
            SizeRow {
                object_id: "c_1".into(),
                image_id: "c".into(),
                class_id: None,
                dim_x_cm: 1e-7,
                dim_y_cm: 123456789.0,
                range_m: 1.0,
            },
        ];
        let text = write_size_csv(&rows);
        assert!(text.contains("\"a,b_3\",\"a,b\",1,30.1235,20,5.5\n"), "{text}");
        let back = parse_size_table(&text).unwrap();
        assert_eq!(back[0].object_id, "a,b_3");
        assert_eq!(back[1].dim_y_cm, 123457000.0);
        assert_eq!(write_size_csv(&rows), text);
    }

    #[test]
    fn size_table_errors() {
        assert_eq!(parse_size_table("object_id,dim_x_cm\n"), Err(IoError::MissingColumn("dim_y_cm".into())));
        let err = parse_size_table("object_id,dim_x_cm,dim_y_cm\na,1,2\na,1,2\nb,x,2\nc,1\n").unwrap_err();
        assert_eq!(err.lines(), vec![3, 4, 5]);
    }

    #[test]
    fn embeddings() {
        let rows = parse_embeddings(&embedding_text(3, true)).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].visual[4], 4.0);
        assert_eq!(rows[0].timestamp, 1_700_000_000.0);
        assert_eq!(rows[1].timestamp, 1_739_188_800.0);
        assert_eq!(parse_embeddings(&embedding_text(2, false)).unwrap()[1].timestamp, 0.0);
        assert!(matches!(parse_embeddings("image_id,a,b\nx,1,2\n"), Err(IoError::Syntax { line: 1, .. })));
        let mut dup = embedding_text(2, false);
        let second = dup.lines().nth(1).unwrap().to_owned();
        dup += &second;
        assert_eq!(parse_embeddings(&dup).unwrap_err().lines(), vec![4]);
    }

    #[test]
    fn weather() {
        let text = "date,INST,GLOT,SIGMA\n2025-02-10,0.1,120,3\n20250220,9.5,1100,95\n";
        let r = parse_weather(text).unwrap();
        assert_eq!(r[1].date, NaiveDate::from_ymd_opt(2025, 2, 20).unwrap());
        assert!((r[0].sigma - 0.03).abs() < 1e-15);
        let fractions = parse_weather("SIGMA,date,GLOT,INST\n0.5,2025-02-01,1,2\n").unwrap();
        assert_eq!(fractions[0].sigma, 0.5);
        assert_eq!(fractions[0].inst, 2.0);
        assert!(parse_weather("date,INST,GLOT,SIGMA\n2025-02-10,0.1,120,300\n").is_err());
        let err = parse_weather("date,INST,GLOT,SIGMA\n2025-02-30,1,1,1\n2025-02-01,a,1,1\n").unwrap_err();
        assert_eq!(err.lines(), vec![2, 3]);
    }
}
