use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;

use crate::correction::{
    error_report, fit, strategy_grid, Axis, CorrectionModel, CorrectionStage, ErrorReport, GridCell, PairedSample,
    StageModels, TripleSample,
};
use crate::evaluation::{map_suite, EvalConfig};
use crate::geometry::{estimate_size, pixel_sensitivity_with_shift, CameraRig, GeometryError, PixelBox};
use crate::io::{
    parse_embeddings, parse_labels, parse_labels_normalized, parse_rig, parse_size_table, parse_weather,
    write_cluster_labels, write_json_report, write_models, write_reduced_csv, write_size_csv, write_size_table,
    ConfidenceField, IoError, ParsedBox, SizeRecord, SizeRow,
};
use crate::leakage::{
    build_embedding, cluster_split, dbcv, dbscan, embedding_matrix, reduce, select_extreme_days, ClusterPartition,
    ExtremeDays, LeakageError, Subset, TsneParams,
};

use super::{
    create_dir, geometry_reason, label_files, read_file, write_file, CliError, CorrectArgs, EvaluateArgs, Outcome,
    Result, RunManifest, SelectDaysArgs, SensitivityArgs, SizeArgs, SplitArgs,
};

const SPLIT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

fn load_rig(path: &Path) -> Result<CameraRig> {
    parse_rig(&read_file(path)?).map_err(|source| CliError::Parse { path: path.into(), source })
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Parses every label file of `dir`; unreadable or malformed files go to the skip log.
fn load_label_dir(
    dir: &Path,
    manifest: &mut RunManifest,
    parse: impl Fn(&str) -> std::result::Result<Vec<ParsedBox>, IoError>,
) -> Result<Vec<(String, Vec<ParsedBox>)>> {
    let files = label_files(dir)?;
    if files.is_empty() {
        return Err(CliError::EmptyInput(format!("no .txt label files in {}", dir.display())));
    }
    let mut out = Vec::with_capacity(files.len());
    for (image_id, path) in files {
        let text = match read_file(&path) {
            Ok(t) => t,
            Err(e) => {
                manifest.skip(file_name(&path), "unreadable_file", e);
                continue;
            }
        };
        match parse(&text) {
            Ok(boxes) => {
                for b in boxes.iter().filter(|b| b.clamped) {
                    log::info!("{}:{}: box clamped to the image", file_name(&path), b.line);
                }
                out.push((image_id, boxes));
            }
            Err(e) => manifest.skip(file_name(&path), "malformed_file", e),
        }
    }
    Ok(out)
}

fn finish(manifest: &mut RunManifest, out: &Path, processed: usize, summary: String) -> Result<Outcome> {
    manifest.processed = processed;
    manifest.write(out)?;
    Ok(Outcome { processed, skipped: manifest.skipped.len(), summary })
}

pub fn run_size(a: &SizeArgs) -> Result<Outcome> {
    let rig = load_rig(&a.rig)?;
    let mut manifest = RunManifest::new("size", &[&a.labels], Some(&a.rig), None, &a.out);
    let images = load_label_dir(&a.labels, &mut manifest, |t| {
        parse_labels(t, rig.image_w_px(), rig.image_h_px(), ConfidenceField::Optional)
    })?;
    create_dir(&a.out)?;
    let mut rows = Vec::new();
    for (image_id, boxes) in &images {
        for b in boxes {
            let object_id = format!("{image_id}_{}", b.line);
            match estimate_size(&rig, &b.bbox) {
                Ok(est) => rows.push(SizeRow {
                    object_id,
                    image_id: image_id.clone(),
                    class_id: Some(b.label.class_id),
                    dim_x_cm: est.dim_x_cm(),
                    dim_y_cm: est.dim_y_cm(),
                    range_m: est.range_m(),
                }),
                Err(e) => manifest.skip(object_id, geometry_reason(&e), e),
            }
        }
    }
    let path = a.out.join("sizes.csv");
    write_file(&path, &write_size_csv(&rows))?;
    let outcome = finish(
        &mut manifest,
        &a.out,
        rows.len(),
        format!("{} size estimates written to {}", rows.len(), path.display()),
    )?;
    if rows.is_empty() {
        return Err(CliError::NothingProcessed("no box produced a size estimate".into()));
    }
    Ok(outcome)
}

fn load_sizes(path: &Path) -> Result<BTreeMap<String, SizeRecord>> {
    let records =
        parse_size_table(&read_file(path)?).map_err(|source| CliError::Parse { path: path.into(), source })?;
    Ok(records.into_iter().map(|r| (r.object_id.clone(), r)).collect())
}

fn missing(from: &BTreeMap<String, SizeRecord>, other: &BTreeMap<String, SizeRecord>) -> Vec<String> {
    from.keys().filter(|k| !other.contains_key(*k)).cloned().collect()
}

#[derive(Serialize)]
struct AxisFit {
    model: CorrectionModel,
    monotone: bool,
    before: ErrorReport,
    after: ErrorReport,
}

#[derive(Serialize)]
struct CorrectionRun {
    stage: CorrectionStage,
    degree: usize,
    n: usize,
    width: AxisFit,
    height: AxisFit,
}

#[derive(Serialize)]
struct StrategyGrid {
    width: Vec<GridCell>,
    height: Vec<GridCell>,
}

fn fit_axis(pairs: &[PairedSample], degree: usize, axis: Axis, stage: CorrectionStage) -> Result<(AxisFit, Vec<f64>)> {
    let model = fit(pairs, degree, axis, stage)?;
    let corrected: Vec<f64> = pairs.iter().map(|p| model.apply(p.predicted)).collect();
    let after: Vec<PairedSample> = pairs
        .iter()
        .zip(&corrected)
        .map(|(p, &c)| PairedSample { predicted: c, reference: p.reference, object_id: p.object_id.clone() })
        .collect();
    let before = error_report(pairs)?;
    let after = error_report(&after)?;
    Ok((AxisFit { monotone: model.is_monotone(), model, before, after }, corrected))
}

pub fn run_correct(a: &CorrectArgs) -> Result<Outcome> {
    let mut inputs: Vec<&Path> = vec![&a.pred, &a.reference];
    if let Some(s) = &a.shape_ref {
        inputs.push(s);
    }
    let mut manifest = RunManifest::new("correct", &inputs, None, None, &a.out);
    let pred = load_sizes(&a.pred)?;
    let reference = load_sizes(&a.reference)?;
    let annotated = a.shape_ref.as_deref().map(load_sizes).transpose()?;

    let mut missing_reference = missing(&pred, &reference);
    let missing_prediction = missing(&reference, &pred);
    if let Some(ann) = &annotated {
        missing_reference.extend(missing(&pred, ann).into_iter().map(|id| format!("{id} (shape-ref)")));
    }
    if !missing_reference.is_empty() || !missing_prediction.is_empty() {
        return Err(CliError::UnpairedSamples { missing_reference, missing_prediction });
    }

    let stage: CorrectionStage = a.stage.into();
    let mut width = Vec::new();
    let mut height = Vec::new();
    let mut triples: [Vec<TripleSample>; 2] = [Vec::new(), Vec::new()];
    for (id, p) in &pred {
        let r = &reference[id];
        let pair = PairedSample::new(id.as_str(), p.dim_x_cm, r.dim_x_cm)
            .and_then(|w| Ok((w, PairedSample::new(id.as_str(), p.dim_y_cm, r.dim_y_cm)?)));
        let (w, h) = match pair {
            Ok(pair) => pair,
            Err(e) => {
                manifest.skip(id.as_str(), "invalid_sample", e);
                continue;
            }
        };
        if let Some(ann) = &annotated {
            let s = &ann[id];
            if !(s.dim_x_cm > 0.0 && s.dim_y_cm > 0.0) {
                manifest.skip(id.as_str(), "invalid_sample", "shape-ref size must be > 0");
                continue;
            }
            triples[0].push(TripleSample {
                object_id: id.clone(),
                detected: p.dim_x_cm,
                annotated: s.dim_x_cm,
                measured: r.dim_x_cm,
            });
            triples[1].push(TripleSample {
                object_id: id.clone(),
                detected: p.dim_y_cm,
                annotated: s.dim_y_cm,
                measured: r.dim_y_cm,
            });
        }
        width.push(w);
        height.push(h);
    }
    if width.is_empty() {
        return Err(CliError::NothingProcessed("no valid predicted/reference pair".into()));
    }

    let (width_fit, width_corrected) = fit_axis(&width, a.degree, Axis::Width, stage)?;
    let (height_fit, height_corrected) = fit_axis(&height, a.degree, Axis::Height, stage)?;
    let grid = if annotated.is_some() {
        Some(StrategyGrid {
            width: strategy_grid(&triples[0], Axis::Width)?,
            height: strategy_grid(&triples[1], Axis::Height)?,
        })
    } else {
        None
    };

    create_dir(&a.out)?;
    let models = StageModels { width: width_fit.model.clone(), height: height_fit.model.clone() };
    write_file(&a.out.join("model.json"), &write_models(&models))?;
    let corrected: Vec<SizeRecord> = width
        .iter()
        .zip(width_corrected.iter().zip(&height_corrected))
        .map(|(p, (&x, &y))| SizeRecord { object_id: p.object_id.clone(), dim_x_cm: x, dim_y_cm: y })
        .collect();
    write_file(&a.out.join("corrected.csv"), &write_size_table(&corrected))?;
    if let Some(grid) = &grid {
        write_file(&a.out.join("grid.json"), &write_json_report(grid))?;
    }
    let run = CorrectionRun { stage, degree: a.degree, n: width.len(), width: width_fit, height: height_fit };
    let summary = format!(
        "{} pairs; RMSE width {:.3} -> {:.3} cm, height {:.3} -> {:.3} cm",
        run.n, run.width.before.rmse, run.width.after.rmse, run.height.before.rmse, run.height.after.rmse
    );
    write_file(&a.out.join("correction_report.json"), &write_json_report(&run))?;
    finish(&mut manifest, &a.out, run.n, summary)
}

pub fn run_evaluate(a: &EvaluateArgs) -> Result<Outcome> {
    let rig = a.rig.as_deref().map(load_rig).transpose()?;
    let mut manifest = RunManifest::new("evaluate", &[&a.det, &a.gt], a.rig.as_deref(), None, &a.out);
    let parse = |text: &str, conf: ConfidenceField| match &rig {
        Some(r) => parse_labels(text, r.image_w_px(), r.image_h_px(), conf),
        None => parse_labels_normalized(text, conf),
    };

    let gt_files = label_files(&a.gt)?;
    if gt_files.is_empty() {
        return Err(CliError::EmptyInput(format!("no .txt label files in {}", a.gt.display())));
    }
    let det_files: BTreeMap<String, _> = label_files(&a.det)?.into_iter().collect();
    let gt_ids: BTreeSet<&String> = gt_files.iter().map(|(id, _)| id).collect();
    let extra: Vec<&str> = det_files.keys().filter(|id| !gt_ids.contains(id)).map(String::as_str).collect();
    if !extra.is_empty() {
        return Err(CliError::DisjointImageSets(format!("detections without ground truth: {}", extra.join(", "))));
    }
    if det_files.is_empty() {
        return Err(CliError::DisjointImageSets(format!(
            "{} holds no detection file for any of the {} ground-truth images",
            a.det.display(),
            gt_files.len()
        )));
    }

    let mut dets = Vec::new();
    let mut gts = Vec::new();
    let mut images = 0;
    for (image_id, gt_path) in &gt_files {
        let gt_boxes = match read_file(gt_path).map(|t| parse(&t, ConfidenceField::Absent)) {
            Ok(Ok(b)) => b,
            Ok(Err(e)) => {
                manifest.skip(file_name(gt_path), "malformed_file", e);
                continue;
            }
            Err(e) => {
                manifest.skip(file_name(gt_path), "unreadable_file", e);
                continue;
            }
        };
        let det_boxes = match det_files.get(image_id) {
            None => {
                log::info!("{image_id}: no detection file, scored as no detections");
                Vec::new()
            }
            Some(path) => match read_file(path).map(|t| parse(&t, ConfidenceField::Required)) {
                Ok(Ok(b)) => b,
                Ok(Err(e)) => {
                    manifest.skip(format!("det/{}", file_name(path)), "malformed_file", e);
                    continue;
                }
                Err(e) => {
                    manifest.skip(format!("det/{}", file_name(path)), "unreadable_file", e);
                    continue;
                }
            },
        };
        gts.extend(gt_boxes.iter().map(|b| b.ground_truth(image_id)));
        dets.extend(det_boxes.iter().map(|b| b.detection(image_id)));
        images += 1;
    }
    if images == 0 {
        manifest.write(&a.out)?;
        return Err(CliError::NothingProcessed("every image was skipped".into()));
    }
    let config = EvalConfig { conf_thresh: a.conf_thresh, num_classes: a.num_classes, iou_thresh: a.iou };
    let report = map_suite(&dets, &gts, &config)?;
    create_dir(&a.out)?;
    write_file(&a.out.join("eval_report.json"), &write_json_report(&report))?;
    let summary = format!(
        "{images} images: P {:.4} R {:.4} mAP50 {:.4} mAP50-95 {:.4}",
        report.precision, report.recall, report.map50, report.map50_95
    );
    finish(&mut manifest, &a.out, images, summary)
}

pub fn run_split(a: &SplitArgs) -> Result<Outcome> {
    let mut inputs: Vec<&Path> = vec![&a.embeddings];
    if let Some(dir) = &a.annotations {
        inputs.push(dir);
    }
    let mut manifest = RunManifest::new("split", &inputs, None, Some(a.seed), &a.out);
    let mut rows = parse_embeddings(&read_file(&a.embeddings)?)
        .map_err(|source| CliError::Parse { path: a.embeddings.clone(), source })?;
    if rows.is_empty() {
        return Err(CliError::EmptyInput(format!("{} has no embedding rows", a.embeddings.display())));
    }
    rows.sort_by(|x, y| x.image_id.cmp(&y.image_id));

    let mut annotations: BTreeMap<String, Vec<ParsedBox>> = BTreeMap::new();
    if let Some(dir) = &a.annotations {
        let known: BTreeSet<&str> = rows.iter().map(|r| r.image_id.as_str()).collect();
        let unknown: Vec<String> =
            label_files(dir)?.into_iter().map(|(id, _)| id).filter(|id| !known.contains(id.as_str())).collect();
        if !unknown.is_empty() {
            return Err(CliError::InconsistentIds(unknown));
        }
        for (id, path) in label_files(dir)? {
            match read_file(&path).map(|t| parse_labels_normalized(&t, ConfidenceField::Optional)) {
                Ok(Ok(b)) => {
                    annotations.insert(id, b);
                }
                Ok(Err(e)) => manifest.skip(id, "malformed_annotations", e),
                Err(e) => manifest.skip(id, "unreadable_file", e),
            }
        }
    }
    let skipped: BTreeSet<String> = manifest.skipped.iter().map(|s| s.item.clone()).collect();

    let mut embeddings = Vec::with_capacity(rows.len());
    for row in rows.into_iter().filter(|r| !skipped.contains(&r.image_id)) {
        let gts: Vec<_> = annotations
            .get(&row.image_id)
            .map(|b| b.iter().map(|b| b.ground_truth(&row.image_id)).collect())
            .unwrap_or_default();
        embeddings.push(build_embedding(row.image_id, row.visual, &gts, row.timestamp)?);
    }
    if embeddings.is_empty() {
        manifest.write(&a.out)?;
        return Err(CliError::NothingProcessed("every image was skipped".into()));
    }
    let ids: Vec<String> = embeddings.iter().map(|e| e.image_id.clone()).collect();
    let params =
        TsneParams { perplexity: a.perplexity, learning_rate: a.learning_rate, seed: a.seed, ..Default::default() };
    let reduced = reduce(&ids, &embedding_matrix(&embeddings), &params)?;
    let points: Vec<[f64; 2]> = reduced.iter().map(|r| [r.x, r.y]).collect();
    let labels = dbscan(&points, a.eps, a.min_samples)?;
    let score = match dbcv(&points, &labels) {
        Ok(s) => Some(s),
        Err(LeakageError::TooFewClusters(k)) => {
            log::warn!("DBCV undefined with {k} cluster(s) of two or more points");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let split = cluster_split(&labels, SPLIT_RATIOS, a.seed)?;
    let partition = ClusterPartition::new(&ids, &labels, score, &split);

    create_dir(&a.out)?;
    write_file(&a.out.join("reduced.csv"), &write_reduced_csv(&reduced))?;
    write_file(&a.out.join("labels.csv"), &write_cluster_labels(&ids, &labels))?;
    write_file(&a.out.join("partition.json"), &write_json_report(&partition))?;
    for subset in Subset::ALL {
        let members: String = partition.members(subset).iter().map(|id| format!("{id}\n")).collect();
        write_file(&a.out.join(format!("{}.txt", subset.as_str())), &members)?;
    }
    let clusters = labels.iter().filter(|&&l| l >= 0).collect::<BTreeSet<_>>().len();
    let noise = labels.iter().filter(|&&l| l < 0).count();
    let summary = format!(
        "{} images, {clusters} clusters, {noise} noise; DBCV {}; train/val/test {}/{}/{}",
        ids.len(),
        score.map_or("undefined".into(), |s| format!("{s:.4}")),
        split.counts[0],
        split.counts[1],
        split.counts[2]
    );
    finish(&mut manifest, &a.out, ids.len(), summary)
}

#[derive(Serialize)]
struct SensitivityOutput {
    s_width_cm: f64,
    s_height_cm: f64,
    shift_px: f64,
    evaluated: usize,
    skipped: usize,
}

pub fn run_sensitivity(a: &SensitivityArgs) -> Result<Outcome> {
    let rig = load_rig(&a.rig)?;
    let mut manifest = RunManifest::new("sensitivity", &[&a.labels], Some(&a.rig), None, &a.out);
    let images = load_label_dir(&a.labels, &mut manifest, |t| {
        parse_labels(t, rig.image_w_px(), rig.image_h_px(), ConfidenceField::Optional)
    })?;
    create_dir(&a.out)?;
    let mut kept: Vec<PixelBox> = Vec::new();
    let mut box_skips = 0;
    for (image_id, boxes) in &images {
        for b in boxes {
            match pixel_sensitivity_with_shift(&rig, &[b.bbox], a.shift) {
                Ok(_) => kept.push(b.bbox),
                Err(e) => {
                    box_skips += 1;
                    let reason = match e.root() {
                        GeometryError::OutOfView(_) => "shift_leaves_image",
                        other => geometry_reason(other),
                    };
                    manifest.skip(format!("{image_id}_{}", b.line), reason, e);
                }
            }
        }
    }
    if kept.is_empty() {
        manifest.write(&a.out)?;
        return Err(CliError::NothingProcessed("no box can be shifted and sized".into()));
    }
    let report = pixel_sensitivity_with_shift(&rig, &kept, a.shift)?;
    let output = SensitivityOutput {
        s_width_cm: report.s_width_cm,
        s_height_cm: report.s_height_cm,
        shift_px: a.shift,
        evaluated: report.evaluated,
        skipped: report.skipped + box_skips,
    };
    write_file(&a.out.join("sensitivity.json"), &write_json_report(&output))?;
    let summary = format!(
        "S_width {:.4} cm, S_height {:.4} cm over {} boxes ({} skipped)",
        output.s_width_cm, output.s_height_cm, output.evaluated, output.skipped
    );
    finish(&mut manifest, &a.out, report.evaluated, summary)
}

pub fn run_select_days(a: &SelectDaysArgs) -> Result<Outcome> {
    let mut manifest = RunManifest::new("select-days", &[&a.weather], None, None, &a.out);
    let records =
        parse_weather(&read_file(&a.weather)?).map_err(|source| CliError::Parse { path: a.weather.clone(), source })?;
    let days: ExtremeDays = select_extreme_days(&records)?;
    create_dir(&a.out)?;
    write_file(&a.out.join("days.json"), &write_json_report(&days))?;
    let summary = format!("cloudiest {} sunniest {}", days.cloudiest, days.sunniest);
    finish(&mut manifest, &a.out, records.len(), summary)
}
