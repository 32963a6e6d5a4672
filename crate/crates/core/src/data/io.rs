//! Dataset persistence: JSON-lines (canonical) and a CSV pair.
//!
//! JSON-lines stores one profile per line, ground truth and predictions
//! together, and round-trips every optional field. The CSV pair
//! (`samples.csv` + `predictions.csv` inside a directory) flattens profiles
//! to one row per marker slot for spreadsheet-friendly interchange; it
//! requires a uniform dropout-replicate count across bundles.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! save/load preserves every value bit for bit in both formats.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::data::types::{Dataset, PredictionBundle, ProfileSample, DEPTH_SLOTS};
use crate::error::{Result, TriageError};

/// On-disk representation to read or write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireFormat {
    /// One JSON object per line; the canonical format.
    JsonLines,
    /// Directory holding `samples.csv` and `predictions.csv`.
    CsvPair,
}

impl std::str::FromStr for WireFormat {
    type Err = TriageError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" | "json-lines" => Ok(WireFormat::JsonLines),
            "csv" | "csv-pair" => Ok(WireFormat::CsvPair),
            other => Err(TriageError::Config(format!(
                "unknown format `{other}` (expected jsonl|csv-pair)"
            ))),
        }
    }
}

impl std::fmt::Display for WireFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WireFormat::JsonLines => "jsonl",
            WireFormat::CsvPair => "csv-pair",
        })
    }
}

/// Loads and validates a dataset.
pub fn load_dataset(path: &Path, format: WireFormat) -> Result<Dataset> {
    let ds = match format {
        WireFormat::JsonLines => load_jsonl(path)?,
        WireFormat::CsvPair => load_csv_pair(path)?,
    };
    ds.validate()?;
    Ok(ds)
}

/// Saves a dataset; parent directories must already exist for JSON-lines,
/// while the CSV pair creates its own directory.
pub fn save_dataset(ds: &Dataset, path: &Path, format: WireFormat) -> Result<()> {
    match format {
        WireFormat::JsonLines => save_jsonl(ds, path),
        WireFormat::CsvPair => save_csv_pair(ds, path),
    }
}

// ───────────────────────── JSON-lines ─────────────────────────

fn get_field<T: DeserializeOwned>(record: &Value, line: usize, name: &str) -> Result<T> {
    let value = record.get(name).ok_or_else(|| TriageError::Schema {
        line,
        field: name.to_string(),
    })?;
    serde_json::from_value(value.clone()).map_err(|_| TriageError::Schema {
        line,
        field: name.to_string(),
    })
}

fn get_optional<T: DeserializeOwned>(record: &Value, line: usize, name: &str) -> Result<Option<T>> {
    match record.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(value) => serde_json::from_value(value.clone())
            .map(Some)
            .map_err(|_| TriageError::Schema {
                line,
                field: name.to_string(),
            }),
    }
}

fn load_jsonl(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| TriageError::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);

    let mut samples = Vec::new();
    let mut predictions = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(|e| TriageError::io(path.display().to_string(), e))?;
        if text.trim().is_empty() {
            continue;
        }
        let record: Value = serde_json::from_str(&text).map_err(|e| TriageError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;

        let id: String = get_field(&record, line_no, "id")?;
        samples.push(ProfileSample {
            id: id.clone(),
            num_horizons: get_field(&record, line_no, "num_horizons")?,
            true_depths: get_field(&record, line_no, "true_depths")?,
            true_labels: get_field(&record, line_no, "true_labels")?,
            features: get_field(&record, line_no, "features")?,
            split: get_field(&record, line_no, "split")?,
        });

        let pred_depths: Option<Vec<f64>> = get_optional(&record, line_no, "pred_depths")?;
        let softmax: Option<Vec<Vec<f64>>> = get_optional(&record, line_no, "softmax")?;
        let mcd_depths: Option<Vec<Vec<f64>>> = get_optional(&record, line_no, "mcd_depths")?;
        let residuals: Option<Vec<f64>> = get_optional(&record, line_no, "residuals")?;
        let has_any =
            pred_depths.is_some() || softmax.is_some() || mcd_depths.is_some() || residuals.is_some();
        if has_any {
            // A bundle is all-or-nothing on its required halves.
            let pred_depths = pred_depths.ok_or_else(|| TriageError::Schema {
                line: line_no,
                field: "pred_depths".to_string(),
            })?;
            let softmax = softmax.ok_or_else(|| TriageError::Schema {
                line: line_no,
                field: "softmax".to_string(),
            })?;
            predictions.insert(
                id.clone(),
                PredictionBundle {
                    id,
                    pred_depths,
                    mcd_depths,
                    softmax,
                    residuals,
                },
            );
        }
    }

    assemble(samples, predictions)
}

fn save_jsonl(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| TriageError::io(path.display().to_string(), e))?;
    let mut out = std::io::BufWriter::new(file);
    for sample in &ds.samples {
        let mut record = serde_json::Map::new();
        record.insert("id".into(), serde_json::to_value(&sample.id).unwrap());
        record.insert(
            "num_horizons".into(),
            serde_json::to_value(sample.num_horizons).unwrap(),
        );
        record.insert(
            "true_depths".into(),
            serde_json::to_value(&sample.true_depths).unwrap(),
        );
        record.insert(
            "true_labels".into(),
            serde_json::to_value(&sample.true_labels).unwrap(),
        );
        record.insert(
            "features".into(),
            serde_json::to_value(&sample.features).unwrap(),
        );
        record.insert("split".into(), serde_json::to_value(sample.split).unwrap());
        if let Some(bundle) = ds.predictions.get(&sample.id) {
            record.insert(
                "pred_depths".into(),
                serde_json::to_value(&bundle.pred_depths).unwrap(),
            );
            if let Some(mcd) = &bundle.mcd_depths {
                record.insert("mcd_depths".into(), serde_json::to_value(mcd).unwrap());
            }
            record.insert(
                "softmax".into(),
                serde_json::to_value(&bundle.softmax).unwrap(),
            );
            if let Some(res) = &bundle.residuals {
                record.insert("residuals".into(), serde_json::to_value(res).unwrap());
            }
        }
        let line = serde_json::to_string(&Value::Object(record)).expect("serializable record");
        writeln!(out, "{line}").map_err(|e| TriageError::io(path.display().to_string(), e))?;
    }
    out.flush()
        .map_err(|e| TriageError::io(path.display().to_string(), e))
}

/// Infers dataset dimensions from loaded records and cross-checks them.
fn assemble(
    samples: Vec<ProfileSample>,
    predictions: BTreeMap<String, PredictionBundle>,
) -> Result<Dataset> {
    if samples.is_empty() {
        return Err(TriageError::invariant("<dataset>", "contains no records"));
    }
    let feature_dim = samples
        .first()
        .and_then(|s| s.features.first())
        .map(|row| row.len())
        .unwrap_or(0);
    let class_count = match predictions.values().next().and_then(|b| b.softmax.first()) {
        Some(row) => row.len(),
        None => samples
            .iter()
            .flat_map(|s| s.true_labels.iter().copied())
            .max()
            .unwrap_or(1),
    };
    Ok(Dataset {
        samples,
        predictions,
        class_count,
        feature_dim,
    })
}

// ───────────────────────── CSV pair ─────────────────────────

/// Formats a float with shortest round-trip precision, empty for `None`.
fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_cell<T: std::str::FromStr>(text: &str, line: usize, field: &str) -> Result<T> {
    text.parse().map_err(|_| TriageError::Schema {
        line,
        field: field.to_string(),
    })
}

fn parse_optional_cell(text: &str, line: usize, field: &str) -> Result<Option<f64>> {
    if text.is_empty() {
        Ok(None)
    } else {
        parse_cell(text, line, field).map(Some)
    }
}

fn save_csv_pair(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| TriageError::io(dir.display().to_string(), e))?;

    // Uniform replicate count across bundles that carry dropout matrices.
    let mut mcd_runs = 0usize;
    for bundle in ds.predictions.values() {
        if let Some(mcd) = &bundle.mcd_depths {
            if mcd_runs == 0 {
                mcd_runs = mcd.len();
            } else if mcd.len() != mcd_runs {
                return Err(TriageError::invariant(
                    &bundle.id,
                    format!(
                        "csv-pair requires a uniform replicate count, found {} and {mcd_runs}",
                        mcd.len()
                    ),
                ));
            }
        }
    }

    let samples_path = dir.join("samples.csv");
    let mut w = csv::Writer::from_path(&samples_path)
        .map_err(|e| TriageError::io(samples_path.display().to_string(), e.into()))?;
    let mut header = vec![
        "id".to_string(),
        "num_horizons".into(),
        "horizon_index".into(),
        "true_depth".into(),
        "true_label".into(),
        "split".into(),
    ];
    header.extend((0..ds.feature_dim).map(|j| format!("f{j}")));
    w.write_record(&header)
        .map_err(|e| TriageError::io(samples_path.display().to_string(), e.into()))?;
    for sample in &ds.samples {
        for t in 0..DEPTH_SLOTS {
            let mut row = vec![
                sample.id.clone(),
                sample.num_horizons.to_string(),
                (t + 1).to_string(),
                sample.true_depths[t].to_string(),
                if t < sample.num_horizons {
                    sample.true_labels[t].to_string()
                } else {
                    String::new()
                },
                sample.split.to_string(),
            ];
            for j in 0..ds.feature_dim {
                row.push(if t < sample.num_horizons {
                    sample.features[t][j].to_string()
                } else {
                    String::new()
                });
            }
            w.write_record(&row)
                .map_err(|e| TriageError::io(samples_path.display().to_string(), e.into()))?;
        }
    }
    w.flush()
        .map_err(|e| TriageError::io(samples_path.display().to_string(), e))?;

    let preds_path = dir.join("predictions.csv");
    let mut w = csv::Writer::from_path(&preds_path)
        .map_err(|e| TriageError::io(preds_path.display().to_string(), e.into()))?;
    let mut header = vec![
        "id".to_string(),
        "horizon_index".into(),
        "pred_depth".into(),
        "residual".into(),
    ];
    header.extend((1..=mcd_runs).map(|r| format!("mcd_{r}")));
    header.extend((1..=ds.class_count).map(|k| format!("prob_{k}")));
    w.write_record(&header)
        .map_err(|e| TriageError::io(preds_path.display().to_string(), e.into()))?;
    for sample in &ds.samples {
        let Some(bundle) = ds.predictions.get(&sample.id) else {
            continue;
        };
        for t in 0..DEPTH_SLOTS {
            let mut row = vec![
                bundle.id.clone(),
                (t + 1).to_string(),
                bundle.pred_depths[t].to_string(),
                cell(bundle.residuals.as_ref().map(|r| r[t])),
            ];
            for r in 0..mcd_runs {
                row.push(cell(bundle.mcd_depths.as_ref().map(|m| m[r][t])));
            }
            for k in 0..ds.class_count {
                row.push(if t < sample.num_horizons {
                    bundle.softmax[t][k].to_string()
                } else {
                    String::new()
                });
            }
            w.write_record(&row)
                .map_err(|e| TriageError::io(preds_path.display().to_string(), e.into()))?;
        }
    }
    w.flush()
        .map_err(|e| TriageError::io(preds_path.display().to_string(), e))
}

fn load_csv_pair(dir: &Path) -> Result<Dataset> {
    let samples_path = dir.join("samples.csv");
    let mut reader = csv::Reader::from_path(&samples_path)
        .map_err(|e| TriageError::io(samples_path.display().to_string(), e.into()))?;
    let headers = reader
        .headers()
        .map_err(|e| TriageError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let feature_dim = headers.iter().filter(|h| h.starts_with('f')).count();

    // Rows for one profile must be contiguous and ordered by marker slot.
    let mut samples: Vec<ProfileSample> = Vec::new();
    for entry in reader.records() {
        let record = entry.map_err(|e| TriageError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize, name: &str| -> Result<&str> {
            record.get(i).ok_or_else(|| TriageError::Schema {
                line,
                field: name.to_string(),
            })
        };
        let id = field(0, "id")?.to_string();
        let num_horizons: usize = parse_cell(field(1, "num_horizons")?, line, "num_horizons")?;
        let t: usize = parse_cell(field(2, "horizon_index")?, line, "horizon_index")?;
        let depth: f64 = parse_cell(field(3, "true_depth")?, line, "true_depth")?;

        if samples.last().map(|s| s.id != id).unwrap_or(true) {
            if t != 1 {
                return Err(TriageError::invariant(
                    &id,
                    format!("rows out of order: profile starts at horizon_index {t}"),
                ));
            }
            samples.push(ProfileSample {
                id: id.clone(),
                num_horizons,
                true_depths: Vec::new(),
                true_labels: Vec::new(),
                features: Vec::new(),
                split: field(5, "split")?.parse()?,
            });
        }
        let sample = samples.last_mut().expect("pushed above");
        if t != sample.true_depths.len() + 1 {
            return Err(TriageError::invariant(
                &id,
                format!("rows out of order at horizon_index {t}"),
            ));
        }
        sample.true_depths.push(depth);
        if t <= num_horizons {
            sample
                .true_labels
                .push(parse_cell(field(4, "true_label")?, line, "true_label")?);
            let mut row = Vec::with_capacity(feature_dim);
            for j in 0..feature_dim {
                row.push(parse_cell(field(6 + j, "features")?, line, "features")?);
            }
            sample.features.push(row);
        }
    }

    let preds_path = dir.join("predictions.csv");
    let mut predictions = BTreeMap::new();
    if preds_path.exists() {
        let horizon_counts: BTreeMap<&str, usize> = samples
            .iter()
            .map(|s| (s.id.as_str(), s.num_horizons))
            .collect();
        let mut reader = csv::Reader::from_path(&preds_path)
            .map_err(|e| TriageError::io(preds_path.display().to_string(), e.into()))?;
        let headers = reader
            .headers()
            .map_err(|e| TriageError::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let mcd_runs = headers.iter().filter(|h| h.starts_with("mcd_")).count();
        let class_count = headers.iter().filter(|h| h.starts_with("prob_")).count();

        // Per-profile accumulation: marker rows, replicate columns, prob rows.
        let mut current: Option<(PredictionBundle, Vec<Vec<f64>>)> = None;
        let finish = |acc: Option<(PredictionBundle, Vec<Vec<f64>>)>,
                      predictions: &mut BTreeMap<String, PredictionBundle>|
         -> Result<()> {
            if let Some((mut bundle, mcd_cols)) = acc {
                let present = mcd_cols.iter().flatten().count();
                if present > 0 {
                    if present != mcd_runs * DEPTH_SLOTS {
                        return Err(TriageError::invariant(
                            &bundle.id,
                            "partially filled replicate matrix",
                        ));
                    }
                    // Stored column-per-replicate; transpose back to rows.
                    let rows: Vec<Vec<f64>> = (0..mcd_runs)
                        .map(|r| (0..DEPTH_SLOTS).map(|t| mcd_cols[t][r]).collect())
                        .collect();
                    bundle.mcd_depths = Some(rows);
                }
                if bundle.residuals.as_ref().map(|r| r.is_empty()).unwrap_or(false) {
                    bundle.residuals = None;
                }
                predictions.insert(bundle.id.clone(), bundle);
            }
            Ok(())
        };

        for entry in reader.records() {
            let record = entry.map_err(|e| TriageError::Parse {
                line: 0,
                message: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
            let field = |i: usize, name: &str| -> Result<&str> {
                record.get(i).ok_or_else(|| TriageError::Schema {
                    line,
                    field: name.to_string(),
                })
            };
            let id = field(0, "id")?.to_string();
            let t: usize = parse_cell(field(1, "horizon_index")?, line, "horizon_index")?;
            if current.as_ref().map(|(b, _)| b.id != id).unwrap_or(true) {
                finish(current.take(), &mut predictions)?;
                current = Some((
                    PredictionBundle {
                        id: id.clone(),
                        pred_depths: Vec::new(),
                        mcd_depths: None,
                        softmax: Vec::new(),
                        residuals: Some(Vec::new()),
                    },
                    vec![Vec::new(); DEPTH_SLOTS],
                ));
            }
            let (bundle, mcd_cols) = current.as_mut().expect("set above");
            if t != bundle.pred_depths.len() + 1 {
                return Err(TriageError::invariant(
                    &id,
                    format!("prediction rows out of order at horizon_index {t}"),
                ));
            }
            bundle
                .pred_depths
                .push(parse_cell(field(2, "pred_depth")?, line, "pred_depth")?);
            match parse_optional_cell(field(3, "residual")?, line, "residual")? {
                Some(v) => {
                    let res = bundle.residuals.as_mut().expect("initialized above");
                    if res.len() != t - 1 {
                        return Err(TriageError::invariant(&id, "partially filled residual column"));
                    }
                    res.push(v);
                }
                None => {
                    if bundle.residuals.as_ref().map(|r| !r.is_empty()).unwrap_or(false) {
                        return Err(TriageError::invariant(&id, "partially filled residual column"));
                    }
                }
            }
            for r in 0..mcd_runs {
                if let Some(v) = parse_optional_cell(field(4 + r, "mcd")?, line, "mcd")? {
                    mcd_cols[t - 1].push(v);
                }
            }
            let num_horizons = *horizon_counts
                .get(id.as_str())
                .ok_or_else(|| TriageError::invariant(&id, "prediction without sample"))?;
            if t <= num_horizons {
                let mut row = Vec::with_capacity(class_count);
                for k in 0..class_count {
                    row.push(parse_cell(
                        field(4 + mcd_runs + k, "prob")?,
                        line,
                        "prob",
                    )?);
                }
                bundle.softmax.push(row);
            }
        }
        finish(current.take(), &mut predictions)?;
    }

    assemble(samples, predictions)
}
