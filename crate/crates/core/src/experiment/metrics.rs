use std::path::Path;

use crate::error::{Result, SalError};

/// One epoch of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub run_label: String,
    pub seed: u64,
    /// 1-based.
    pub epoch: usize,
    /// Sample-weighted mean of the pre-update batch losses over the epoch.
    pub train_loss: f64,
    pub val_loss: f64,
    /// Fraction in `[0, 1]`.
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single seed.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Summary { mean, std }
    }
}

/// Final-epoch statistics of one configuration across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub run_label: String,
    pub n_seeds: usize,
    pub val_accuracy: Summary,
    pub train_loss: Summary,
    pub val_loss: Summary,
}

/// Groups records by label, in order of first appearance, and summarizes
/// each seed's last epoch.
pub fn aggregate(records: &[MetricsRecord]) -> Vec<AggregateResult> {
    let mut labels: Vec<&str> = Vec::new();
    for r in records {
        if !labels.contains(&r.run_label.as_str()) {
            labels.push(&r.run_label);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let mut finals: Vec<&MetricsRecord> = Vec::new();
            for r in records.iter().filter(|r| r.run_label == label) {
                match finals.iter_mut().find(|f| f.seed == r.seed) {
                    Some(f) if r.epoch > f.epoch => *f = r,
                    Some(_) => {}
                    None => finals.push(r),
                }
            }
            let pick = |f: fn(&MetricsRecord) -> f64| {
                Summary::of(&finals.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            AggregateResult {
                run_label: label.to_string(),
                n_seeds: finals.len(),
                val_accuracy: pick(|r| r.val_accuracy),
                train_loss: pick(|r| r.train_loss),
                val_loss: pick(|r| r.val_loss),
            }
        })
        .collect()
}

const RECORD_HEADER: [&str; 6] = [
    "run_label",
    "seed",
    "epoch",
    "train_loss",
    "val_loss",
    "val_accuracy",
];
const AGGREGATE_HEADER: [&str; 5] = ["run_label", "metric", "mean", "std", "n_seeds"];

fn real(v: f64) -> String {
    format!("{v:.6}")
}

fn csv_err(path: &Path, e: csv::Error) -> SalError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SalError::io(path, io),
        other => SalError::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

/// Rows are written in the given order; reals carry 6 decimals.
pub fn write_records_csv(records: &[MetricsRecord], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(RECORD_HEADER)
        .map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record([
            r.run_label.clone(),
            r.seed.to_string(),
            r.epoch.to_string(),
            real(r.train_loss),
            real(r.val_loss),
            real(r.val_accuracy),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| SalError::io(path, e))
}

pub fn write_aggregates_csv(results: &[AggregateResult], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(AGGREGATE_HEADER)
        .map_err(|e| csv_err(path, e))?;
    for a in results {
        for (metric, s) in [
            ("val_accuracy", a.val_accuracy),
            ("train_loss", a.train_loss),
            ("val_loss", a.val_loss),
        ] {
            w.write_record([
                a.run_label.clone(),
                metric.to_string(),
                real(s.mean),
                real(s.std),
                a.n_seeds.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| SalError::io(path, e))
}

pub fn read_records_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(RECORD_HEADER) {
        return Err(SalError::Format {
            path: path.to_path_buf(),
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let parse_err = |field: &str| SalError::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: format!("bad {field}"),
        };
        let num = |idx: usize, field: &str| -> Result<f64> {
            row[idx].parse().map_err(|_| parse_err(field))
        };
        out.push(MetricsRecord {
            run_label: row[0].to_string(),
            seed: row[1].parse().map_err(|_| parse_err("seed"))?,
            epoch: row[2].parse().map_err(|_| parse_err("epoch"))?,
            train_loss: num(3, "train_loss")?,
            val_loss: num(4, "val_loss")?,
            val_accuracy: num(5, "val_accuracy")?,
        });
    }
    Ok(out)
}
