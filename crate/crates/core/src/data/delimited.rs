use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Result, SalError};
use crate::numerics::Matrix;

const CLASSES: usize = 10;

/// Text layouts of the small handwritten-digit datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelimitedFormat {
    /// 64 comma-separated 4-bit intensities followed by the label.
    Digits,
    /// 256 space-separated binary pixels followed by a 10-column one-hot label.
    Semeion,
    /// Label followed by 256 grayscale values in `[-1, 1]`. Accepts the plain
    /// `label v1 … v256` layout (labels 0–9) and the LIBSVM
    /// `label 1:v1 … 256:v256` layout (labels 1–10).
    Usps,
}

impl DelimitedFormat {
    pub fn feature_count(self) -> usize {
        match self {
            DelimitedFormat::Digits => 64,
            DelimitedFormat::Semeion | DelimitedFormat::Usps => 256,
        }
    }

    fn value_range(self) -> (f64, f64) {
        match self {
            DelimitedFormat::Digits => (0.0, 16.0),
            DelimitedFormat::Semeion => (0.0, 1.0),
            DelimitedFormat::Usps => (-1.0, 1.0),
        }
    }

    fn name(self) -> &'static str {
        match self {
            DelimitedFormat::Digits => "digits",
            DelimitedFormat::Semeion => "semeion",
            DelimitedFormat::Usps => "usps",
        }
    }
}

impl FromStr for DelimitedFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "digits" => Ok(DelimitedFormat::Digits),
            "semeion" => Ok(DelimitedFormat::Semeion),
            "usps" => Ok(DelimitedFormat::Usps),
            other => Err(format!("unknown delimited format `{other}`")),
        }
    }
}

fn parse_number(tok: &str) -> Option<f64> {
    tok.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_label(tok: &str) -> Option<usize> {
    let v = parse_number(tok)?;
    (v >= 0.0 && v.fract() == 0.0).then_some(v as usize)
}

/// Parses one non-empty line into `(features, label)`.
fn parse_line(format: DelimitedFormat, line: &str) -> Result<(Vec<f64>, usize), String> {
    let n = format.feature_count();
    match format {
        DelimitedFormat::Digits => {
            let toks: Vec<&str> = line.split(',').collect();
            if toks.len() != n + 1 {
                return Err(format!("expected {} fields, found {}", n + 1, toks.len()));
            }
            let features = toks[..n]
                .iter()
                .map(|t| parse_number(t).ok_or_else(|| format!("bad value `{}`", t.trim())))
                .collect::<Result<Vec<_>, _>>()?;
            let label = parse_label(toks[n]).ok_or_else(|| format!("bad label `{}`", toks[n]))?;
            Ok((features, label))
        }
        DelimitedFormat::Semeion => {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != n + CLASSES {
                return Err(format!(
                    "expected {} fields, found {}",
                    n + CLASSES,
                    toks.len()
                ));
            }
            let features = toks[..n]
                .iter()
                .map(|t| parse_number(t).ok_or_else(|| format!("bad value `{t}`")))
                .collect::<Result<Vec<_>, _>>()?;
            let onehot = toks[n..]
                .iter()
                .map(|t| parse_number(t).ok_or_else(|| format!("bad label value `{t}`")))
                .collect::<Result<Vec<_>, _>>()?;
            let hot: Vec<usize> = onehot
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, _)| i)
                .collect();
            match hot.as_slice() {
                [k] if onehot[*k] == 1.0 => Ok((features, *k)),
                _ => Err("label columns are not one-hot".into()),
            }
        }
        DelimitedFormat::Usps => {
            let toks: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .collect();
            let Some((head, rest)) = toks.split_first() else {
                return Err("empty line".into());
            };
            let raw = parse_label(head).ok_or_else(|| format!("bad label `{head}`"))?;
            if rest.iter().any(|t| t.contains(':')) {
                // LIBSVM sparse layout, 1-based indices and labels
                let mut features = vec![0.0; n];
                for t in rest {
                    let (i, v) = t.split_once(':').ok_or_else(|| format!("bad pair `{t}`"))?;
                    let i: usize = i.parse().map_err(|_| format!("bad index `{i}`"))?;
                    if i == 0 || i > n {
                        return Err(format!("feature index {i} outside 1..={n}"));
                    }
                    features[i - 1] = parse_number(v).ok_or_else(|| format!("bad value `{v}`"))?;
                }
                if raw == 0 || raw > CLASSES {
                    return Err(format!("LIBSVM label {raw} outside 1..={CLASSES}"));
                }
                Ok((features, raw - 1))
            } else {
                if rest.len() != n {
                    return Err(format!(
                        "expected {n} values after the label, found {}",
                        rest.len()
                    ));
                }
                let features = rest
                    .iter()
                    .map(|t| parse_number(t).ok_or_else(|| format!("bad value `{t}`")))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((features, raw))
            }
        }
    }
}

/// Loads one of the text-format digit datasets. Blank lines are skipped;
/// any malformed line is reported with its 1-based line number.
pub fn load_delimited(path: &Path, format: DelimitedFormat) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| SalError::io(path, e))?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (features, label) = parse_line(format, line).map_err(|message| SalError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        })?;
        if label >= CLASSES {
            return Err(SalError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("label {label} outside 0..{CLASSES}"),
            });
        }
        data.extend(features);
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(SalError::Format {
            path: path.to_path_buf(),
            message: "no samples".into(),
        });
    }
    let features = Matrix::new(labels.len(), format.feature_count(), data)?;
    Dataset::new(
        format.name(),
        features,
        labels,
        CLASSES,
        format.value_range(),
    )
}

/// Writes a dataset in the given layout; values are printed with shortest
/// round-trip precision so reloading reproduces them exactly. USPS is written
/// in the plain (non-LIBSVM) layout.
pub fn write_delimited(ds: &Dataset, path: &Path, format: DelimitedFormat) -> Result<()> {
    if ds.feature_count() != format.feature_count() || ds.class_count() > CLASSES {
        return Err(SalError::Data(format!(
            "{} features / {} classes do not fit the {} layout",
            ds.feature_count(),
            ds.class_count(),
            format.name()
        )));
    }
    let mut out = String::new();
    for (i, &label) in ds.labels().iter().enumerate() {
        let row = ds.features().row(i);
        let join = |sep: &str| {
            row.iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(sep)
        };
        match format {
            DelimitedFormat::Digits => {
                let _ = writeln!(out, "{},{label}", join(","));
            }
            DelimitedFormat::Semeion => {
                let onehot: Vec<&str> = (0..CLASSES)
                    .map(|k| if k == label { "1" } else { "0" })
                    .collect();
                let _ = writeln!(out, "{} {}", join(" "), onehot.join(" "));
            }
            DelimitedFormat::Usps => {
                let _ = writeln!(out, "{label} {}", join(" "));
            }
        }
    }
    fs::write(path, out).map_err(|e| SalError::io(path, e))
}
