use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Result, SalError};

const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationScheme {
    /// Per-feature `(x - mean) / std` with statistics from the fitting split.
    ZScore,
    /// Scale the raw pixel range to `[0, 1]`, then `(x - 0.5) / 0.5`.
    Affine05,
}

impl fmt::Display for NormalizationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormalizationScheme::ZScore => "zscore",
            NormalizationScheme::Affine05 => "affine05",
        })
    }
}

impl FromStr for NormalizationScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zscore" | "z-score" => Ok(NormalizationScheme::ZScore),
            "affine05" | "half" => Ok(NormalizationScheme::Affine05),
            other => Err(format!("unknown normalization `{other}`")),
        }
    }
}

/// Normalization already applied to a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalization {
    ZScore { mean: Vec<f64>, std: Vec<f64> },
    Affine05 { range: (f64, f64) },
}

/// A fitted normalization that can be applied to several splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    state: Normalization,
    features: usize,
}

impl Normalizer {
    /// Fits on `ds`, typically the training split.
    pub fn fit(ds: &Dataset, scheme: NormalizationScheme) -> Result<Self> {
        if ds.normalization().is_some() {
            return Err(SalError::Data(format!(
                "{} is already normalized",
                ds.name()
            )));
        }
        if ds.is_empty() {
            return Err(SalError::Data(format!(
                "cannot normalize empty {}",
                ds.name()
            )));
        }
        let state = match scheme {
            NormalizationScheme::Affine05 => Normalization::Affine05 {
                range: ds.value_range(),
            },
            NormalizationScheme::ZScore => {
                let x = ds.features();
                let n = x.rows() as f64;
                let mean: Vec<f64> = x.column_sums().iter().map(|s| s / n).collect();
                let mut var = vec![0.0; x.cols()];
                for r in 0..x.rows() {
                    for ((v, &xv), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                        *v += (xv - m) * (xv - m);
                    }
                }
                let first = x.row(0);
                let std = (0..x.cols())
                    .map(|c| {
                        let constant = (0..x.rows()).all(|r| x.get(r, c) == first[c]);
                        if constant {
                            0.0
                        } else {
                            (var[c] / n).sqrt()
                        }
                    })
                    .collect();
                Normalization::ZScore { mean, std }
            }
        };
        Ok(Self {
            state,
            features: ds.feature_count(),
        })
    }

    pub fn state(&self) -> &Normalization {
        &self.state
    }

    /// Applies the fitted transform. Normalizing twice is an error.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.normalization().is_some() {
            return Err(SalError::Data(format!(
                "{} is already normalized",
                ds.name()
            )));
        }
        if ds.feature_count() != self.features {
            return Err(SalError::Data(format!(
                "normalizer fitted on {} features applied to {}",
                self.features,
                ds.feature_count()
            )));
        }
        let mut x = ds.features().clone();
        let cols = x.cols();
        match &self.state {
            Normalization::Affine05 { range: (lo, hi) } => {
                let span = hi - lo;
                for v in x.data_mut() {
                    *v = ((*v - lo) / span - 0.5) / 0.5;
                }
            }
            Normalization::ZScore { mean, std } => {
                for row in x.data_mut().chunks_mut(cols.max(1)) {
                    for ((v, &m), &s) in row.iter_mut().zip(mean).zip(std) {
                        // constant columns are recorded with std 0 and map to exactly 0
                        *v = if s == 0.0 {
                            0.0
                        } else {
                            (*v - m) / s.max(STD_FLOOR)
                        };
                    }
                }
            }
        }
        if !x.is_finite() {
            return Err(SalError::NonFinite("normalize"));
        }
        Ok(ds.with_normalized(x, self.state.clone()))
    }
}

/// Fits on `ds` and applies to `ds`.
pub fn normalize(ds: &Dataset, scheme: NormalizationScheme) -> Result<Dataset> {
    Normalizer::fit(ds, scheme)?.apply(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Matrix, Prng};

    fn pixels() -> Dataset {
        let x = Matrix::from_rows(&[[0.0, 255.0, 127.5], [255.0, 0.0, 63.75]]).unwrap();
        Dataset::new("p", x, vec![0, 1], 2, (0.0, 255.0)).unwrap()
    }

    #[test]
    fn affine_endpoints() {
        let n = normalize(&pixels(), NormalizationScheme::Affine05).unwrap();
        assert_eq!(n.features().row(0), &[-1.0, 1.0, 0.0]);
        assert_eq!(n.features().get(1, 2), -0.5);
    }

    #[test]
    fn constant_feature_becomes_zero() {
        let x = Matrix::from_rows(&[[0.1, 1.0], [0.1, 2.0], [0.1, 4.0]]).unwrap();
        let ds = Dataset::new("c", x, vec![0, 0, 1], 2, (0.0, 16.0)).unwrap();
        let n = normalize(&ds, NormalizationScheme::ZScore).unwrap();
        for r in 0..3 {
            assert_eq!(n.features().get(r, 0), 0.0);
        }
    }

    #[test]
    fn zscore_training_means_vanish() {
        let mut rng = Prng::new(5);
        let x = Matrix::from_fn(200, 6, |_, c| {
            3.0 * c as f64 + (c + 1) as f64 * rng.normal()
        });
        let ds = Dataset::new("z", x, vec![0; 200], 1, (0.0, 1.0)).unwrap();
        let n = normalize(&ds, NormalizationScheme::ZScore).unwrap();
        for (c, s) in n.features().column_sums().iter().enumerate() {
            assert!((s / 200.0).abs() < 1e-6, "column {c} mean {s}");
        }
    }

    #[test]
    fn normalizing_twice_is_an_error() {
        let once = normalize(&pixels(), NormalizationScheme::Affine05).unwrap();
        assert!(normalize(&once, NormalizationScheme::Affine05).is_err());
        assert!(normalize(&once, NormalizationScheme::ZScore).is_err());
    }

    #[test]
    fn test_split_uses_training_statistics() {
        let train = Dataset::new(
            "t",
            Matrix::from_rows(&[[0.0], [2.0]]).unwrap(),
            vec![0, 1],
            2,
            (0.0, 2.0),
        )
        .unwrap();
        let test = Dataset::new(
            "t",
            Matrix::from_rows(&[[3.0]]).unwrap(),
            vec![0],
            2,
            (0.0, 2.0),
        )
        .unwrap();
        let norm = Normalizer::fit(&train, NormalizationScheme::ZScore).unwrap();
        assert_eq!(norm.apply(&test).unwrap().features().get(0, 0), 2.0);
    }
}
