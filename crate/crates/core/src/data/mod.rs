//! Local-file dataset ingestion, normalization, splitting and batching.
//!
//! Nothing here touches the network. [`DatasetKind::sources`] lists where
//! each supported file can be obtained.

mod batch;
mod delimited;
mod idx;
mod normalize;
mod sources;
mod split;

pub use batch::BatchIterator;
pub use delimited::{load_delimited, write_delimited, DelimitedFormat};
pub use idx::{load_idx, write_idx};
pub use normalize::{normalize, Normalization, NormalizationScheme, Normalizer};
pub use sources::{DatasetKind, SourceFile, SPLIT_SEED, SPLIT_TRAIN_FRACTION};
pub use split::{stratified_split, stratified_split_indices};

use crate::error::{Result, SalError};
use crate::numerics::Matrix;

/// Labeled samples with flattened features, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    features: Matrix,
    labels: Vec<usize>,
    class_count: usize,
    value_range: (f64, f64),
    normalization: Option<Normalization>,
}

impl Dataset {
    /// `value_range` is the nominal raw pixel range, e.g. `(0, 255)`.
    pub fn new(
        name: impl Into<String>,
        features: Matrix,
        labels: Vec<usize>,
        class_count: usize,
        value_range: (f64, f64),
    ) -> Result<Self> {
        let name = name.into();
        if features.rows() != labels.len() {
            return Err(SalError::Data(format!(
                "{name}: {} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(SalError::LabelOutOfRange {
                label: bad,
                classes: class_count,
            });
        }
        // also rejects NaN bounds
        if value_range.1.partial_cmp(&value_range.0) != Some(std::cmp::Ordering::Greater) {
            return Err(SalError::Data(format!(
                "{name}: empty value range {value_range:?}"
            )));
        }
        if !features.is_finite() {
            return Err(SalError::Data(format!("{name}: non-finite feature value")));
        }
        Ok(Self {
            name,
            features,
            labels,
            class_count,
            value_range,
            normalization: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.features.cols()
    }

    pub fn value_range(&self) -> (f64, f64) {
        self.value_range
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    /// Samples at `indices`, in that order, keeping normalization state.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            value_range: self.value_range,
            normalization: self.normalization.clone(),
        }
    }

    /// Concatenates two compatible datasets (e.g. canonical train and test files).
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.feature_count() != other.feature_count()
            || self.class_count != other.class_count
            || self.normalization != other.normalization
        {
            return Err(SalError::Data(format!(
                "cannot concatenate {} and {}: incompatible shapes or normalization",
                self.name, other.name
            )));
        }
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Dataset {
            name: self.name.clone(),
            features: Matrix::vstack(&[self.features.clone(), other.features.clone()])?,
            labels,
            class_count: self.class_count,
            value_range: self.value_range,
            normalization: self.normalization.clone(),
        })
    }

    /// Feature rows and labels for one mini-batch.
    pub fn batch(&self, indices: &[usize]) -> (Matrix, Vec<usize>) {
        (
            self.features.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub(crate) fn with_normalized(&self, features: Matrix, state: Normalization) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features,
            labels: self.labels.clone(),
            class_count: self.class_count,
            value_range: self.value_range,
            normalization: Some(state),
        }
    }

    pub(crate) fn with_class_count(mut self, class_count: usize) -> Result<Self> {
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= class_count) {
            return Err(SalError::LabelOutOfRange {
                label: bad,
                classes: class_count,
            });
        }
        self.class_count = class_count;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_label_count_mismatch() {
        assert!(Dataset::new("x", Matrix::zeros(3, 2), vec![0, 1], 2, (0.0, 1.0)).is_err());
    }

    #[test]
    fn rejects_out_of_range_labels() {
        assert!(matches!(
            Dataset::new("x", Matrix::zeros(2, 2), vec![0, 5], 3, (0.0, 1.0)),
            Err(SalError::LabelOutOfRange { label: 5, .. })
        ));
    }

    #[test]
    fn subset_and_batch_gather_rows() {
        let ds = Dataset::new(
            "x",
            Matrix::from_fn(4, 2, |r, c| (r * 2 + c) as f64),
            vec![0, 1, 0, 1],
            2,
            (0.0, 10.0),
        )
        .unwrap();
        let s = ds.subset(&[3, 0]);
        assert_eq!(s.labels(), &[1, 0]);
        assert_eq!(s.features().row(0), &[6.0, 7.0]);
        let (x, y) = ds.batch(&[1]);
        assert_eq!(x.data(), &[2.0, 3.0]);
        assert_eq!(y, vec![1]);
    }
}
