//! Row-wise softmax and the mean softmax cross-entropy used by every training
//! signal in the crate: the global output error, the per-layer local error and
//! the selector's auxiliary loss.

use super::Matrix;
use crate::error::{Result, SalError};

/// Softmax of each row, computed after subtracting the row maximum.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    let cols = out.cols();
    if cols == 0 {
        return out;
    }
    for row in out.data_mut().chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn check_labels(logits: &Matrix, labels: &[usize], op: &'static str) -> Result<()> {
    if labels.len() != logits.rows() {
        return Err(SalError::dims(
            op,
            format!("{} labels for {} rows", labels.len(), logits.rows()),
        ));
    }
    if logits.rows() == 0 {
        return Err(SalError::dims(op, "empty batch"));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(SalError::LabelOutOfRange {
            label,
            classes: logits.cols(),
        });
    }
    Ok(())
}

/// Mean over rows of `-log softmax(logits)[row, label]`.
pub fn softmax_ce_loss(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels, "softmax_ce_loss")?;
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let (arg, max) =
            row.iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |a, (i, v)| if v > a.1 { (i, v) } else { a },
                );
        // ln(1 + rest) keeps tiny losses of confident rows from rounding to 0
        let rest: f64 = row
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != arg)
            .map(|(_, v)| (v - max).exp())
            .sum();
        total += (max - row[label]) + rest.ln_1p();
    }
    Ok(total / labels.len() as f64)
}

/// Gradient of [`softmax_ce_loss`] with respect to the logits:
/// `(softmax(logits) - onehot(labels)) / batch`.
pub fn softmax_ce_grad(logits: &Matrix, labels: &[usize]) -> Result<Matrix> {
    check_labels(logits, labels, "softmax_ce_grad")?;
    let mut grad = softmax_rows(logits);
    let inv = 1.0 / labels.len() as f64;
    for (r, &label) in labels.iter().enumerate() {
        let row = grad.row_mut(r);
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    Ok(grad)
}
