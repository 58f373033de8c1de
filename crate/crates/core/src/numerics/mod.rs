//! Dense linear algebra, seeded randomness, activations and the softmax
//! cross-entropy primitives shared by all layer kinds.

mod activation;
mod loss;
mod matrix;
mod prng;

pub use activation::Activation;
pub use loss::{softmax_ce_grad, softmax_ce_loss, softmax_rows};
pub use matrix::{multiply_count, reset_multiply_count, Matrix};
pub use prng::Prng;

/// Kaiming (He) normal initialization with fan-in = `rows`.
///
/// Weights are used as `x · W`, so the row count is the input width.
pub fn kaiming_init(rows: usize, cols: usize, rng: &mut Prng) -> Matrix {
    let std = (2.0 / rows as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| std * rng.normal())
}
