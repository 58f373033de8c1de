use super::{activate, InitStreams, LayerCache};
use crate::error::{Result, SalError};
use crate::numerics::{kaiming_init, Activation, Matrix};

/// Gradients of a dense layer for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct FcGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    /// `∂L/∂x`, handed to the layer below.
    pub input: Matrix,
}

/// `h = φ(x · W + b)`, trained by exact backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer {
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl FcLayer {
    pub fn init(
        d_in: usize,
        d_out: usize,
        activation: Activation,
        streams: &InitStreams,
        layer: usize,
    ) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(SalError::InvalidConfig(format!(
                "FC layer {layer} has a zero dimension: {d_in}x{d_out}"
            )));
        }
        Self::from_parts(
            kaiming_init(d_in, d_out, &mut streams.weights(layer, 0)),
            vec![0.0; d_out],
            activation,
        )
    }

    pub fn from_parts(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(SalError::dims(
                "FcLayer",
                format!("bias {} for {} outputs", bias.len(), weights.cols()),
            ));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn d_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weights.cols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn params_mut(&mut self) -> (&mut Matrix, &mut Vec<f64>) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn forward(&self, x: &Matrix, residual: bool) -> Result<LayerCache> {
        if residual && self.d_in() != self.d_out() {
            return Err(SalError::InvalidConfig(format!(
                "residual connection requires d_in == d_out, got {} and {}",
                self.d_in(),
                self.d_out()
            )));
        }
        let mut u = x.matmul(&self.weights)?;
        u.add_row_vector(&self.bias)?;
        let output = activate(self.activation, &u, x, residual)?;
        Ok(LayerCache {
            input: x.clone(),
            routing: None,
            preactivation: u,
            output,
            residual,
        })
    }

    /// Backpropagates `upstream = ∂L/∂h` through the layer.
    pub fn gradients(&self, cache: &LayerCache, upstream: &Matrix) -> Result<FcGrads> {
        if upstream.shape() != cache.output.shape() {
            return Err(SalError::dims(
                "FcLayer::gradients",
                format!(
                    "upstream {}x{} for output {}x{}",
                    upstream.rows(),
                    upstream.cols(),
                    cache.output.rows(),
                    cache.output.cols()
                ),
            ));
        }
        let delta = self
            .activation
            .derivative(&cache.preactivation)
            .hadamard(upstream)?;
        let mut input = delta.matmul_t(&self.weights)?;
        if cache.residual {
            input.axpy(1.0, upstream)?;
        }
        Ok(FcGrads {
            weights: cache.input.t_matmul(&delta)?,
            bias: delta.column_sums(),
            input,
        })
    }

    pub fn apply(&mut self, grads: &FcGrads, lr: f64) -> Result<()> {
        self.weights.axpy(-lr, &grads.weights)?;
        for (b, g) in self.bias.iter_mut().zip(&grads.bias) {
            *b -= lr * g;
        }
        Ok(())
    }

    /// SGD step; returns `∂L/∂x` computed with the pre-step weights.
    pub fn backward(&mut self, cache: &LayerCache, upstream: &Matrix, lr: f64) -> Result<Matrix> {
        let grads = self.gradients(cache, upstream)?;
        self.apply(&grads, lr)?;
        Ok(grads.input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{softmax_ce_grad, softmax_ce_loss, Prng};

    fn random(rows: usize, cols: usize, rng: &mut Prng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.normal())
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn zero_upstream_leaves_parameters_unchanged() {
        let streams = InitStreams::new(1, 2);
        let mut layer = FcLayer::init(4, 3, Activation::Relu, &streams, 0).unwrap();
        let before = layer.clone();
        let x = random(5, 4, &mut Prng::new(3));
        let cache = layer.forward(&x, false).unwrap();
        layer.backward(&cache, &Matrix::zeros(5, 3), 0.5).unwrap();
        assert_eq!(layer, before);
    }

    #[test]
    fn linear_weight_gradient_is_closed_form() {
        let streams = InitStreams::new(4, 5);
        let layer = FcLayer::init(4, 3, Activation::Linear, &streams, 0).unwrap();
        let mut rng = Prng::new(6);
        let x = random(5, 4, &mut rng);
        let g = random(5, 3, &mut rng);
        let cache = layer.forward(&x, false).unwrap();
        let grads = layer.gradients(&cache, &g).unwrap();
        assert_eq!(grads.weights, x.t_matmul(&g).unwrap());
    }

    #[test]
    fn two_layer_gradients_match_finite_differences() {
        let streams = InitStreams::new(7, 8);
        let l1 = FcLayer::init(4, 6, Activation::Tanh, &streams, 0).unwrap();
        let l2 = FcLayer::init(6, 3, Activation::Linear, &streams, 1).unwrap();
        let mut rng = Prng::new(9);
        let x = random(5, 4, &mut rng);
        let labels = [0, 1, 2, 1, 0];

        let loss = |a: &FcLayer, b: &FcLayer| {
            let h = a.forward(&x, false).unwrap().output;
            softmax_ce_loss(&b.forward(&h, false).unwrap().output, &labels).unwrap()
        };

        let c1 = l1.forward(&x, false).unwrap();
        let c2 = l2.forward(&c1.output, false).unwrap();
        let g2 = l2
            .gradients(&c2, &softmax_ce_grad(&c2.output, &labels).unwrap())
            .unwrap();
        let g1 = l1.gradients(&c1, &g2.input).unwrap();

        let h = 1e-5;
        for (r, c) in [(0, 0), (1, 3), (3, 5), (2, 2)] {
            let mut p = l1.clone();
            let w = p.params_mut().0;
            w.set(r, c, w.get(r, c) + h);
            let mut m = l1.clone();
            let w = m.params_mut().0;
            w.set(r, c, w.get(r, c) - h);
            let fd = (loss(&p, &l2) - loss(&m, &l2)) / (2.0 * h);
            assert!(rel(g1.weights.get(r, c), fd) < 1e-4);
        }
        for (r, c) in [(0, 0), (5, 2), (3, 1)] {
            let mut p = l2.clone();
            let w = p.params_mut().0;
            w.set(r, c, w.get(r, c) + h);
            let mut m = l2.clone();
            let w = m.params_mut().0;
            w.set(r, c, w.get(r, c) - h);
            let fd = (loss(&l1, &p) - loss(&l1, &m)) / (2.0 * h);
            assert!(rel(g2.weights.get(r, c), fd) < 1e-4);
        }
        for j in 0..6 {
            let mut p = l1.clone();
            p.params_mut().1[j] += h;
            let mut m = l1.clone();
            m.params_mut().1[j] -= h;
            let fd = (loss(&p, &l2) - loss(&m, &l2)) / (2.0 * h);
            assert!(rel(g1.bias[j], fd) < 1e-4);
        }
    }

    #[test]
    fn residual_passes_upstream_through() {
        let streams = InitStreams::new(1, 1);
        let mut layer = FcLayer::init(3, 3, Activation::Tanh, &streams, 0).unwrap();
        let (w, _) = layer.params_mut();
        *w = Matrix::zeros(3, 3);
        let x = random(2, 3, &mut Prng::new(2));
        let cache = layer.forward(&x, true).unwrap();
        assert_eq!(cache.output, x);
        let g = random(2, 3, &mut Prng::new(3));
        let grads = layer.gradients(&cache, &g).unwrap();
        assert_eq!(grads.input, g);
    }
}
