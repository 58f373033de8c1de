use super::{activate, group_by_area, AreaGrad, InitStreams, LayerCache, RoutingDecision};
use crate::error::{Result, SalError};
use crate::numerics::{kaiming_init, softmax_rows, Activation, Matrix};

/// Gradients of a top-1 mixture-of-experts layer for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MoeGrads {
    pub gate: Matrix,
    /// `None` for experts that received no samples.
    pub experts: Vec<Option<AreaGrad>>,
    pub input: Matrix,
}

/// Top-1 gated mixture of experts.
///
/// Gate logits `g = x · W_g`; each sample goes to `k = argmax g` and produces
/// `softmax(g)_k · φ(x · W⁽ᵏ⁾ + b⁽ᵏ⁾)`. Gradients flow through the selected
/// expert and through the selected gate probability.
#[derive(Debug, Clone, PartialEq)]
pub struct MoeLayer {
    gate: Matrix,
    expert_weights: Vec<Matrix>,
    expert_biases: Vec<Vec<f64>>,
    activation: Activation,
}

impl MoeLayer {
    pub fn init(
        d_in: usize,
        d_out: usize,
        n_experts: usize,
        activation: Activation,
        streams: &InitStreams,
        layer: usize,
    ) -> Result<Self> {
        if d_in == 0 || d_out == 0 || n_experts == 0 {
            return Err(SalError::InvalidConfig(format!(
                "MoE layer {layer} has a zero dimension: {d_in}x{d_out}, {n_experts} experts"
            )));
        }
        Self::from_parts(
            kaiming_init(d_in, n_experts, &mut streams.gate(layer)),
            (0..n_experts)
                .map(|k| kaiming_init(d_in, d_out, &mut streams.weights(layer, k)))
                .collect(),
            vec![vec![0.0; d_out]; n_experts],
            activation,
        )
    }

    pub fn from_parts(
        gate: Matrix,
        expert_weights: Vec<Matrix>,
        expert_biases: Vec<Vec<f64>>,
        activation: Activation,
    ) -> Result<Self> {
        let (d_in, n) = gate.shape();
        if n == 0 || expert_weights.len() != n || expert_biases.len() != n {
            return Err(SalError::dims(
                "MoeLayer",
                format!(
                    "{n} gate columns, {} experts, {} biases",
                    expert_weights.len(),
                    expert_biases.len()
                ),
            ));
        }
        let d_out = expert_weights[0].cols();
        for (w, b) in expert_weights.iter().zip(&expert_biases) {
            if w.shape() != (d_in, d_out) || b.len() != d_out {
                return Err(SalError::dims(
                    "MoeLayer",
                    format!("expert {}x{} with bias {}", w.rows(), w.cols(), b.len()),
                ));
            }
        }
        Ok(Self {
            gate,
            expert_weights,
            expert_biases,
            activation,
        })
    }

    pub fn d_in(&self) -> usize {
        self.gate.rows()
    }

    pub fn d_out(&self) -> usize {
        self.expert_weights[0].cols()
    }

    pub fn n_experts(&self) -> usize {
        self.expert_weights.len()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn gate(&self) -> &Matrix {
        &self.gate
    }

    pub fn expert_weights(&self) -> &[Matrix] {
        &self.expert_weights
    }

    pub fn expert_biases(&self) -> &[Vec<f64>] {
        &self.expert_biases
    }

    pub fn params_mut(&mut self) -> (&mut Matrix, &mut [Matrix], &mut [Vec<f64>]) {
        (
            &mut self.gate,
            &mut self.expert_weights,
            &mut self.expert_biases,
        )
    }

    pub fn forward(&self, x: &Matrix, residual: bool) -> Result<LayerCache> {
        self.forward_routed(x, residual, None)
    }

    /// Forward pass with an optional externally fixed expert assignment,
    /// used to hold routing constant during finite-difference checks.
    pub fn forward_routed(
        &self,
        x: &Matrix,
        residual: bool,
        fixed: Option<&[usize]>,
    ) -> Result<LayerCache> {
        if x.cols() != self.d_in() {
            return Err(SalError::dims(
                "MoeLayer::forward",
                format!(
                    "input has {} columns, layer expects {}",
                    x.cols(),
                    self.d_in()
                ),
            ));
        }
        if residual && self.d_in() != self.d_out() {
            return Err(SalError::InvalidConfig(format!(
                "residual connection requires d_in == d_out, got {} and {}",
                self.d_in(),
                self.d_out()
            )));
        }
        let logits = x.matmul(&self.gate)?;
        let probs = softmax_rows(&logits);
        let selected = match fixed {
            Some(sel) => {
                if sel.len() != x.rows() || sel.iter().any(|&k| k >= self.n_experts()) {
                    return Err(SalError::dims("MoeLayer::forward", "invalid fixed routing"));
                }
                sel.to_vec()
            }
            None => logits.argmax_rows(),
        };
        let mut u = Matrix::zeros(x.rows(), self.d_out());
        for (k, rows) in group_by_area(&selected, self.n_experts())
            .iter()
            .enumerate()
        {
            if rows.is_empty() {
                continue;
            }
            let mut uk = x.select_rows(rows).matmul(&self.expert_weights[k])?;
            uk.add_row_vector(&self.expert_biases[k])?;
            u.scatter_rows(rows, &uk)?;
        }
        let mut scaled = self.activation.apply(&u);
        for (i, &k) in selected.iter().enumerate() {
            let p = probs.get(i, k);
            scaled.row_mut(i).iter_mut().for_each(|v| *v *= p);
        }
        if residual {
            scaled.axpy(1.0, x)?;
        }
        Ok(LayerCache {
            input: x.clone(),
            routing: Some(RoutingDecision {
                features: logits,
                scores: probs,
                selected,
            }),
            preactivation: u,
            output: scaled,
            residual,
        })
    }

    pub fn gradients(&self, cache: &LayerCache, upstream: &Matrix) -> Result<MoeGrads> {
        if upstream.shape() != cache.output.shape() {
            return Err(SalError::dims(
                "MoeLayer::gradients",
                format!(
                    "upstream {}x{} for output {}x{}",
                    upstream.rows(),
                    upstream.cols(),
                    cache.output.rows(),
                    cache.output.cols()
                ),
            ));
        }
        let routing = cache
            .routing
            .as_ref()
            .ok_or_else(|| SalError::dims("MoeLayer::gradients", "cache has no routing"))?;
        let expert_out = activate(self.activation, &cache.preactivation, &cache.input, false)?;
        let deriv = self.activation.derivative(&cache.preactivation);
        let n = self.n_experts();

        let mut delta = Matrix::zeros(upstream.rows(), self.d_out());
        let mut d_logits = Matrix::zeros(upstream.rows(), n);
        for (i, &k) in routing.selected.iter().enumerate() {
            let p = routing.scores.get(i, k);
            let g = upstream.row(i);
            let s: f64 = g.iter().zip(expert_out.row(i)).map(|(a, b)| a * b).sum();
            for ((d, &gv), &dv) in delta.row_mut(i).iter_mut().zip(g).zip(deriv.row(i)) {
                *d = p * gv * dv;
            }
            let probs = routing.scores.row(i);
            for (j, dl) in d_logits.row_mut(i).iter_mut().enumerate() {
                let indicator = if j == k { 1.0 } else { 0.0 };
                *dl = s * p * (indicator - probs[j]);
            }
        }

        let mut input = d_logits.matmul_t(&self.gate)?;
        if cache.residual {
            input.axpy(1.0, upstream)?;
        }
        let mut experts = Vec::with_capacity(n);
        for (k, rows) in routing.groups(n).iter().enumerate() {
            if rows.is_empty() {
                experts.push(None);
                continue;
            }
            let d = delta.select_rows(rows);
            let back = d.matmul_t(&self.expert_weights[k])?;
            for (j, &i) in rows.iter().enumerate() {
                for (a, b) in input.row_mut(i).iter_mut().zip(back.row(j)) {
                    *a += b;
                }
            }
            experts.push(Some(AreaGrad {
                weights: cache.input.select_rows(rows).t_matmul(&d)?,
                bias: d.column_sums(),
            }));
        }
        Ok(MoeGrads {
            gate: cache.input.t_matmul(&d_logits)?,
            experts,
            input,
        })
    }

    pub fn apply(&mut self, grads: &MoeGrads, lr: f64) -> Result<()> {
        self.gate.axpy(-lr, &grads.gate)?;
        for (k, g) in grads.experts.iter().enumerate() {
            let Some(g) = g else { continue };
            self.expert_weights[k].axpy(-lr, &g.weights)?;
            for (b, d) in self.expert_biases[k].iter_mut().zip(&g.bias) {
                *b -= lr * d;
            }
        }
        Ok(())
    }

    pub fn backward(&mut self, cache: &LayerCache, upstream: &Matrix, lr: f64) -> Result<Matrix> {
        let grads = self.gradients(cache, upstream)?;
        self.apply(&grads, lr)?;
        Ok(grads.input)
    }
}
