//! Multi-layer networks built from one layer kind, trained either with the
//! SAL update phase (shared output error, per-layer local errors, selector
//! steps) or with end-to-end backpropagation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SalError};
use crate::layers::{
    FcLayer, InitStreams, LayerCache, MoeLayer, SalLayer, SalLayerShape, SalRates,
};
use crate::numerics::{softmax_ce_grad, softmax_ce_loss, Activation, Matrix};

/// Training method, which also fixes the layer kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Backpropagation through dense layers.
    Bp,
    /// Selective adaptive learning through routed area layers.
    Sal,
    /// Backpropagation through top-1 mixture-of-experts layers.
    Moe,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Bp => "bp",
            Method::Sal => "sal",
            Method::Moe => "moe",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bp" | "baseline" => Ok(Method::Bp),
            "sal" => Ok(Method::Sal),
            "moe" => Ok(Method::Moe),
            other => Err(format!(
                "unknown method `{other}` (expected bp, sal or moe)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub method: Method,
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Number of classes.
    pub output_dim: usize,
    pub depth: usize,
    /// Areas (SAL) or experts (MoE) per layer; ignored for BP.
    pub n_areas: Vec<usize>,
    pub activations: Vec<Activation>,
    /// Identity skips on hidden→hidden layers.
    pub residual: bool,
    pub lr_net: f64,
    pub lr_sel: f64,
    pub local_weight: f64,
    /// Seed for frozen prototypes and feedback; defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_seed: Option<u64>,
}

impl NetworkConfig {
    /// Two-layer network: `input → hidden (ReLU) → classes (linear)`, routing
    /// only in the first layer.
    pub fn shallow(
        method: Method,
        input_dim: usize,
        hidden_dim: usize,
        classes: usize,
        n_areas: usize,
    ) -> Self {
        Self {
            method,
            input_dim,
            hidden_dim,
            output_dim: classes,
            depth: 2,
            n_areas: vec![n_areas, 1],
            activations: vec![Activation::Relu, Activation::Linear],
            residual: false,
            lr_net: 1e-4,
            lr_sel: 1e-4,
            local_weight: 1.0,
            frozen_seed: None,
        }
    }

    /// Deep residual network: linear first and last layers, tanh hidden
    /// layers, `n_areas` in every layer but the output layer.
    pub fn deep(
        method: Method,
        input_dim: usize,
        hidden_dim: usize,
        classes: usize,
        depth: usize,
        n_areas: usize,
    ) -> Self {
        let depth = depth.max(1);
        let activations = (0..depth)
            .map(|l| {
                if l == 0 || l + 1 == depth {
                    Activation::Linear
                } else {
                    Activation::Tanh
                }
            })
            .collect();
        let mut areas = vec![n_areas; depth];
        areas[depth - 1] = 1;
        Self {
            method,
            input_dim,
            hidden_dim,
            output_dim: classes,
            depth,
            n_areas: areas,
            activations,
            residual: true,
            lr_net: 1e-4,
            lr_sel: 1e-4,
            local_weight: 1.0,
            frozen_seed: None,
        }
    }

    /// `(d_in, d_out)` of layer `l`.
    pub fn layer_dims(&self, l: usize) -> (usize, usize) {
        let d_in = if l == 0 {
            self.input_dim
        } else {
            self.hidden_dim
        };
        let d_out = if l + 1 == self.depth {
            self.output_dim
        } else {
            self.hidden_dim
        };
        (d_in, d_out)
    }

    /// Residual skips apply to hidden layers only, never the first or last.
    pub fn layer_residual(&self, l: usize) -> bool {
        let (d_in, d_out) = self.layer_dims(l);
        self.residual && l > 0 && l + 1 < self.depth && d_in == d_out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SalError::InvalidConfig(m));
        if self.depth == 0 {
            return bad("depth must be at least 1".into());
        }
        if self.input_dim == 0 || self.output_dim == 0 || (self.depth > 1 && self.hidden_dim == 0) {
            return bad("input, hidden and output widths must be positive".into());
        }
        if self.n_areas.len() != self.depth {
            return bad(format!(
                "{} n_areas entries for depth {}",
                self.n_areas.len(),
                self.depth
            ));
        }
        if self.activations.len() != self.depth {
            return bad(format!(
                "{} activations for depth {}",
                self.activations.len(),
                self.depth
            ));
        }
        if self.n_areas.contains(&0) {
            return bad("every n_areas entry must be at least 1".into());
        }
        for (name, v) in [
            ("lr_net", self.lr_net),
            ("lr_sel", self.lr_sel),
            ("local_weight", self.local_weight),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }

    fn rates(&self) -> SalRates {
        SalRates {
            lr_net: self.lr_net,
            lr_sel: self.lr_sel,
            local_weight: self.local_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Sal(SalLayer),
    Fc(FcLayer),
    Moe(MoeLayer),
}

impl Layer {
    pub fn forward(&self, x: &Matrix, residual: bool) -> Result<LayerCache> {
        match self {
            Layer::Sal(l) => l.forward(x, residual),
            Layer::Fc(l) => l.forward(x, residual),
            Layer::Moe(l) => l.forward(x, residual),
        }
    }

    pub fn as_sal(&self) -> Option<&SalLayer> {
        match self {
            Layer::Sal(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_fc(&self) -> Option<&FcLayer> {
        match self {
            Layer::Fc(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_moe(&self) -> Option<&MoeLayer> {
        match self {
            Layer::Moe(l) => Some(l),
            _ => None,
        }
    }
}

/// Order in which the SAL update phase visits layers. Updates read only the
/// caches and the shared output error, so the order does not change results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOrder {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    layers: Vec<Layer>,
}

const EVAL_CHUNK: usize = 1024;

impl Network {
    pub fn build(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let streams = InitStreams::new(seed, config.frozen_seed.unwrap_or(seed));
        let mut layers = Vec::with_capacity(config.depth);
        for l in 0..config.depth {
            let (d_in, d_out) = config.layer_dims(l);
            let activation = config.activations[l];
            let layer = match config.method {
                Method::Bp => Layer::Fc(FcLayer::init(d_in, d_out, activation, &streams, l)?),
                Method::Moe => Layer::Moe(MoeLayer::init(
                    d_in,
                    d_out,
                    config.n_areas[l],
                    activation,
                    &streams,
                    l,
                )?),
                Method::Sal => Layer::Sal(SalLayer::init(
                    SalLayerShape {
                        d_in,
                        d_out,
                        classes: config.output_dim,
                        n_areas: config.n_areas[l],
                        activation,
                        is_output: l + 1 == config.depth,
                    },
                    &streams,
                    l,
                )?),
            };
            layers.push(layer);
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Fc(f) => f.weights().data().len() + f.bias().len(),
                Layer::Sal(s) => {
                    s.n_areas() * (s.d_in() + 1) * s.d_out() + s.w_selector().data().len()
                }
                Layer::Moe(m) => m.n_experts() * (m.d_in() + 1) * m.d_out() + m.gate().data().len(),
            })
            .sum()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Vec<LayerCache>> {
        if x.cols() != self.config.input_dim {
            return Err(SalError::dims(
                "Network::forward",
                format!(
                    "input has {} columns, network expects {}",
                    x.cols(),
                    self.config.input_dim
                ),
            ));
        }
        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = caches.last().map_or(x, |c| &c.output);
            let cache = layer.forward(input, self.config.layer_residual(l))?;
            caches.push(cache);
        }
        Ok(caches)
    }

    /// Final-layer outputs (class logits).
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h, self.config.layer_residual(l))?.output;
        }
        Ok(h)
    }

    /// One mini-batch step. Returns the global loss before the update.
    pub fn train_step(&mut self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        self.train_step_ordered(x, labels, UpdateOrder::Forward)
    }

    pub fn train_step_ordered(
        &mut self,
        x: &Matrix,
        labels: &[usize],
        order: UpdateOrder,
    ) -> Result<f64> {
        if labels.len() != x.rows() {
            return Err(SalError::dims(
                "train_step",
                format!("{} labels for {} samples", labels.len(), x.rows()),
            ));
        }
        let caches = self.forward(x)?;
        let logits = &caches.last().expect("depth >= 1").output;
        let loss = softmax_ce_loss(logits, labels)?;
        if !loss.is_finite() {
            return Err(SalError::NonFinite("train_step"));
        }
        let e_top = softmax_ce_grad(logits, labels)?;
        match self.config.method {
            Method::Sal => self.sal_update_phase(&caches, &e_top, labels, order)?,
            Method::Bp | Method::Moe => self.backprop(&caches, e_top)?,
        }
        Ok(loss)
    }

    /// Applies every SAL layer's update from the cached forward pass and the
    /// output error computed once for the batch.
    pub fn sal_update_phase(
        &mut self,
        caches: &[LayerCache],
        e_top: &Matrix,
        labels: &[usize],
        order: UpdateOrder,
    ) -> Result<()> {
        if caches.len() != self.layers.len() {
            return Err(SalError::dims(
                "sal_update_phase",
                format!("{} caches for {} layers", caches.len(), self.layers.len()),
            ));
        }
        let rates = self.config.rates();
        let mut visit: Vec<usize> = (0..self.layers.len()).collect();
        if order == UpdateOrder::Reverse {
            visit.reverse();
        }
        for l in visit {
            let Layer::Sal(layer) = &mut self.layers[l] else {
                return Err(SalError::InvalidConfig(
                    "SAL update phase on a non-SAL layer".into(),
                ));
            };
            layer.update(&caches[l], e_top, labels, rates)?;
        }
        Ok(())
    }

    fn backprop(&mut self, caches: &[LayerCache], e_top: Matrix) -> Result<()> {
        let lr = self.config.lr_net;
        let mut grad = e_top;
        for (layer, cache) in self.layers.iter_mut().zip(caches).rev() {
            grad = match layer {
                Layer::Fc(l) => l.backward(cache, &grad, lr)?,
                Layer::Moe(l) => l.backward(cache, &grad, lr)?,
                Layer::Sal(_) => {
                    return Err(SalError::InvalidConfig(
                        "backpropagation through a SAL layer".into(),
                    ))
                }
            };
        }
        Ok(())
    }

    /// Mean cross-entropy and top-1 accuracy.
    pub fn evaluate(&self, x: &Matrix, labels: &[usize]) -> Result<Evaluation> {
        if labels.len() != x.rows() {
            return Err(SalError::dims(
                "evaluate",
                format!("{} labels for {} samples", labels.len(), x.rows()),
            ));
        }
        let n = labels.len();
        if n == 0 {
            return Err(SalError::dims("evaluate", "empty evaluation set"));
        }
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let all: Vec<usize> = (0..n).collect();
        for idx in all.chunks(EVAL_CHUNK) {
            let xb = x.select_rows(idx);
            let yb: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let logits = self.predict(&xb)?;
            loss_sum += softmax_ce_loss(&logits, &yb)? * idx.len() as f64;
            correct += logits
                .argmax_rows()
                .iter()
                .zip(&yb)
                .filter(|(p, y)| p == y)
                .count();
        }
        Ok(Evaluation {
            loss: loss_sum / n as f64,
            accuracy: correct as f64 / n as f64,
        })
    }
}
