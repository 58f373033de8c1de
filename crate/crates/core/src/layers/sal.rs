use super::{activate, InitStreams, LayerCache, RoutingDecision};
use crate::error::{Result, SalError};
use crate::numerics::{kaiming_init, softmax_ce_grad, Activation, Matrix};

/// Dimensions and flags for constructing a [`SalLayer`].
///
/// The routing feature width equals `classes`: the selector is trained with a
/// cross-entropy on its projection, and the local loss is a cross-entropy on
/// `H · B`, so both must be class-dimensional.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SalLayerShape {
    pub d_in: usize,
    pub d_out: usize,
    pub classes: usize,
    pub n_areas: usize,
    pub activation: Activation,
    pub is_output: bool,
}

/// Step sizes and local-loss weight for one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SalRates {
    pub lr_net: f64,
    pub lr_sel: f64,
    pub local_weight: f64,
}

/// Parameter step for one active area.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// A layer of `N` mutually exclusive parameter areas with learned-frozen
/// routing.
///
/// Routing: `z = x · W_s`, `p = z · W_fix`, `k = argmax p`. The selector
/// `W_s` is learnable, the prototypes `W_fix` are frozen. Each sample then
/// uses only area `k`: `u = x · W⁽ᵏ⁾ + b⁽ᵏ⁾`, `h = φ(u)`.
///
/// The frozen matrices have no mutable accessors.
#[derive(Debug, Clone, PartialEq)]
pub struct SalLayer {
    w_selector: Matrix,
    w_fix: Matrix,
    area_weights: Vec<Matrix>,
    area_biases: Vec<Vec<f64>>,
    feedback: Matrix,
    activation: Activation,
    is_output: bool,
}

impl SalLayer {
    /// Kaiming-initialized layer. Area biases start at zero; the output
    /// layer's feedback matrix is the identity.
    pub fn init(shape: SalLayerShape, streams: &InitStreams, layer: usize) -> Result<Self> {
        let SalLayerShape {
            d_in,
            d_out,
            classes,
            n_areas,
            activation,
            is_output,
        } = shape;
        if d_in == 0 || d_out == 0 || classes == 0 || n_areas == 0 {
            return Err(SalError::InvalidConfig(format!(
                "SAL layer {layer} has a zero dimension: {shape:?}"
            )));
        }
        let area_weights = (0..n_areas)
            .map(|k| kaiming_init(d_in, d_out, &mut streams.weights(layer, k)))
            .collect();
        let feedback = if is_output {
            Matrix::identity(d_out)
        } else {
            kaiming_init(d_out, classes, &mut streams.feedback(layer))
        };
        Self::from_parts(
            kaiming_init(d_in, classes, &mut streams.selector(layer)),
            kaiming_init(classes, n_areas, &mut streams.prototypes(layer)),
            area_weights,
            vec![vec![0.0; d_out]; n_areas],
            feedback,
            activation,
            is_output,
        )
    }

    /// Assembles a layer from explicit parameters, validating all shapes.
    pub fn from_parts(
        w_selector: Matrix,
        w_fix: Matrix,
        area_weights: Vec<Matrix>,
        area_biases: Vec<Vec<f64>>,
        feedback: Matrix,
        activation: Activation,
        is_output: bool,
    ) -> Result<Self> {
        let (d_in, d_f) = w_selector.shape();
        let n_areas = w_fix.cols();
        if n_areas == 0 || w_fix.rows() != d_f {
            return Err(SalError::dims(
                "SalLayer",
                format!(
                    "prototypes {}x{} for routing width {d_f}",
                    w_fix.rows(),
                    w_fix.cols()
                ),
            ));
        }
        if area_weights.len() != n_areas || area_biases.len() != n_areas {
            return Err(SalError::dims(
                "SalLayer",
                format!(
                    "{} area weights and {} biases for {n_areas} areas",
                    area_weights.len(),
                    area_biases.len()
                ),
            ));
        }
        let d_out = area_weights[0].cols();
        for (k, (w, b)) in area_weights.iter().zip(&area_biases).enumerate() {
            if w.shape() != (d_in, d_out) || b.len() != d_out {
                return Err(SalError::dims(
                    "SalLayer",
                    format!(
                        "area {k} has weights {}x{} and bias {}, expected {d_in}x{d_out}",
                        w.rows(),
                        w.cols(),
                        b.len()
                    ),
                ));
            }
        }
        if feedback.shape() != (d_out, d_f) {
            return Err(SalError::dims(
                "SalLayer",
                format!(
                    "feedback {}x{}, expected {d_out}x{d_f}",
                    feedback.rows(),
                    feedback.cols()
                ),
            ));
        }
        if is_output && (d_out != d_f || feedback != Matrix::identity(d_out)) {
            return Err(SalError::InvalidConfig(
                "an output SAL layer needs identity feedback and d_out == classes".into(),
            ));
        }
        Ok(Self {
            w_selector,
            w_fix,
            area_weights,
            area_biases,
            feedback,
            activation,
            is_output,
        })
    }

    pub fn d_in(&self) -> usize {
        self.w_selector.rows()
    }

    pub fn d_out(&self) -> usize {
        self.area_weights[0].cols()
    }

    /// Routing feature width, equal to the number of classes.
    pub fn routing_dim(&self) -> usize {
        self.w_selector.cols()
    }

    pub fn n_areas(&self) -> usize {
        self.area_weights.len()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn is_output_layer(&self) -> bool {
        self.is_output
    }

    pub fn w_selector(&self) -> &Matrix {
        &self.w_selector
    }

    pub fn w_fix(&self) -> &Matrix {
        &self.w_fix
    }

    pub fn feedback(&self) -> &Matrix {
        &self.feedback
    }

    pub fn area_weights(&self) -> &[Matrix] {
        &self.area_weights
    }

    pub fn area_biases(&self) -> &[Vec<f64>] {
        &self.area_biases
    }

    pub fn w_selector_mut(&mut self) -> &mut Matrix {
        &mut self.w_selector
    }

    /// Mutable area parameters. Shapes must be preserved.
    pub fn areas_mut(&mut self) -> (&mut [Matrix], &mut [Vec<f64>]) {
        (&mut self.area_weights, &mut self.area_biases)
    }

    fn check_input(&self, x: &Matrix, op: &'static str) -> Result<()> {
        if x.cols() != self.d_in() {
            return Err(SalError::dims(
                op,
                format!(
                    "input has {} columns, layer expects {}",
                    x.cols(),
                    self.d_in()
                ),
            ));
        }
        Ok(())
    }

    pub fn route(&self, x: &Matrix) -> Result<RoutingDecision> {
        self.check_input(x, "route")?;
        let features = x.matmul(&self.w_selector)?;
        let scores = features.matmul(&self.w_fix)?;
        let selected = scores.argmax_rows();
        Ok(RoutingDecision {
            features,
            scores,
            selected,
        })
    }

    /// Routes every sample, then evaluates each active area once on the
    /// samples assigned to it.
    pub fn forward(&self, x: &Matrix, residual: bool) -> Result<LayerCache> {
        if residual && self.d_in() != self.d_out() {
            return Err(SalError::InvalidConfig(format!(
                "residual connection requires d_in == d_out, got {} and {}",
                self.d_in(),
                self.d_out()
            )));
        }
        let routing = self.route(x)?;
        let mut u = Matrix::zeros(x.rows(), self.d_out());
        for (k, rows) in routing.groups(self.n_areas()).iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let mut uk = x.select_rows(rows).matmul(&self.area_weights[k])?;
            uk.add_row_vector(&self.area_biases[k])?;
            u.scatter_rows(rows, &uk)?;
        }
        let output = activate(self.activation, &u, x, residual)?;
        Ok(LayerCache {
            input: x.clone(),
            routing: Some(routing),
            preactivation: u,
            output,
            residual,
        })
    }

    fn routing<'a>(&self, cache: &'a LayerCache) -> Result<&'a RoutingDecision> {
        cache
            .routing
            .as_ref()
            .ok_or_else(|| SalError::dims("SalLayer", "cache carries no routing decision"))
    }

    /// Gradient of the local cross-entropy with respect to the projected
    /// logits `H · B` (batch × classes).
    pub fn local_error(&self, cache: &LayerCache, labels: &[usize]) -> Result<Matrix> {
        let projected = cache.output.matmul(&self.feedback)?;
        softmax_ce_grad(&projected, labels)
    }

    /// `∂/∂W_s` of the selector's auxiliary cross-entropy on `softmax(z)`.
    pub fn selector_gradient(&self, cache: &LayerCache, labels: &[usize]) -> Result<Matrix> {
        let grad_z = softmax_ce_grad(&self.routing(cache)?.features, labels)?;
        cache.input.t_matmul(&grad_z)
    }

    /// `δ = φ′(U) ⊙ ((E_top + w · E_local) · Bᵀ)`. The output layer ignores the
    /// local term.
    pub fn delta(
        &self,
        cache: &LayerCache,
        e_top: &Matrix,
        labels: &[usize],
        local_weight: f64,
    ) -> Result<Matrix> {
        if e_top.rows() != cache.batch_size() || e_top.cols() != self.routing_dim() {
            return Err(SalError::dims(
                "SalLayer::delta",
                format!(
                    "error {}x{} for batch {} and {} classes",
                    e_top.rows(),
                    e_top.cols(),
                    cache.batch_size(),
                    self.routing_dim()
                ),
            ));
        }
        let mut error = e_top.clone();
        if !self.is_output && local_weight != 0.0 {
            error.axpy(local_weight, &self.local_error(cache, labels)?)?;
        }
        let projected = error.matmul_t(&self.feedback)?;
        self.activation
            .derivative(&cache.preactivation)
            .hadamard(&projected)
    }

    /// Weight and bias steps for every area; `None` for areas with no samples.
    pub fn area_gradients(
        &self,
        cache: &LayerCache,
        e_top: &Matrix,
        labels: &[usize],
        local_weight: f64,
    ) -> Result<Vec<Option<AreaGrad>>> {
        let delta = self.delta(cache, e_top, labels, local_weight)?;
        self.routing(cache)?
            .groups(self.n_areas())
            .iter()
            .map(|rows| {
                if rows.is_empty() {
                    return Ok(None);
                }
                let d = delta.select_rows(rows);
                Ok(Some(AreaGrad {
                    weights: cache.input.select_rows(rows).t_matmul(&d)?,
                    bias: d.column_sums(),
                }))
            })
            .collect()
    }

    /// Applies one update from a cached forward pass and the broadcast output
    /// error: selector step on its auxiliary loss, then area steps for the
    /// areas that received samples. Prototypes and feedback are untouched.
    pub fn update(
        &mut self,
        cache: &LayerCache,
        e_top: &Matrix,
        labels: &[usize],
        rates: SalRates,
    ) -> Result<()> {
        if labels.len() != cache.batch_size() {
            return Err(SalError::dims(
                "SalLayer::update",
                format!("{} labels for batch {}", labels.len(), cache.batch_size()),
            ));
        }
        let selector_grad = self.selector_gradient(cache, labels)?;
        let area_grads = self.area_gradients(cache, e_top, labels, rates.local_weight)?;

        self.w_selector.axpy(-rates.lr_sel, &selector_grad)?;
        for (k, grad) in area_grads.into_iter().enumerate() {
            let Some(grad) = grad else { continue };
            self.area_weights[k].axpy(-rates.lr_net, &grad.weights)?;
            for (b, g) in self.area_biases[k].iter_mut().zip(&grad.bias) {
                *b -= rates.lr_net * g;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{multiply_count, reset_multiply_count, softmax_ce_loss, Prng};

    fn random(rows: usize, cols: usize, rng: &mut Prng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.normal())
    }

    fn hidden_layer(seed: u64, d_in: usize, d_out: usize, n: usize, act: Activation) -> SalLayer {
        SalLayer::init(
            SalLayerShape {
                d_in,
                d_out,
                classes: 3,
                n_areas: n,
                activation: act,
                is_output: false,
            },
            &InitStreams::new(seed, seed + 1),
            0,
        )
        .unwrap()
    }

    #[test]
    fn single_area_always_selected() {
        let layer = hidden_layer(1, 5, 4, 1, Activation::Relu);
        let x = random(10, 5, &mut Prng::new(2));
        assert_eq!(layer.route(&x).unwrap().selected, vec![0; 10]);
    }

    #[test]
    fn identity_routing_chain() {
        let layer = SalLayer::from_parts(
            Matrix::identity(2),
            Matrix::identity(2),
            vec![Matrix::identity(2), Matrix::identity(2)],
            vec![vec![0.0; 2]; 2],
            Matrix::identity(2),
            Activation::Linear,
            true,
        )
        .unwrap();
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.3, 0.3]]).unwrap();
        let r = layer.route(&x).unwrap();
        assert_eq!(r.scores.row(0), &[1.0, 0.0]);
        assert_eq!(r.selected, vec![0, 1, 0]);
    }

    #[test]
    fn single_area_linear_layer_is_plain_product() {
        let layer = hidden_layer(3, 4, 6, 1, Activation::Linear);
        let x = random(7, 4, &mut Prng::new(4));
        let cache = layer.forward(&x, false).unwrap();
        assert_eq!(cache.output, x.matmul(&layer.area_weights()[0]).unwrap());
    }

    #[test]
    fn residual_with_zero_area_is_identity() {
        let mut layer = hidden_layer(5, 4, 4, 3, Activation::Tanh);
        let (w, b) = layer.areas_mut();
        w.iter_mut().for_each(|m| *m = Matrix::zeros(4, 4));
        b.iter_mut().for_each(|v| v.fill(0.0));
        let x = random(6, 4, &mut Prng::new(6));
        assert_eq!(layer.forward(&x, true).unwrap().output, x);
    }

    #[test]
    fn residual_needs_square_layer() {
        let layer = hidden_layer(5, 4, 6, 2, Activation::Tanh);
        let x = random(2, 4, &mut Prng::new(6));
        assert!(matches!(
            layer.forward(&x, true),
            Err(SalError::InvalidConfig(_))
        ));
    }

    #[test]
    fn batched_forward_matches_per_sample_forward() {
        let layer = hidden_layer(8, 5, 4, 4, Activation::Relu);
        let x = random(8, 5, &mut Prng::new(9));
        let cache = layer.forward(&x, false).unwrap();
        let selected = &cache.routing.as_ref().unwrap().selected;
        assert!(
            selected.iter().any(|&k| k != selected[0]),
            "routing not mixed"
        );
        for (i, &k) in selected.iter().enumerate() {
            for j in 0..4 {
                let mut u = layer.area_biases()[k][j];
                for p in 0..5 {
                    u += x.get(i, p) * layer.area_weights()[k].get(p, j);
                }
                assert!((cache.output.get(i, j) - u.max(0.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn local_error_uniform_case() {
        let layer = SalLayer::from_parts(
            Matrix::zeros(2, 2),
            Matrix::identity(2),
            vec![Matrix::zeros(2, 3); 2],
            vec![vec![0.0; 3]; 2],
            Matrix::zeros(3, 2),
            Activation::Linear,
            false,
        )
        .unwrap();
        let cache = layer
            .forward(&Matrix::from_rows(&[[1.0, 2.0]]).unwrap(), false)
            .unwrap();
        assert_eq!(
            layer.local_error(&cache, &[0]).unwrap().data(),
            &[-0.5, 0.5]
        );
    }

    #[test]
    fn local_error_matches_finite_differences_of_projected_logits() {
        let layer = hidden_layer(12, 4, 5, 2, Activation::Tanh);
        let mut rng = Prng::new(13);
        let x = random(4, 4, &mut rng);
        let labels = [0, 2, 1, 2];
        let cache = layer.forward(&x, false).unwrap();
        let analytic = layer.local_error(&cache, &labels).unwrap();
        let logits = cache.output.matmul(layer.feedback()).unwrap();
        let h = 1e-5;
        for r in 0..4 {
            for c in 0..3 {
                let mut p = logits.clone();
                p.set(r, c, logits.get(r, c) + h);
                let mut m = logits.clone();
                m.set(r, c, logits.get(r, c) - h);
                let fd = (softmax_ce_loss(&p, &labels).unwrap()
                    - softmax_ce_loss(&m, &labels).unwrap())
                    / (2.0 * h);
                let a = analytic.get(r, c);
                assert!((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6) < 1e-4);
            }
        }
    }

    #[test]
    fn unselected_area_is_untouched() {
        let mut layer = hidden_layer(21, 3, 4, 6, Activation::Relu);
        let mut rng = Prng::new(22);
        let x = random(2, 3, &mut rng);
        let before = layer.clone();
        let cache = layer.forward(&x, false).unwrap();
        let e_top = random(2, 3, &mut rng);
        layer
            .update(
                &cache,
                &e_top,
                &[0, 1],
                SalRates {
                    lr_net: 0.1,
                    lr_sel: 0.1,
                    local_weight: 1.0,
                },
            )
            .unwrap();
        let used = &cache.routing.as_ref().unwrap().selected;
        for k in 0..6 {
            if !used.contains(&k) {
                assert_eq!(layer.area_weights()[k], before.area_weights()[k]);
                assert_eq!(layer.area_biases()[k], before.area_biases()[k]);
            } else {
                assert_ne!(layer.area_weights()[k], before.area_weights()[k]);
            }
        }
        assert_eq!(layer.w_fix(), before.w_fix());
        assert_eq!(layer.feedback(), before.feedback());
        assert_ne!(layer.w_selector(), before.w_selector());
    }

    #[test]
    fn mismatched_error_batch_is_rejected() {
        let mut layer = hidden_layer(1, 3, 4, 2, Activation::Relu);
        let x = random(3, 3, &mut Prng::new(2));
        let cache = layer.forward(&x, false).unwrap();
        let rates = SalRates {
            lr_net: 0.1,
            lr_sel: 0.1,
            local_weight: 1.0,
        };
        assert!(layer
            .update(&cache, &Matrix::zeros(2, 3), &[0, 1, 2], rates)
            .is_err());
        assert!(layer
            .update(&cache, &Matrix::zeros(3, 3), &[0, 1], rates)
            .is_err());
    }

    #[test]
    fn output_layer_requires_identity_feedback() {
        let err = SalLayer::from_parts(
            Matrix::zeros(2, 3),
            Matrix::zeros(3, 1),
            vec![Matrix::zeros(2, 3)],
            vec![vec![0.0; 3]],
            Matrix::zeros(3, 3),
            Activation::Linear,
            true,
        );
        assert!(err.is_err());
    }

    #[test]
    fn forward_multiplies_per_sample() {
        let layer = hidden_layer(4, 7, 5, 4, Activation::Relu);
        let x = random(1, 7, &mut Prng::new(5));
        reset_multiply_count();
        layer.forward(&x, false).unwrap();
        // selector 7x3, prototypes 3x4, one area 7x5
        assert_eq!(multiply_count(), 7 * 3 + 3 * 4 + 7 * 5);
    }
}
