use std::fmt;

use crate::error::Result;
use crate::layers::{InitStreams, MoeLayer, SalLayer, SalLayerShape};
use crate::network::{Layer, Method, Network, NetworkConfig};
use crate::numerics::{softmax_ce_grad, softmax_ce_loss, Activation, Matrix, Prng};

const STEP: f64 = 1e-5;
const FD_TOLERANCE: f64 = 1e-4;
const EQUIVALENCE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: &'static str,
    /// `max |analytic − reference| / max(|analytic|, |reference|)` over all
    /// checked entries; an absolute difference for the equivalence check.
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error.is_finite() && self.max_rel_error < self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checks: Vec<GradCheck>,
}

impl GradCheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(GradCheck::passed)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<4} {:<28} max_rel_error={:.3e} tolerance={:.0e}",
                if c.passed() { "PASS" } else { "FAIL" },
                c.name,
                c.max_rel_error,
                c.tolerance
            )?;
        }
        Ok(())
    }
}

fn rel_error(analytic: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(analytic.len(), reference.len());
    let scale = analytic
        .iter()
        .chain(reference)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    let diff = analytic
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (a, r)| m.max((a - r).abs()));
    diff / scale
}

/// Central differences of `loss` over `len` scalar parameters of a cloned
/// `base`, where `nudge(t, i, d)` adds `d` to parameter `i`.
fn central<T: Clone>(
    base: &T,
    len: usize,
    nudge: impl Fn(&mut T, usize, f64),
    loss: impl Fn(&T) -> f64,
) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let mut plus = base.clone();
            nudge(&mut plus, i, STEP);
            let mut minus = base.clone();
            nudge(&mut minus, i, -STEP);
            (loss(&plus) - loss(&minus)) / (2.0 * STEP)
        })
        .collect()
}

fn random(rows: usize, cols: usize, rng: &mut Prng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

fn labels(n: usize, classes: usize, rng: &mut Prng) -> Vec<usize> {
    (0..n)
        .map(|_| (rng.next_u64() % classes as u64) as usize)
        .collect()
}

fn check(name: &'static str, analytic: &[f64], reference: &[f64]) -> GradCheck {
    GradCheck {
        name,
        max_rel_error: rel_error(analytic, reference),
        tolerance: FD_TOLERANCE,
    }
}

fn softmax_check(rng: &mut Prng) -> Result<GradCheck> {
    let logits = random(3, 4, rng);
    let y = labels(3, 4, rng);
    let analytic = softmax_ce_grad(&logits, &y)?;
    let numeric = central(
        &logits,
        12,
        |m, i, d| m.data_mut()[i] += d,
        |m| softmax_ce_loss(m, &y).unwrap(),
    );
    Ok(check("softmax_ce_grad", analytic.data(), &numeric))
}

fn tanh_check(rng: &mut Prng) -> GradCheck {
    let u: Vec<f64> = (0..16).map(|_| 2.0 * rng.normal()).collect();
    let analytic: Vec<f64> = u
        .iter()
        .map(|&v| Activation::Tanh.derivative_scalar(v))
        .collect();
    let numeric: Vec<f64> = u
        .iter()
        .map(|&v| {
            (Activation::Tanh.apply_scalar(v + STEP) - Activation::Tanh.apply_scalar(v - STEP))
                / (2.0 * STEP)
        })
        .collect();
    check("tanh_derivative", &analytic, &numeric)
}

/// Exact backprop gradients of every dense layer against finite differences
/// of the network loss.
fn bp_network_check(
    name: &'static str,
    config: NetworkConfig,
    rng: &mut Prng,
) -> Result<GradCheck> {
    let net = Network::build(config, rng.next_u64())?;
    let x = random(6, net.config().input_dim, rng);
    let y = labels(6, net.config().output_dim, rng);
    let caches = net.forward(&x)?;
    let mut upstream = softmax_ce_grad(&caches.last().expect("depth >= 1").output, &y)?;
    let mut analytic_by_layer = vec![Vec::new(); net.layers().len()];
    for (l, layer) in net.layers().iter().enumerate().rev() {
        let fc = layer.as_fc().expect("BP network");
        let g = fc.gradients(&caches[l], &upstream)?;
        analytic_by_layer[l] = [g.weights.data(), &g.bias].concat();
        upstream = g.input;
    }
    let loss = |n: &Network| softmax_ce_loss(&n.predict(&x).unwrap(), &y).unwrap();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (l, a) in analytic_by_layer.into_iter().enumerate() {
        let n_w = net.layers()[l].as_fc().unwrap().weights().data().len();
        numeric.extend(central(
            &net,
            a.len(),
            |n, i, d| {
                let Layer::Fc(fc) = &mut n.layers_mut()[l] else {
                    unreachable!()
                };
                let (w, b) = fc.params_mut();
                if i < n_w {
                    w.data_mut()[i] += d;
                } else {
                    b[i - n_w] += d;
                }
            },
            loss,
        ));
        analytic.extend(a);
    }
    Ok(check(name, &analytic, &numeric))
}

fn sal_hidden_layer(rng: &mut Prng) -> Result<SalLayer> {
    SalLayer::init(
        SalLayerShape {
            d_in: 5,
            d_out: 6,
            classes: 3,
            n_areas: 3,
            activation: Activation::Tanh,
            is_output: false,
        },
        &InitStreams::new(rng.next_u64(), rng.next_u64()),
        0,
    )
}

fn selector_check(rng: &mut Prng) -> Result<GradCheck> {
    let layer = sal_hidden_layer(rng)?;
    let x = random(7, 5, rng);
    let y = labels(7, 3, rng);
    let cache = layer.forward(&x, false)?;
    let analytic = layer.selector_gradient(&cache, &y)?;
    let numeric = central(
        &layer,
        analytic.data().len(),
        |l, i, d| l.w_selector_mut().data_mut()[i] += d,
        |l| softmax_ce_loss(&x.matmul(l.w_selector()).unwrap(), &y).unwrap(),
    );
    Ok(check("selector", analytic.data(), &numeric))
}

/// Area gradients of `layer` (from `area_gradients` with the given output
/// error) against finite differences of `loss`; areas without samples must
/// have zero numeric gradient.
fn area_check(
    name: &'static str,
    layer: &SalLayer,
    x: &Matrix,
    y: &[usize],
    e_top: &Matrix,
    loss: impl Fn(&SalLayer) -> f64,
) -> Result<GradCheck> {
    let cache = layer.forward(x, false)?;
    let grads = layer.area_gradients(&cache, e_top, y, 1.0)?;
    let (d_in, d_out) = (layer.d_in(), layer.d_out());
    let per_area = (d_in + 1) * d_out;
    let mut analytic = Vec::new();
    for g in &grads {
        match g {
            Some(g) => analytic.extend(g.weights.data().iter().chain(&g.bias)),
            None => analytic.extend(std::iter::repeat_n(0.0, per_area)),
        }
    }
    let numeric = central(
        layer,
        per_area * layer.n_areas(),
        |l, i, d| {
            let (k, j) = (i / per_area, i % per_area);
            let (w, b) = l.areas_mut();
            if j < d_in * d_out {
                w[k].data_mut()[j] += d;
            } else {
                b[k][j - d_in * d_out] += d;
            }
        },
        loss,
    );
    Ok(check(name, &analytic, &numeric))
}

/// With no output error, a hidden layer's area step is the exact gradient of
/// its local loss on `H · B`.
fn local_error_check(rng: &mut Prng) -> Result<GradCheck> {
    let layer = sal_hidden_layer(rng)?;
    let x = random(8, 5, rng);
    let y = labels(8, 3, rng);
    let zero = Matrix::zeros(8, 3);
    area_check("local_error", &layer, &x, &y, &zero, |l| {
        let h = l.forward(&x, false).unwrap().output;
        softmax_ce_loss(&h.matmul(l.feedback()).unwrap(), &y).unwrap()
    })
}

/// A single output SAL layer receives the exact gradient of the global loss.
fn sal_single_layer_check(rng: &mut Prng) -> Result<GradCheck> {
    let layer = SalLayer::init(
        SalLayerShape {
            d_in: 5,
            d_out: 4,
            classes: 4,
            n_areas: 2,
            activation: Activation::Linear,
            is_output: true,
        },
        &InitStreams::new(rng.next_u64(), rng.next_u64()),
        0,
    )?;
    let x = random(8, 5, rng);
    let y = labels(8, 4, rng);
    let e_top = softmax_ce_grad(&layer.forward(&x, false)?.output, &y)?;
    area_check("sal_single_layer_exact", &layer, &x, &y, &e_top, |l| {
        softmax_ce_loss(&l.forward(&x, false).unwrap().output, &y).unwrap()
    })
}

fn moe_check(rng: &mut Prng) -> Result<GradCheck> {
    let layer = MoeLayer::init(
        5,
        3,
        3,
        Activation::Tanh,
        &InitStreams::new(rng.next_u64(), rng.next_u64()),
        0,
    )?;
    let x = random(8, 5, rng);
    let y = labels(8, 3, rng);
    let cache = layer.forward(&x, false)?;
    let selected = cache.routing.as_ref().expect("MoE routes").selected.clone();
    let upstream = softmax_ce_grad(&cache.output, &y)?;
    let grads = layer.gradients(&cache, &upstream)?;

    let (d_in, d_out, n) = (5, 3, 3);
    let gate_len = d_in * n;
    let per_expert = (d_in + 1) * d_out;
    let mut analytic = grads.gate.data().to_vec();
    for g in &grads.experts {
        match g {
            Some(g) => analytic.extend(g.weights.data().iter().chain(&g.bias)),
            None => analytic.extend(std::iter::repeat_n(0.0, per_expert)),
        }
    }
    analytic.extend(grads.input.data());

    let fixed = |l: &MoeLayer, x: &Matrix| {
        let out = l.forward_routed(x, false, Some(&selected)).unwrap().output;
        softmax_ce_loss(&out, &y).unwrap()
    };
    let mut numeric = central(
        &layer,
        gate_len + n * per_expert,
        |l, i, d| {
            let (gate, w, b) = l.params_mut();
            if i < gate_len {
                gate.data_mut()[i] += d;
            } else {
                let (k, j) = ((i - gate_len) / per_expert, (i - gate_len) % per_expert);
                if j < d_in * d_out {
                    w[k].data_mut()[j] += d;
                } else {
                    b[k][j - d_in * d_out] += d;
                }
            }
        },
        |l| fixed(l, &x),
    );
    numeric.extend(central(
        &x,
        x.data().len(),
        |m, i, d| m.data_mut()[i] += d,
        |m| fixed(&layer, m),
    ));
    Ok(check("moe_frozen_routing", &analytic, &numeric))
}

/// A one-area SAL output layer and a dense BP layer from the same seed agree
/// on outputs and on the first update.
fn output_equivalence_check(rng: &mut Prng) -> Result<GradCheck> {
    let seed = rng.next_u64();
    let config = |method| {
        let mut c = NetworkConfig::deep(method, 6, 1, 4, 1, 1);
        c.lr_net = 0.1;
        c.lr_sel = 0.1;
        c
    };
    let mut sal = Network::build(config(Method::Sal), seed)?;
    let mut bp = Network::build(config(Method::Bp), seed)?;
    let x = random(8, 6, rng);
    let y = labels(8, 4, rng);
    let mut diff = sal.predict(&x)?.max_abs_diff(&bp.predict(&x)?);
    sal.train_step(&x, &y)?;
    bp.train_step(&x, &y)?;
    let s = sal.layers()[0].as_sal().expect("SAL layer");
    let f = bp.layers()[0].as_fc().expect("dense layer");
    diff = diff.max(s.area_weights()[0].max_abs_diff(f.weights()));
    for (a, b) in s.area_biases()[0].iter().zip(f.bias()) {
        diff = diff.max((a - b).abs());
    }
    Ok(GradCheck {
        name: "sal_output_equals_bp",
        max_rel_error: diff,
        tolerance: EQUIVALENCE_TOLERANCE,
    })
}

/// Every analytic-gradient check on small random instances (at most 8
/// samples, widths at most 16). Failures are reported, not returned as errors.
pub fn grad_check_suite(seed: u64) -> Result<GradCheckReport> {
    let mut rng = Prng::new(seed);
    let mut two_layer = NetworkConfig::shallow(Method::Bp, 5, 7, 4, 1);
    two_layer.activations = vec![Activation::Tanh, Activation::Linear];
    let residual = NetworkConfig::deep(Method::Bp, 5, 6, 3, 4, 1);
    let checks = vec![
        softmax_check(&mut rng)?,
        tanh_check(&mut rng),
        bp_network_check("bp_two_layer", two_layer, &mut rng)?,
        bp_network_check("bp_residual_network", residual, &mut rng)?,
        selector_check(&mut rng)?,
        local_error_check(&mut rng)?,
        moe_check(&mut rng)?,
        sal_single_layer_check(&mut rng)?,
        output_equivalence_check(&mut rng)?,
    ];
    Ok(GradCheckReport { checks })
}
