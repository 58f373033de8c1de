use proptest::prelude::*;
use sal_core::numerics::{multiply_count, reset_multiply_count};
use sal_core::{
    Activation, Layer, Matrix, Method, Network, NetworkConfig, Prng, SalLayer, UpdateOrder,
};

fn random(rows: usize, cols: usize, rng: &mut Prng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

fn labels(n: usize, classes: usize, rng: &mut Prng) -> Vec<usize> {
    (0..n)
        .map(|_| (rng.next_u64() % classes as u64) as usize)
        .collect()
}

fn sal_layers(net: &Network) -> Vec<&SalLayer> {
    net.layers().iter().map(|l| l.as_sal().unwrap()).collect()
}

fn single_output_layer(method: Method, d_in: usize, classes: usize, lr: f64) -> NetworkConfig {
    let mut cfg = NetworkConfig::shallow(method, d_in, 0, classes, 1);
    cfg.depth = 1;
    cfg.n_areas = vec![1];
    cfg.activations = vec![Activation::Linear];
    cfg.lr_net = lr;
    cfg.lr_sel = lr;
    cfg.local_weight = 0.0;
    cfg
}

#[test]
fn inactive_areas_and_frozen_matrices_never_change() {
    let mut cfg = NetworkConfig::deep(Method::Sal, 6, 8, 3, 4, 4);
    cfg.lr_net = 0.05;
    cfg.lr_sel = 0.05;
    let mut net = Network::build(cfg, 17).unwrap();
    let frozen: Vec<(Matrix, Matrix)> = sal_layers(&net)
        .iter()
        .map(|l| (l.w_fix().clone(), l.feedback().clone()))
        .collect();
    let mut rng = Prng::new(18);
    let mut skipped = 0;
    let mut changed = 0;
    for _ in 0..100 {
        let x = random(5, 6, &mut rng);
        let y = labels(5, 3, &mut rng);
        let caches = net.forward(&x).unwrap();
        let before = net.clone();
        net.train_step(&x, &y).unwrap();
        for (l, cache) in caches.iter().enumerate() {
            let routing = cache.routing.as_ref().unwrap();
            let (old, new) = (sal_layers(&before)[l], sal_layers(&net)[l]);
            for (k, rows) in routing.groups(old.n_areas()).iter().enumerate() {
                let same = old.area_weights()[k] == new.area_weights()[k]
                    && old.area_biases()[k] == new.area_biases()[k];
                if rows.is_empty() {
                    assert!(same, "layer {l} area {k} changed without samples");
                    skipped += 1;
                } else if !same {
                    changed += 1;
                }
            }
        }
    }
    for (layer, (w_fix, feedback)) in sal_layers(&net).iter().zip(&frozen) {
        assert_eq!(layer.w_fix(), w_fix);
        assert_eq!(layer.feedback(), feedback);
    }
    assert!(
        skipped > 0 && changed > 0,
        "skipped {skipped}, changed {changed}"
    );
}

#[test]
fn reverse_update_order_is_bit_identical() {
    let mut cfg = NetworkConfig::deep(Method::Sal, 6, 8, 3, 5, 3);
    cfg.lr_net = 0.02;
    cfg.lr_sel = 0.01;
    let mut fwd = Network::build(cfg, 4).unwrap();
    let mut rev = fwd.clone();
    let mut rng = Prng::new(5);
    for _ in 0..20 {
        let x = random(7, 6, &mut rng);
        let y = labels(7, 3, &mut rng);
        let a = fwd
            .train_step_ordered(&x, &y, UpdateOrder::Forward)
            .unwrap();
        let b = rev
            .train_step_ordered(&x, &y, UpdateOrder::Reverse)
            .unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(fwd, rev);
}

fn max_param_diff(a: &Network, b: &Network) -> f64 {
    let flat = |n: &Network| -> Vec<f64> {
        n.layers()
            .iter()
            .flat_map(|l| match l {
                Layer::Sal(s) => s
                    .area_weights()
                    .iter()
                    .flat_map(|w| w.data().to_vec())
                    .chain(s.area_biases().iter().flatten().copied())
                    .chain(s.w_selector().data().iter().copied())
                    .collect::<Vec<_>>(),
                Layer::Fc(f) => f.weights().data().iter().chain(f.bias()).copied().collect(),
                Layer::Moe(m) => m.gate().data().to_vec(),
            })
            .collect()
    };
    flat(a)
        .iter()
        .zip(flat(b))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sample_order_within_batch_does_not_matter(seed: u64, n in 2usize..10) {
        let mut cfg = NetworkConfig::shallow(Method::Sal, 5, 6, 3, 3);
        cfg.lr_net = 0.05;
        cfg.lr_sel = 0.05;
        let mut a = Network::build(cfg, seed).unwrap();
        let mut b = a.clone();
        let mut rng = Prng::new(seed ^ 1);
        let x = random(n, 5, &mut rng);
        let y = labels(n, 3, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        let xp = x.select_rows(&perm);
        let yp: Vec<usize> = perm.iter().map(|&i| y[i]).collect();
        let la = a.train_step(&x, &y).unwrap();
        let lb = b.train_step(&xp, &yp).unwrap();
        prop_assert!((la - lb).abs() <= 1e-12);
        prop_assert!(max_param_diff(&a, &b) <= 1e-12);
    }

    #[test]
    fn degenerate_sal_matches_bp(seed: u64, d_in in 1usize..16, classes in 2usize..10, n in 1usize..8) {
        let lr = 0.1;
        let mut sal = Network::build(single_output_layer(Method::Sal, d_in, classes, lr), seed).unwrap();
        let mut bp = Network::build(single_output_layer(Method::Bp, d_in, classes, lr), seed).unwrap();
        let mut rng = Prng::new(seed.wrapping_add(7));
        let x = random(n, d_in, &mut rng);
        let y = labels(n, classes, &mut rng);
        prop_assert!(sal.predict(&x).unwrap().max_abs_diff(&bp.predict(&x).unwrap()) <= 1e-10);
        sal.train_step(&x, &y).unwrap();
        bp.train_step(&x, &y).unwrap();
        let s = sal.layers()[0].as_sal().unwrap();
        let f = bp.layers()[0].as_fc().unwrap();
        prop_assert!(s.area_weights()[0].max_abs_diff(f.weights()) <= 1e-10);
        let bias_diff = s.area_biases()[0].iter().zip(f.bias()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(bias_diff <= 1e-10);
    }

    #[test]
    fn single_area_networks_forward_like_bp(seed: u64, depth in 1usize..6) {
        let mut sal_cfg = NetworkConfig::deep(Method::Sal, 7, 9, 4, depth, 1);
        sal_cfg.local_weight = 0.0;
        let bp_cfg = NetworkConfig::deep(Method::Bp, 7, 9, 4, depth, 1);
        let sal = Network::build(sal_cfg, seed).unwrap();
        let bp = Network::build(bp_cfg, seed).unwrap();
        let x = random(6, 7, &mut Prng::new(seed ^ 3));
        prop_assert!(sal.predict(&x).unwrap().max_abs_diff(&bp.predict(&x).unwrap()) <= 1e-10);
    }

    #[test]
    fn routing_picks_one_area_and_ignores_prototype_scale(seed: u64, factor in 1e-3f64..1e3) {
        let cfg = NetworkConfig::deep(Method::Sal, 6, 8, 3, 4, 5);
        let net = Network::build(cfg, seed).unwrap();
        let x = random(9, 6, &mut Prng::new(seed ^ 9));
        let caches = net.forward(&x).unwrap();
        for (layer, cache) in sal_layers(&net).iter().zip(&caches) {
            let r = cache.routing.as_ref().unwrap();
            prop_assert_eq!(r.selected.len(), 9);
            prop_assert!(r.selected.iter().all(|&k| k < layer.n_areas()));
            let groups = r.groups(layer.n_areas());
            prop_assert_eq!(groups.iter().map(Vec::len).sum::<usize>(), 9);
            let scaled = SalLayer::from_parts(
                layer.w_selector().clone(),
                layer.w_fix().scale(factor),
                layer.area_weights().to_vec(),
                layer.area_biases().to_vec(),
                layer.feedback().clone(),
                layer.activation(),
                layer.is_output_layer(),
            ).unwrap();
            prop_assert_eq!(&scaled.route(&cache.input).unwrap().selected, &r.selected);
        }
    }
}

#[test]
fn repeated_batch_loss_strictly_decreases() {
    let mut net = Network::build(single_output_layer(Method::Sal, 10, 4, 1e-2), 3).unwrap();
    let mut rng = Prng::new(4);
    let x = random(8, 10, &mut rng);
    let y = labels(8, 4, &mut rng);
    let losses: Vec<f64> = (0..50).map(|_| net.train_step(&x, &y).unwrap()).collect();
    for w in losses[5..].windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

#[test]
fn zeroed_residual_hidden_layers_are_identity() {
    let cfg = NetworkConfig::deep(Method::Sal, 5, 6, 3, 6, 3);
    let mut net = Network::build(cfg, 8).unwrap();
    for layer in &mut net.layers_mut()[1..5] {
        let Layer::Sal(l) = layer else { unreachable!() };
        let (w, b) = l.areas_mut();
        w.iter_mut().for_each(|m| *m = Matrix::zeros(6, 6));
        b.iter_mut().for_each(|v| v.fill(0.0));
    }
    let x = random(4, 5, &mut Prng::new(1));
    let caches = net.forward(&x).unwrap();
    for c in &caches[1..5] {
        assert_eq!(c.output, caches[0].output);
    }
    let direct = net.layers()[5].forward(&caches[0].output, false).unwrap();
    assert_eq!(caches[5].output, direct.output);
}

#[test]
fn forward_multiplies_match_fc_plus_routing_terms() {
    for (d_in, d_out, classes, n_areas, batch) in
        [(784, 256, 10, 16, 3), (5, 7, 3, 4, 11), (16, 16, 10, 1, 1)]
    {
        let sal = Network::build(
            NetworkConfig::shallow(Method::Sal, d_in, d_out, classes, n_areas),
            1,
        )
        .unwrap();
        let bp = Network::build(
            NetworkConfig::shallow(Method::Bp, d_in, d_out, classes, 1),
            1,
        )
        .unwrap();
        let x = random(batch, d_in, &mut Prng::new(2));
        for l in 0..2 {
            let input = if l == 0 {
                x.clone()
            } else {
                sal.forward(&x).unwrap()[0].output.clone()
            };
            let (li, lo) = sal.config().layer_dims(l);
            let n = sal.config().n_areas[l];

            reset_multiply_count();
            sal.layers()[l].forward(&input, false).unwrap();
            let sal_count = multiply_count();
            reset_multiply_count();
            bp.layers()[l].forward(&input, false).unwrap();
            let fc_count = multiply_count();

            let b = batch as u64;
            let (li, lo, c, n) = (li as u64, lo as u64, classes as u64, n as u64);
            assert_eq!(fc_count, b * li * lo);
            assert_eq!(sal_count, fc_count + b * (li * c + c * n));
        }
    }
}
