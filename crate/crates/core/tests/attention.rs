use lsa_core::attention::{sa_parameter_count, SelfAttention};
use lsa_core::init::Builder;
use lsa_core::modulation::{modulation_parameter_count, reweight, BetaModulator, GammaModulator};
use lsa_core::plan::{GammaSquash, ModulationKind};
use lsa_tensor::{Graph, ParamStore, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn at(t: &Tensor, i: usize, j: usize) -> f64 {
    t.data()[i * t.shape()[1] + j]
}

fn layer(store: &mut ParamStore, c: usize, c_bar: usize, seed: u64) -> SelfAttention {
    SelfAttention::new(&mut Builder::new(store, seed).scope("sa"), c, c_bar, true).unwrap()
}

#[test]
fn zero_query_projection_averages_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let sa = layer(&mut store, 4, 2, 3);
    *store.get_mut(sa.w_f) = Tensor::zeros(&[4, 2]);
    let x = random(&mut rng, 4, 5);
    let wk = store.get(sa.w_k).clone();
    let mut g = Graph::new(&store, false, false);
    let xv = g.constant(x.clone());
    let maps = sa.maps(&mut g, xv).unwrap();
    assert!(g.value(maps.scores).data().iter().all(|&s| s == 0.0));
    assert!(g.value(maps.weights).data().iter().all(|&w| (w - 0.2).abs() < 1e-15));
    let o = sa.output(&mut g, xv, maps.weights).unwrap();
    let o = g.value(o);
    for c in 0..4 {
        let mean: f64 = (0..5).map(|i| (0..4).map(|k| at(&wk, c, k) * at(&x, k, i)).sum::<f64>()).sum::<f64>() / 5.0;
        for j in 0..5 {
            assert!((at(o, c, j) - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn injected_identity_weights_return_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::new();
    let sa = layer(&mut store, 3, 1, 0);
    let x = random(&mut rng, 3, 4);
    let mut g = Graph::new(&store, false, false);
    let xv = g.constant(x);
    let mut eye = Tensor::zeros(&[4, 4]);
    for i in 0..4 {
        eye.set(&[i, i], 1.0);
    }
    let eye = g.constant(eye);
    let o = sa.output(&mut g, xv, eye).unwrap();
    let wk = g.param(sa.w_k);
    let k = g.matmul(wk, xv).unwrap();
    assert_eq!(g.value(o), g.value(k));
}

#[test]
fn maps_and_output_match_double_loops() {
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, c_bar) = (4, 2);
        let n = rng.gen_range(1..=16);
        let mut store = ParamStore::new();
        let sa = layer(&mut store, c, c_bar, seed);
        let x = random(&mut rng, c, n);
        let (wf, wg, wk) = (store.get(sa.w_f).clone(), store.get(sa.w_g).clone(), store.get(sa.w_k).clone());
        let mut g = Graph::new(&store, false, false);
        let xv = g.constant(x.clone());
        let maps = sa.maps(&mut g, xv).unwrap();
        let o = sa.output(&mut g, xv, maps.weights).unwrap();
        let (weights, o) = (g.value(maps.weights), g.value(o));

        let proj = |w: &Tensor, i: usize, k: usize| (0..c).map(|ch| at(w, ch, k) * at(&x, ch, i)).sum::<f64>();
        let score = |i: usize, j: usize| (0..c_bar).map(|k| proj(&wf, i, k) * proj(&wg, j, k)).sum::<f64>();
        for j in 0..n {
            let top = (0..n).map(|i| score(i, j)).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..n).map(|i| (score(i, j) - top).exp()).sum();
            for i in 0..n {
                let beta = (score(i, j) - top).exp() / z;
                assert!((at(weights, i, j) - beta).abs() < 1e-12);
            }
            for ch in 0..c {
                let mut acc = 0.0;
                for i in 0..n {
                    let value: f64 = (0..c).map(|k| at(&wk, ch, k) * at(&x, k, i)).sum();
                    acc += at(weights, i, j) * value;
                }
                assert!((at(o, ch, j) - acc).abs() < 1e-12, "seed {seed}");
            }
        }
    }
}

#[test]
fn fresh_layer_is_exact_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::new();
    let sa = layer(&mut store, 8, 1, 9);
    let x = random(&mut rng, 8, 16);
    let mut g = Graph::new(&store, false, false);
    let xv = g.constant(x.clone());
    let y = sa.forward(&mut g, xv).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn open_gate_with_zero_values_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let sa = layer(&mut store, 4, 2, 1);
    *store.get_mut(sa.gamma.unwrap()) = Tensor::vector(vec![1.0]);
    *store.get_mut(sa.w_k) = Tensor::zeros(&[4, 4]);
    let x = random(&mut rng, 4, 6);
    let mut g = Graph::new(&store, false, false);
    let xv = g.constant(x.clone());
    let y = sa.forward(&mut g, xv).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn parameter_counts() {
    assert_eq!(sa_parameter_count(256, 32), 81_920);
    assert_eq!(sa_parameter_count(64, 8), 5_120);
    assert_eq!(modulation_parameter_count(ModulationKind::Gamma, 64, 1, 1).unwrap(), 1);
    assert!(modulation_parameter_count(ModulationKind::Beta, 64, 32, 0).is_err());
    // Three modulators of the large configuration plus the attention they modulate.
    let beta = modulation_parameter_count(ModulationKind::Beta, 1024, 2816, 1024).unwrap();
    assert_eq!(3 * beta, 11_796_480);
    assert_eq!(3 * beta + 3 * sa_parameter_count(1024, 128), 15_728_640);
}

#[test]
fn gamma_modulator_at_zero_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut store = ParamStore::new();
    let sa = SelfAttention::new(&mut Builder::new(&mut store, 0).scope("sa"), 4, 2, false).unwrap();
    let plain = GammaModulator::new(&mut Builder::new(&mut store, 0).scope("plain"), 3, GammaSquash::None).unwrap();
    let squashed = GammaModulator::new(&mut Builder::new(&mut store, 0).scope("sig"), 3, GammaSquash::Sigmoid).unwrap();
    let x = random(&mut rng, 4, 5);
    let h = random(&mut rng, 1, 3);
    let mut g = Graph::new(&store, false, false);
    let (xv, hv) = (g.constant(x.clone()), g.constant(h));
    let maps = sa.maps(&mut g, xv).unwrap();
    let o = sa.output(&mut g, xv, maps.weights).unwrap();

    let gates = plain.gates(&mut g, hv).unwrap();
    let gate = g.select(gates, 0).unwrap();
    let y = sa.mix(&mut g, xv, o, Some(gate)).unwrap();
    assert_eq!(g.value(y), &x);

    let gates = squashed.gates(&mut g, hv).unwrap();
    assert_eq!(g.value(gates).data(), &[0.5]);
    let gate = g.select(gates, 0).unwrap();
    let y = sa.mix(&mut g, xv, o, Some(gate)).unwrap();
    let ov = g.value(o).clone();
    for ((yy, oo), xx) in g.value(y).data().iter().zip(ov.data()).zip(x.data()) {
        assert_eq!(*yy, 0.5 * oo + xx);
    }
    assert!(sa.mix(&mut g, xv, o, None).is_err(), "no shared gate to fall back on");
}

fn beta(store: &mut ParamStore, h: usize, c: usize, d: usize) -> BetaModulator {
    BetaModulator::new(&mut Builder::new(store, 2).scope("mod"), h, c, d).unwrap()
}

#[test]
fn beta_weights_worked_example() {
    let mut store = ParamStore::new();
    let m = beta(&mut store, 1, 1, 1);
    *store.get_mut(m.w_q) = Tensor::matrix(&[&[1.0]]);
    *store.get_mut(m.w_p) = Tensor::matrix(&[&[1.0]]);
    let mut g = Graph::new(&store, false, false);
    let h = g.constant(Tensor::matrix(&[&[1.0]]));
    let x = g.constant(Tensor::matrix(&[&[0.0, 3f64.ln()]]));
    let p = m.project(&mut g, h).unwrap();
    let p = g.select(p, 0).unwrap();
    let w = m.weights(&mut g, x, p).unwrap();
    let w = g.value(w).data();
    assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
}

#[test]
fn beta_weights_uniform_without_query() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::new();
    let m = beta(&mut store, 3, 4, 2);
    *store.get_mut(m.w_q) = Tensor::zeros(&[4, 2]);
    let mut g = Graph::new(&store, false, false);
    let h = g.constant(random(&mut rng, 1, 3));
    let x = g.constant(random(&mut rng, 4, 7));
    let p = m.project(&mut g, h).unwrap();
    let p = g.select(p, 0).unwrap();
    let w = m.weights(&mut g, x, p).unwrap();
    assert!(g.value(w).data().iter().all(|&b| (b - 1.0 / 7.0).abs() < 1e-15));
}

#[test]
fn reweighting_matches_loop() {
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (c, n) = (rng.gen_range(1..6), rng.gen_range(1..=16));
        let o = random(&mut rng, c, n);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let store = ParamStore::new();
        let mut g = Graph::new(&store, false, false);
        let (ov, bv) = (g.constant(o.clone()), g.constant(Tensor::vector(b.clone())));
        let r = reweight(&mut g, ov, bv).unwrap();
        let r = g.value(r);
        for ch in 0..c {
            for j in 0..n {
                assert!((at(r, ch, j) - b[j] * at(&o, ch, j)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn neutral_reweighting_keeps_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let o = random(&mut rng, 3, 8);
    let store = ParamStore::new();
    let mut g = Graph::new(&store, false, false);
    let ov = g.constant(o.clone());
    let uniform = g.constant(Tensor::vector(vec![1.0 / 8.0; 8]));
    let scaled = g.scale(uniform, 8.0);
    let r = reweight(&mut g, ov, scaled).unwrap();
    assert_eq!(g.value(r), &o);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_columns_are_distributions(seed in 0u64..10_000, n in 1usize..=16, c in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let sa = layer(&mut store, c, 1, seed);
        let x = random(&mut rng, c, n);
        let mut g = Graph::new(&store, false, false);
        let xv = g.constant(x.map(|v| 3.0 * v));
        let maps = sa.maps(&mut g, xv).unwrap();
        let w = g.value(maps.weights);
        for j in 0..n {
            let s: f64 = (0..n).map(|i| at(w, i, j)).sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!((0..n).all(|i| at(w, i, j) >= 0.0));
        }
    }

    #[test]
    fn beta_weights_are_distributions(seed in 0u64..10_000, n in 1usize..=16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let m = beta(&mut store, 5, 4, 3);
        let mut g = Graph::new(&store, false, false);
        let h = g.constant(random(&mut rng, 2, 5));
        let x = g.constant(random(&mut rng, 4, n));
        let p = m.project(&mut g, h).unwrap();
        let p = g.select(p, 1).unwrap();
        let w = m.weights(&mut g, x, p).unwrap();
        let w = g.value(w).data();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(w.iter().all(|&b| b >= 0.0));
    }
}
