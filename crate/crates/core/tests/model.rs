mod common;

use common::{max_abs_diff, random, rel_err};
use ifno::autodiff::grad_check_many;
use ifno::losses::rel_l2;
use ifno::model::{Operator, OperatorConfig};
use ifno::params::{Bound, ParamStore};
use ifno::{Tape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LN2: f64 = std::f64::consts::LN_2;

fn small(width: usize, modes: usize, blocks: usize) -> OperatorConfig {
    OperatorConfig {
        c_in: 1,
        c_out: 1,
        width,
        modes,
        blocks,
        tau: 1.0,
        hidden: 8,
    }
}

fn build(cfg: OperatorConfig, seed: u64) -> (Operator, ParamStore<f64>) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let op = Operator::new(&mut store, cfg, &mut rng).unwrap();
    (op, store)
}

fn zero_params(store: &mut ParamStore<f64>, prefix: &str) {
    let ids: Vec<_> = store.ids().filter(|&id| store.name(id).starts_with(prefix)).collect();
    for id in ids {
        let z = store.get(id).zeros_like();
        *store.get_mut(id) = z;
    }
}

fn values(tape: &Tape<f64>, vars: &[ifno::Var]) -> Vec<Tensor<f64>> {
    vars.iter().map(|&v| (*tape.value(v)).clone()).collect()
}

#[test]
fn zero_parameter_block_scales_by_ln2() {
    let (op, mut store) = build(small(3, 2, 1), 1);
    zero_params(&mut store, "block0");
    let tape = Tape::new();
    let p = store.bind(&tape, |_| false);
    let v1 = random(&[8, 8, 3], 2);
    let v2 = random(&[8, 8, 3], 3);
    let (a, b) = (tape.constant(v1.clone()), tape.constant(v2.clone()));
    let (y1, y2) = op.blocks[0].forward(&tape, &p, a, b).unwrap();
    let out = values(&tape, &[y1, y2]);
    assert!(max_abs_diff(&out[0], &v1.scale(LN2)) < 1e-14);
    assert!(max_abs_diff(&out[1], &v2.scale(LN2)) < 1e-14);

    let (x1, x2) = op.blocks[0].inverse(&tape, &p, a, b).unwrap();
    let back = values(&tape, &[x1, x2]);
    assert!(max_abs_diff(&back[0], &v1.scale(1.0 / LN2)) < 1e-14);
    assert!(max_abs_diff(&back[1], &v2.scale(1.0 / LN2)) < 1e-14);
}

#[test]
fn zero_state_stays_zero() {
    let (op, store) = build(small(4, 2, 2), 4);
    let tape = Tape::new();
    let p = store.bind(&tape, |_| false);
    let z = tape.constant(Tensor::zeros(&[8, 8, 4]));
    let (y1, y2) = op.chain_forward(&tape, &p, z, z).unwrap();
    for t in values(&tape, &[y1, y2]) {
        assert!(t.data().iter().all(|&x| x == 0.0));
    }
}

fn roundtrip_errors(cfg: OperatorConfig, grid: usize, seed: u64) -> (f64, f64) {
    let width = cfg.width;
    let (op, store) = build(cfg, seed);
    let tape = Tape::new();
    let p = store.bind(&tape, |_| false);
    let v1 = random(&[grid, grid, 2, width], seed + 1);
    let v2 = random(&[grid, grid, 2, width], seed + 2);
    let (a, b) = (tape.constant(v1.clone()), tape.constant(v2.clone()));

    let (y1, y2) = op.chain_forward(&tape, &p, a, b).unwrap();
    let (x1, x2) = op.chain_inverse(&tape, &p, y1, y2).unwrap();
    let fi = values(&tape, &[x1, x2]);
    let fwd_inv = rel_err(&fi[0], &v1).max(rel_err(&fi[1], &v2));

    let (x1, x2) = op.chain_inverse(&tape, &p, a, b).unwrap();
    let (y1, y2) = op.chain_forward(&tape, &p, x1, x2).unwrap();
    let iff = values(&tape, &[y1, y2]);
    let inv_fwd = rel_err(&iff[0], &v1).max(rel_err(&iff[1], &v2));
    (fwd_inv, inv_fwd)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn block_chain_is_a_bijection(
        blocks in prop::sample::select(vec![1usize, 2, 4]),
        width in prop::sample::select(vec![2usize, 8]),
        grid in prop::sample::select(vec![8usize, 16]),
        seed in 0u64..10_000,
    ) {
        let (a, b) = roundtrip_errors(small(width, 2, blocks), grid, seed);
        prop_assert!(a < 1e-10, "forward then inverse: {a}");
        prop_assert!(b < 1e-10, "inverse then forward: {b}");
    }
}

#[test]
fn lift_splits_a_constant_bias() {
    let (op, mut store) = build(small(3, 2, 1), 5);
    zero_params(&mut store, "p.");
    let (_, last_b) = *op.p_lift.layers.last().unwrap();
    let bias = Tensor::new(vec![6], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    *store.get_mut(last_b) = bias;
    let tape = Tape::new();
    let p = store.bind(&tape, |_| false);
    let f = tape.constant(random(&[8, 8, 1], 6));
    let (v1, v2) = op.lift(&tape, &p, f).unwrap();
    let out = values(&tape, &[v1, v2]);
    for (t, base) in out.iter().zip([1.0, 4.0]) {
        assert_eq!(t.shape(), &[8, 8, 3]);
        for (i, &x) in t.data().iter().enumerate() {
            assert_eq!(x, base + (i % 3) as f64);
        }
    }
}

#[test]
fn lift_rejects_wrong_channel_count() {
    let (op, store) = build(small(3, 2, 1), 7);
    let tape = Tape::new();
    let p = store.bind(&tape, |_| false);
    let f = tape.constant(random(&[8, 8, 2], 8));
    assert!(op.lift(&tape, &p, f).is_err());
}

#[test]
fn zero_projections_give_zero() {
    let (op, mut store) = build(small(4, 2, 2), 9);
    for mlp in [&op.q_proj, &op.q_prime] {
        let (w, b) = *mlp.layers.last().unwrap();
        for id in [w, b] {
            let z = store.get(id).zeros_like();
            *store.get_mut(id) = z;
        }
    }
    let tape = Tape::new();
    let p = store.bind(&tape, |_| false);
    let x = tape.constant(random(&[8, 8, 1], 10));
    let u = op.forward_predict(&tape, &p, x).unwrap();
    let f = op.inverse_latent(&tape, &p, x).unwrap();
    for t in values(&tape, &[u, f]) {
        assert_eq!(t.shape(), &[8, 8, 1]);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn predictions_are_repeatable() {
    let (op, store) = build(small(4, 2, 2), 11);
    let x = random(&[8, 8, 1], 12);
    let run = || {
        let tape = Tape::new();
        let p = store.bind(&tape, |_| false);
        let xv = tape.constant(x.clone());
        let u = op.forward_predict(&tape, &p, xv).unwrap();
        let f = op.inverse_latent(&tape, &p, xv).unwrap();
        values(&tape, &[u, f])
    };
    let (a, b) = (run(), run());
    assert_eq!(a[0].data(), b[0].data());
    assert_eq!(a[1].data(), b[1].data());
}

#[test]
fn inverse_chain_recovers_the_lifted_input() {
    let (op, store) = build(small(4, 2, 3), 13);
    let tape = Tape::new();
    let p = store.bind(&tape, |_| false);
    let f = tape.constant(random(&[16, 16, 1], 14));
    let (l1, l2) = op.lift(&tape, &p, f).unwrap();
    let (y1, y2) = op.chain_forward(&tape, &p, l1, l2).unwrap();
    let (r1, r2) = op.chain_inverse(&tape, &p, y1, y2).unwrap();
    let got = values(&tape, &[r1, r2, l1, l2]);
    assert!(rel_err(&got[0], &got[2]) < 1e-8);
    assert!(rel_err(&got[1], &got[3]) < 1e-8);
}

#[test]
fn parameter_count_matches_closed_form() {
    for cfg in [small(4, 2, 2), small(8, 3, 1), OperatorConfig::default()] {
        let (_, store) = build(cfg.clone(), 15);
        let d = cfg.width;
        let (m, h, k) = (cfg.modes, cfg.hidden, cfg.blocks);
        let mlp = |a: usize, b: usize, c: usize| a * b + b + b * c + c;
        let expect = mlp(3, h, 2 * d) * 2 + mlp(2 * d, h, 1) * 2 + k * 2 * (4 * m * m * d * d + d * d + d);
        assert_eq!(store.num_scalars(), expect);
        assert_eq!(Operator::expected_scalars(&cfg), expect);
    }
}

#[test]
fn forward_prediction_gradcheck() {
    // Spectral weights deep in the chain have gradients near 1e-8, so a larger
    // step keeps the central difference above roundoff.
    let (op, store) = build(small(4, 2, 2), 16);
    let f = random(&[8, 8, 1], 17);
    let u = random(&[8, 8, 1], 18);
    let inputs: Vec<Tensor<f64>> = store.iter().map(|(_, _, v)| v.clone()).collect();
    let err = grad_check_many(
        |tape, vars| {
            let p = Bound::from_vars(vars.to_vec());
            let pred = op.forward_predict(tape, &p, tape.constant(f.clone()))?;
            rel_l2(tape, pred, tape.constant(u.clone()))
        },
        &inputs,
        1e-4,
        Some(6),
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn same_weights_run_on_any_grid() {
    let (op, store) = build(small(4, 3, 2), 19);
    for grid in [16, 32] {
        let tape = Tape::new();
        let p = store.bind(&tape, |_| false);
        let f = tape.constant(random(&[grid, grid, 3, 1], 20));
        let u = op.forward_predict(&tape, &p, f).unwrap();
        let back = op.inverse_latent(&tape, &p, u).unwrap();
        assert_eq!(tape.shape(u), vec![grid, grid, 3, 1]);
        assert_eq!(tape.shape(back), vec![grid, grid, 3, 1]);
        assert!(tape.value(u).all_finite());
    }
}
