mod common;

use common::{darcy_pairs, random, tiny_config, zero_named};
use ifno::autodiff::grad_check_many;
use ifno::losses::{loss_ifb, loss_joint, loss_vae, rel_l2, Batch};
use ifno::network::Network;
use ifno::normalize::Normalizer;
use ifno::params::Bound;
use ifno::training::Adam;
use ifno::vae::standard_normal;
use ifno::{Error, Tape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rel(pred: &Tensor<f64>, target: &Tensor<f64>) -> Result<f64, Error> {
    let tape = Tape::new();
    let r = rel_l2(&tape, tape.constant(pred.clone()), tape.constant(target.clone()))?;
    Ok(tape.item(r))
}

#[test]
fn rel_l2_examples() {
    let t = random(&[4, 4, 2, 1], 1);
    assert_eq!(rel(&t, &t).unwrap(), 0.0);
    assert_eq!(rel(&t.zeros_like(), &t).unwrap(), 1.0);
    assert!((rel(&t.scale(2.0), &t).unwrap() - 1.0).abs() < 1e-15);
    assert!(matches!(rel(&t, &t.zeros_like()), Err(Error::ZeroNormTarget)));
}

#[test]
fn rel_l2_is_a_per_sample_mean() {
    // Sample 0 is off by its own norm, sample 1 is exact.
    let t = Tensor::from_fn(&[2, 2, 2, 1], |i| (i[2] + 1) as f64);
    let mut p = t.clone();
    for i in 0..2 {
        for j in 0..2 {
            p.set(&[i, j, 0, 0], 0.0);
        }
    }
    assert!((rel(&p, &t).unwrap() - 0.5).abs() < 1e-15);
}

proptest! {
    #[test]
    fn scaled_target_error(alpha in -3.0f64..3.0, seed in 0u64..100) {
        let t = random(&[4, 4, 1, 2], seed);
        let got = rel(&t.scale(alpha), &t).unwrap();
        prop_assert!((got - (alpha - 1.0).abs()).abs() < 1e-12);
    }
}

struct Fixture {
    net: Network<f64>,
    batch: Batch<f64>,
    eps: Tensor<f64>,
}

fn fixture(seed: u64) -> Fixture {
    let data = darcy_pairs(8, 3, seed);
    let mut net = Network::<f64>::new(tiny_config(8), seed).unwrap();
    net.norm = Normalizer::fit(&data.f, &data.u);
    let batch = data.batch(&net, &[0, 1, 2]).unwrap();
    let eps = standard_normal(&mut ChaCha8Rng::seed_from_u64(seed), &[3, 3]);
    Fixture { net, batch, eps }
}

#[test]
fn zero_output_model_scores_four() {
    let data = darcy_pairs(8, 3, 2);
    let mut net = Network::<f64>::new(tiny_config(8), 2).unwrap();
    zero_named(&mut net.store, &["q.1.", "q_prime.1."]);
    let batch = data.batch(&net, &[0, 1, 2]).unwrap();
    let tape = Tape::new();
    let p = net.store.bind(&tape, |_| false);
    let (loss, terms) = loss_ifb(&tape, &net, &p, &batch).unwrap();
    assert_eq!(tape.item(loss), 4.0);
    assert_eq!((terms.fwd, terms.inv, terms.pq, terms.p2q), (1.0, 1.0, 1.0, 1.0));
}

#[test]
fn terms_add_up() {
    let fx = fixture(3);
    let beta = 0.3;
    let tape = Tape::new();
    let p = fx.net.store.bind(&tape, |_| false);
    let (_, ifb) = loss_ifb(&tape, &fx.net, &p, &fx.batch).unwrap();
    assert!((ifb.total - (ifb.fwd + ifb.inv + ifb.pq + ifb.p2q)).abs() < 1e-12);
    let (_, vae) = loss_vae(&tape, &fx.net, &p, &fx.batch, beta, &fx.eps).unwrap();
    assert!((vae.total - (beta * vae.kl + vae.rec)).abs() < 1e-12);
    let (_, joint) = loss_joint(&tape, &fx.net, &p, &fx.batch, beta, &fx.eps).unwrap();
    let expect = joint.fwd + joint.pq + joint.p2q + beta * joint.kl + joint.rec;
    assert!((joint.total - expect).abs() < 1e-12);
    assert_eq!((joint.fwd, joint.pq, joint.p2q), (ifb.fwd, ifb.pq, ifb.p2q));
    assert_eq!(joint.inv, 0.0);
}

#[test]
fn prior_posterior_leaves_only_reconstruction() {
    let mut fx = fixture(4);
    zero_named(&mut fx.net.store, &["enc.mu.", "enc.logvar."]);
    let tape = Tape::new();
    let p = fx.net.store.bind(&tape, |_| false);
    let (loss, terms) = loss_vae(&tape, &fx.net, &p, &fx.batch, 1.0, &fx.eps).unwrap();
    assert_eq!(terms.kl, 0.0);
    assert_eq!(tape.item(loss), terms.rec);
}

/// Some spectral weights carry gradients near 1e-8; a wide step keeps the
/// central difference clear of roundoff in the O(1) loss.
fn loss_gradcheck(which: usize) -> f64 {
    let fx = fixture(5);
    let inputs: Vec<Tensor<f64>> = fx.net.store.iter().map(|(_, _, v)| v.clone()).collect();
    grad_check_many(
        |tape, vars| {
            let p = Bound::from_vars(vars.to_vec());
            let (l, _) = match which {
                0 => loss_ifb(tape, &fx.net, &p, &fx.batch)?,
                1 => loss_vae(tape, &fx.net, &p, &fx.batch, 0.5, &fx.eps)?,
                _ => loss_joint(tape, &fx.net, &p, &fx.batch, 0.5, &fx.eps)?,
            };
            Ok(l)
        },
        &inputs,
        1e-3,
        Some(3),
    )
    .unwrap()
}

#[test]
fn loss_ifb_gradcheck() {
    let err = loss_gradcheck(0);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn loss_vae_gradcheck() {
    let err = loss_gradcheck(1);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn loss_joint_gradcheck() {
    let err = loss_gradcheck(2);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn vae_loss_falls_under_adam() {
    let mut fx = fixture(6);
    let mut adam = Adam::new(fx.net.store.len(), 1e-3, 0.0);
    let mut losses = Vec::new();
    for _ in 0..50 {
        let tape = Tape::new();
        let net = &fx.net;
        let p = net.store.bind(&tape, |id| net.is_vae(id));
        let (loss, terms) = loss_vae(&tape, net, &p, &fx.batch, 1e-3, &fx.eps).unwrap();
        losses.push(terms.total);
        let grads = tape.backward(loss).unwrap();
        let updates: Vec<_> = net.store.ids().filter(|&id| net.is_vae(id)).map(|id| (id, grads.wrt(&tape, p[id]))).collect();
        adam.step(&mut fx.net.store, &updates).unwrap();
    }
    assert!(losses[49] < 0.5 * losses[0], "{} -> {}", losses[0], losses[49]);
}
