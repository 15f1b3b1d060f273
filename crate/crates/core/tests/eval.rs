mod common;

use common::{darcy_pairs, max_abs_diff, random, tiny_config, zero_named};
use ifno::eval::{
    decode, decode_draws, eval_forward, eval_inverse, evaluate_with, mean_baseline, mean_std, pointwise_error,
    posterior, posterior_uncertainty, predict_forward, predict_inverse, sample_decodings, Metrics, MetricsReport,
};
use ifno::network::Network;
use ifno::normalize::Normalizer;
use ifno::training::PairSet;
use ifno::Tensor;

fn trained_shape_net(seed: u64) -> (Network<f64>, PairSet<f64>) {
    let data = darcy_pairs(8, 5, seed);
    let mut net = Network::<f64>::new(tiny_config(8), seed).unwrap();
    net.norm = Normalizer::fit(&data.f, &data.u);
    (net, data)
}

#[test]
fn oracle_predictions_score_zero() {
    let (_, data) = trained_shape_net(1);
    let m = evaluate_with(&data.u, &data.u, |x| Ok(x.clone())).unwrap();
    assert_eq!(m.per_sample.len(), 5);
    assert_eq!(m.mean(), 0.0);
    assert_eq!(m.std(), 0.0);
}

#[test]
fn zero_outputs_score_one() {
    let (mut net, data) = trained_shape_net(2);
    net.norm = Normalizer::identity(1, 1);
    zero_named(&mut net.store, &["q.1.", "dec.out."]);
    let fwd = eval_forward(&net, &data.f, &data.u).unwrap();
    let inv = eval_inverse(&net, &data.f, &data.u).unwrap();
    assert!(fwd.per_sample.iter().all(|&e| e == 1.0));
    assert!(inv.per_sample.iter().all(|&e| e == 1.0));
}

#[test]
fn mean_is_the_average_of_per_sample_errors() {
    let target: Vec<Tensor<f64>> = (1..=3).map(|k| Tensor::full(&[2, 2, 1], k as f64)).collect();
    // Errors 0.5, 0.25, 0 by construction.
    let preds: Vec<Tensor<f64>> = [0.5, 1.5, 3.0].iter().map(|&v| Tensor::full(&[2, 2, 1], v)).collect();
    let m = evaluate_with(&preds, &target, |x| Ok(x.clone())).unwrap();
    assert_eq!(m.per_sample, vec![0.5, 0.25, 0.0]);
    assert!((m.mean() - 0.25).abs() < 1e-15);
    let std = ((0.0625 + 0.0 + 0.0625) / 3.0f64).sqrt();
    assert!((m.std() - std).abs() < 1e-15);
    assert_eq!(mean_std(&[2.0, 4.0]), (3.0, 1.0));
    let s = Metrics { per_sample: vec![0.036, 0.036] }.summary();
    assert_eq!(s, "3.60e-2 ± 0.0e0");
}

#[test]
fn evaluation_is_repeatable_and_order_free() {
    let (net, data) = trained_shape_net(3);
    let a = MetricsReport::evaluate(&net, (0..5).collect(), &data.f, &data.u, 0, 7).unwrap();
    let b = MetricsReport::evaluate(&net, (0..5).collect(), &data.f, &data.u, 0, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.to_csv().starts_with("sample,rel_l2_fwd,rel_l2_inv\n"));
    assert!(a.summary().contains("fingerprint=0000000000000007"));

    let order = [3, 0, 4, 1, 2];
    let f: Vec<_> = order.iter().map(|&i| data.f[i].clone()).collect();
    let u: Vec<_> = order.iter().map(|&i| data.u[i].clone()).collect();
    let c = eval_forward(&net, &f, &u).unwrap();
    for (k, &i) in order.iter().enumerate() {
        assert!((c.per_sample[k] - a.forward.per_sample[i]).abs() < 1e-14);
    }
    assert!((c.mean() - a.forward.mean()).abs() < 1e-14);
}

#[test]
fn batched_and_single_predictions_agree() {
    let (net, data) = trained_shape_net(4);
    let single = predict_forward(&net, &data.f[2]).unwrap();
    assert_eq!(single.shape(), &[8, 8, 1]);
    let stacked = ifno::losses::stack(&data.f.iter().collect::<Vec<_>>()).unwrap();
    let batched = predict_forward(&net, &stacked).unwrap();
    assert!(max_abs_diff(&ifno::losses::unstack(&batched, 2), &single) < 1e-13);
    assert_eq!(predict_inverse(&net, &data.u[0]).unwrap().shape(), &[8, 8, 1]);
}

#[test]
fn pointwise_error_examples() {
    let t = random(&[4, 4], 5);
    assert!(pointwise_error(&t, &t).unwrap().data().iter().all(|&x| x == 0.0));
    let shifted = t.map(|x| x - 0.25);
    assert!(pointwise_error(&shifted, &t).unwrap().data().iter().all(|&x| (x - 0.25).abs() < 1e-15));
    let a = Tensor::new(vec![2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
    let b = Tensor::new(vec![2, 2], vec![0.0, 1.0, 0.5, -1.0]).unwrap();
    assert_eq!(pointwise_error(&a, &b).unwrap().data(), &[1.0, 3.0, 0.0, 4.0]);
}

#[test]
fn collapsed_posterior_has_no_spread() {
    let (net, _) = trained_shape_net(6);
    let mu = random(&[1, 3], 7);
    let logvar = Tensor::full(&[1, 3], -40.0);
    let map = sample_decodings(&mu, &logvar, 20, 8, |z| decode(&net, z)).unwrap();
    assert!(map.std.max_abs() < 1e-6);
    let at_mu = decode(&net, &mu).unwrap();
    assert!(max_abs_diff(&map.mean, &ifno::losses::unstack(&at_mu, 0)) < 1e-6);
}

#[test]
fn identical_draws_have_zero_std() {
    let (net, _) = trained_shape_net(9);
    let mu = random(&[1, 3], 10);
    let logvar = random(&[1, 3], 11);
    let row = random(&[1, 3], 12);
    let eps = Tensor::from_fn(&[2, 3], |i| row.data()[i[1]]);
    let map = decode_draws(&mu, &logvar, &eps, |z| decode(&net, z)).unwrap();
    assert!(map.std.data().iter().all(|&s| s == 0.0));
    assert!(sample_decodings(&mu, &logvar, 1, 0, |z| decode(&net, z)).is_err());
}

#[test]
fn linear_decoder_std_tracks_posterior_scale() {
    let (h, w, z_dim) = (3, 2, 4);
    let a = random(&[h * w, z_dim], 13);
    let linear = |z: &Tensor<f64>| -> ifno::Result<Tensor<f64>> {
        let b = z.shape()[0];
        Ok(Tensor::from_fn(&[h, w, b, 1], |i| {
            let row = i[0] * w + i[1];
            (0..z_dim).map(|k| a.get(&[row, k]) * z.get(&[i[2], k])).sum()
        }))
    };
    let mu = random(&[1, z_dim], 14);
    let sigma = 0.3f64;
    let lv = Tensor::full(&[1, z_dim], (sigma * sigma).ln());
    let lv2 = Tensor::full(&[1, z_dim], (4.0 * sigma * sigma).ln());
    let s = 10_000;
    let m1 = sample_decodings(&mu, &lv, s, 15, linear).unwrap();
    let m2 = sample_decodings(&mu, &lv2, s, 16, linear).unwrap();
    for row in 0..h * w {
        let exact = sigma * (0..z_dim).map(|k| a.get(&[row, k]).powi(2)).sum::<f64>().sqrt();
        let (s1, s2) = (m1.std.data()[row], m2.std.data()[row]);
        // Relative standard error of a sample std is about 1/sqrt(2S) = 0.7%.
        assert!((s1 / exact - 1.0).abs() < 0.04, "{s1} vs {exact}");
        assert!((s2 / s1 - 2.0).abs() < 0.08, "{s2} vs 2 * {s1}");
    }
}

#[test]
fn posterior_sampling_is_seeded() {
    let (net, data) = trained_shape_net(17);
    let a = posterior_uncertainty(&net, &data.u[0], 5, 3).unwrap();
    let b = posterior_uncertainty(&net, &data.u[0], 5, 3).unwrap();
    let c = posterior_uncertainty(&net, &data.u[0], 5, 4).unwrap();
    assert_eq!(a.std.data(), b.std.data());
    assert_ne!(a.std.data(), c.std.data());
    assert!(a.std.data().iter().all(|&s| s >= 0.0));
    let (mu, lv) = posterior(&net, &data.u[0]).unwrap();
    assert_eq!((mu.shape(), lv.shape()), (&[1usize, 3][..], &[1usize, 3][..]));
}

#[test]
fn mean_baseline_examples() {
    let reference: Vec<Tensor<f64>> = [1.0, 3.0].iter().map(|&v| Tensor::full(&[2, 2, 1], v)).collect();
    let targets = vec![Tensor::full(&[2, 2, 1], 2.0), Tensor::full(&[2, 2, 1], 4.0)];
    let m = mean_baseline(&reference, &targets).unwrap();
    assert_eq!(m.per_sample, vec![0.0, 0.5]);
}
