use num_complex::Complex;
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn random_complex(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let z = (0..n)
        .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    Tensor::from_complex(shape.to_vec(), z).unwrap()
}

/// Random weighting so that sum-reductions do not hide wrong adjoints.
fn weighted_sum(tape: &Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let w = tape.constant(random(&tape.shape(y), seed));
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

/// Weighted sum of the real part; still depends on both components of any
/// complex operand upstream of a mixing op.
fn complex_weighted_sum(tape: &Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let re = tape.real_part(y)?;
    weighted_sum(tape, re, seed)
}

#[test]
fn elementwise_examples() {
    let tape: Tape<f64> = Tape::new();
    let a = tape.constant(t(&[3], &[1.0, 2.0, 3.0]));
    let b = tape.constant(t(&[3], &[4.0, 5.0, 6.0]));
    assert_eq!(tape.value(tape.mul(a, b).unwrap()).data(), &[4.0, 10.0, 18.0]);
    let z = tape.constant(Tensor::zeros(&[3]));
    assert_eq!(tape.value(tape.add(a, z).unwrap()).data(), &[1.0, 2.0, 3.0]);

    let tape: Tape<f64> = Tape::new();
    let a = tape.leaf(t(&[2], &[1.0, 2.0]));
    let sq = tape.mul(a, a).unwrap();
    let loss = tape.sum(sq);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(a).unwrap().data(), &[2.0, 4.0]);
}

#[test]
fn broadcast_rule_and_error_message() {
    let tape: Tape<f64> = Tape::new();
    let a = tape.constant(Tensor::ones(&[2, 2, 3]));
    let b = tape.constant(t(&[1, 3], &[1.0, 2.0, 3.0]));
    let s = tape.add(a, b).unwrap();
    assert_eq!(&tape.value(s).data()[3..6], &[2.0, 3.0, 4.0]);

    let c = tape.constant(Tensor::ones(&[2]));
    let err = tape.add(a, c).unwrap_err().to_string();
    assert!(err.contains("[2, 2, 3]") && err.contains("[2]"), "{err}");
}

#[test]
fn div_propagates_non_finite() {
    let tape: Tape<f64> = Tape::new();
    let a = tape.leaf(t(&[2], &[1.0, 0.0]));
    let b = tape.constant(t(&[2], &[0.0, 0.0]));
    let q = tape.div(a, b).unwrap();
    let v = tape.value(q);
    assert!(v.data()[0].is_infinite());
    assert!(v.data()[1].is_nan());
    let g = tape.backward(tape.sum(q)).unwrap();
    assert!(!g.get(a).unwrap().all_finite());
}

#[test]
fn binary_ops_gradcheck_with_broadcast() {
    for kind in [BinaryKind::Add, BinaryKind::Sub, BinaryKind::Mul, BinaryKind::Div] {
        let a = random(&[2, 3, 4], 1);
        let b = random(&[4], 2).map(|v| v + 2.0);
        let err = grad_check_many(
            |tape, v| {
                let y = tape.ew_op(v[0], v[1], kind)?;
                weighted_sum(tape, y, 3)
            },
            &[a, b],
            1e-5,
            None,
        )
        .unwrap();
        assert!(err < 1e-6, "{kind:?}: {err}");
    }
}

#[test]
fn pointwise_linear_examples() {
    let tape: Tape<f64> = Tape::new();
    let x = random(&[3, 3, 2], 5);
    let xv = tape.constant(x.clone());
    let eye = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let y = tape.pointwise_linear(xv, eye, None).unwrap();
    assert_eq!(tape.value(y).data(), x.data());

    let zero = tape.constant(Tensor::zeros(&[3, 3, 2]));
    let w = tape.constant(random(&[2, 4], 6));
    let bias = tape.constant(t(&[4], &[1.0, -2.0, 3.0, 0.5]));
    let y = tape.pointwise_linear(zero, w, Some(bias)).unwrap();
    for px in tape.value(y).data().chunks(4) {
        assert_eq!(px, &[1.0, -2.0, 3.0, 0.5]);
    }

    let wt = random(&[2, 3], 7);
    let bt = random(&[3], 8);
    let y = tape.pointwise_linear(xv, tape.constant(wt.clone()), Some(tape.constant(bt.clone()))).unwrap();
    let got = tape.value(y);
    for i in 0..3 {
        for j in 0..3 {
            for o in 0..3 {
                let mut acc = bt.data()[o];
                for c in 0..2 {
                    acc += x.get(&[i, j, c]) * wt.get(&[c, o]);
                }
                assert!((got.get(&[i, j, o]) - acc).abs() < 1e-12);
            }
        }
    }

    let bad = tape.constant(Tensor::zeros(&[3, 2]));
    assert!(tape.pointwise_linear(xv, bad, None).is_err());
}

#[test]
fn pointwise_linear_gradcheck() {
    let err = grad_check_many(
        |tape, v| {
            let y = tape.pointwise_linear(v[0], v[1], Some(v[2]))?;
            weighted_sum(tape, y, 9)
        },
        &[random(&[3, 3, 2, 2], 10), random(&[2, 3], 11), random(&[3], 12)],
        1e-5,
        None,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn softplus_examples() {
    let tape: Tape<f64> = Tape::new();
    let x = tape.constant(t(&[3], &[0.0, 50.0, -100.0]));
    let y = tape.value(tape.softplus_clamped(x, 1.0, 1e-6).unwrap());
    assert!((y.data()[0] - std::f64::consts::LN_2).abs() < 1e-12);
    assert!((y.data()[1] - 50.0).abs() < 1e-12);
    assert_eq!(y.data()[2], 1e-6);
    let y2 = tape.value(tape.softplus_clamped(x, 2.0, 1e-6).unwrap());
    assert!((y2.data()[0] - std::f64::consts::LN_2 / 2.0).abs() < 1e-12);
    assert!(tape.softplus_clamped(x, 0.0, 1e-6).is_err());
    assert!(tape.softplus_clamped(x, -1.0, 1e-6).is_err());
}

#[test]
fn softplus_clamped_region_has_zero_adjoint() {
    let tape: Tape<f64> = Tape::new();
    let x = tape.leaf(t(&[2], &[-40.0, 0.0]));
    let y = tape.softplus_clamped(x, 1.0, 1e-6).unwrap();
    let g = tape.backward(tape.sum(y)).unwrap();
    assert_eq!(g.get(x).unwrap().data()[0], 0.0);
    assert!((g.get(x).unwrap().data()[1] - 0.5).abs() < 1e-15);
}

#[test]
fn softplus_chain_gradcheck() {
    let x = random(&[16], 13).map(|v| 3.0 * v);
    let err = grad_check(
        |tape, x| {
            let a = tape.softplus_clamped(x, 1.5, 1e-6)?;
            let b = tape.mul(a, x)?;
            let c = tape.softplus_clamped(b, 0.7, 1e-6)?;
            Ok(tape.sum(c))
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn gelu_examples_and_gradcheck() {
    let tape: Tape<f64> = Tape::new();
    let x = tape.constant(t(&[2], &[0.0, 10.0]));
    let y = tape.value(tape.gelu(x));
    assert_eq!(y.data()[0], 0.0);
    assert!((y.data()[1] - 10.0).abs() < 1e-4);

    let err = grad_check(|tape, x| Ok(tape.sum(tape.gelu(x))), &t(&[4], &[-2.0, -0.5, 0.3, 4.0]), 1e-5).unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn fft_examples() {
    let tape: Tape<f64> = Tape::new();
    let mut delta = Tensor::zeros(&[4, 4]);
    delta.set(&[0, 0], 1.0);
    let d = tape.constant(delta);
    let spec = tape.value(tape.fft2(tape.to_complex(d).unwrap()).unwrap());
    for z in spec.as_complex() {
        assert!((z - Complex::new(1.0, 0.0)).norm() < 1e-15);
    }

    let x = random_complex(&[8, 8], 14);
    let xv = tape.constant(x.clone());
    let xh = tape.fft2(xv).unwrap();
    let back = tape.value(tape.ifft2(xh).unwrap());
    assert!(back.zip_map(&x, |a, b| (a - b).abs()).unwrap().max_abs() < 1e-12);

    let energy: f64 = x.as_complex().iter().map(|z| z.norm_sqr()).sum();
    let spec_energy: f64 = tape.value(xh).as_complex().iter().map(|z| z.norm_sqr()).sum();
    assert!((energy - spec_energy / 64.0).abs() < 1e-10);

    let bad = tape.constant(Tensor::complex_zeros(&[6, 4]));
    assert!(matches!(tape.fft2(bad), Err(Error::NotPowerOfTwo(6, 4))));
}

#[test]
fn fft_roundtrip_all_sizes() {
    let tape: Tape<f64> = Tape::new();
    for h in [1, 2, 4, 8, 16, 32, 64] {
        for w in [1, 2, 4, 8, 16, 32, 64] {
            let x = random_complex(&[h, w, 2], (h * 100 + w) as u64);
            let xv = tape.constant(x.clone());
            let back = tape.value(tape.ifft2(tape.fft2(xv).unwrap()).unwrap());
            let err = back.zip_map(&x, |a, b| (a - b).abs()).unwrap().max_abs();
            assert!(err < 1e-12, "{h}x{w}: {err}");
        }
    }
}

#[test]
fn fft_chain_gradcheck() {
    let x = random(&[8, 8], 15);
    let err = grad_check(
        |tape, x| {
            let z = tape.to_complex(x)?;
            let zh = tape.fft2(z)?;
            let back = tape.ifft2(zh)?;
            let re = tape.real_part(back)?;
            let sq = tape.mul(re, re)?;
            weighted_sum(tape, sq, 16)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn complex_gradients_follow_re_plus_i_im_convention() {
    // Loss = weighted sum of Re(fft2(z)); both components of z get checked.
    let z = random_complex(&[4, 4, 3], 17);
    let err = grad_check(
        |tape, z| {
            let zh = tape.fft2(z)?;
            complex_weighted_sum(tape, zh, 18)
        },
        &z,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-7, "{err}");
}

#[test]
fn reduction_examples() {
    let tape: Tape<f64> = Tape::new();
    let x = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]));
    assert_eq!(tape.item(tape.sum(x)), 6.0);
    let eye = tape.constant(t(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
    assert!((tape.item(tape.frob_norm(eye)) - 3f64.sqrt()).abs() < 1e-15);
    let g = tape.backward(tape.mean(x)).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[1.0 / 3.0; 3]);

    let tape: Tape<f64> = Tape::new();
    let z = tape.leaf(Tensor::zeros(&[2, 2]));
    let n = tape.frob_norm(z);
    assert_eq!(tape.item(n), 0.0);
    let g = tape.backward(n).unwrap();
    assert_eq!(g.get(z).unwrap().data(), &[0.0; 4]);
}

#[test]
fn backward_examples() {
    let tape: Tape<f64> = Tape::new();
    let x = tape.leaf(random(&[5], 19));
    let g = tape.backward(tape.sum(x)).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[1.0; 5]);

    let n = tape.frob_norm(x);
    let loss = tape.mul(n, n).unwrap();
    let g = tape.backward(loss).unwrap();
    let expect = tape.value(x).scale(2.0);
    assert!(g.get(x).unwrap().zip_map(&expect, |a, b| (a - b).abs()).unwrap().max_abs() < 1e-14);

    let unused = tape.leaf(Tensor::ones(&[2]));
    let g = tape.backward(loss).unwrap();
    assert!(g.get(unused).is_none());
    assert_eq!(g.wrt(&tape, unused).data(), &[0.0, 0.0]);

    assert!(matches!(tape.backward(x), Err(Error::InvalidArgument(_))));
}

#[test]
fn relative_l2_composite_gradcheck() {
    let pred = random(&[4, 4, 3, 2], 20);
    let target = random(&[4, 4, 3, 2], 21);
    let err = grad_check(
        |tape, p| {
            let t = tape.constant(target.clone());
            let diff = tape.sub(p, t)?;
            let num = tape.sample_norms(diff);
            let den = tape.sample_norms(t);
            let r = tape.div(num, den)?;
            Ok(tape.mean(r))
        },
        &pred,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn gradients_accumulate_across_paths() {
    let tape: Tape<f64> = Tape::new();
    let x = tape.leaf(t(&[1], &[3.0]));
    let a = tape.scale(x, 2.0);
    let b = tape.exp(x);
    let s = tape.add(a, b).unwrap();
    let s = tape.add(s, x).unwrap();
    let g = tape.backward(tape.sum(s)).unwrap();
    assert!((g.get(x).unwrap().data()[0] - (3.0 + 3f64.exp())).abs() < 1e-12);
}

#[test]
fn constant_subgraph_records_no_ops() {
    let tape: Tape<f64> = Tape::new();
    let c = tape.constant(Tensor::ones(&[2]));
    let y = tape.exp(c);
    assert!(!tape.requires_grad(y));
    let g = tape.backward(tape.sum(y)).unwrap();
    assert!(g.get(c).is_none());
}

#[test]
fn backward_is_bit_deterministic() {
    let run = || {
        let tape: Tape<f64> = Tape::new();
        let x = tape.leaf(random(&[4, 4, 2, 3], 22));
        let w = tape.leaf(random(&[3, 3], 23));
        let y = tape.pointwise_linear(x, w, None).unwrap();
        let y = tape.gelu(y);
        let n = tape.frob_norm(y);
        let g = tape.backward(n).unwrap();
        (g.wrt(&tape, x), g.wrt(&tape, w))
    };
    let (a1, b1) = run();
    let (a2, b2) = run();
    assert_eq!(a1.data(), a2.data());
    assert_eq!(b1.data(), b2.data());
}

#[test]
fn shape_ops_gradcheck() {
    let a = random(&[2, 2, 3, 3], 24);
    let b = random(&[2, 2, 3, 3], 25);
    let err = grad_check_many(
        |tape, v| {
            let c = tape.concat(&[v[0], v[1]])?;
            let (l, r) = tape.split_last(c, 3)?;
            let p = tape.mul(l, r)?;
            let f = tape.flatten_spatial(p)?;
            let u = tape.unflatten_spatial(f, 2, 2, 3)?;
            let r = tape.reshape(u, &[4, 9])?;
            let s = tape.scale(r, 0.5);
            let s = tape.shift(s, 1.0);
            let s = tape.exp(s);
            weighted_sum(tape, s, 26)
        },
        &[a, b],
        1e-5,
        None,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn flatten_orders_pixels_then_channels() {
    let tape: Tape<f64> = Tape::new();
    let x = Tensor::from_fn(&[2, 2, 2, 3], |i| (i[0] * 1000 + i[1] * 100 + i[2] * 10 + i[3]) as f64);
    let f = tape.flatten_spatial(tape.constant(x)).unwrap();
    let v = tape.value(f);
    assert_eq!(v.shape(), &[2, 12]);
    // sample 1, pixel (1, 0), channel 2
    assert_eq!(v.get(&[1, 2 * 3 + 2]), 1012.0);
}

#[test]
fn spectral_mix_matches_loops_and_gradchecks() {
    let (h, w, b, d, m) = (8, 8, 2, 3, 2);
    let x = random_complex(&[h, w, b, d], 27);
    let low = random_complex(&[m, m, d, d], 28);
    let high = random_complex(&[m, m, d, d], 29);
    let tape: Tape<f64> = Tape::new();
    let y = tape
        .spectral_mix(tape.constant(x.clone()), tape.constant(low.clone()), tape.constant(high.clone()), m)
        .unwrap();
    let yv = tape.value(y);
    let xc = x.as_complex();
    let yc = yv.as_complex();
    for k1 in 0..h {
        for k2 in 0..w {
            for bi in 0..b {
                for o in 0..d {
                    let mut acc = Complex::new(0.0, 0.0);
                    let r = if k1 < m {
                        Some((&low, k1))
                    } else if k1 >= h - m {
                        Some((&high, k1 - (h - m)))
                    } else {
                        None
                    };
                    if let (Some((r, row)), true) = (r, k2 < m) {
                        for c in 0..d {
                            acc += xc[((k1 * w + k2) * b + bi) * d + c] * r.as_complex()[((row * m + k2) * d + c) * d + o];
                        }
                    }
                    assert!((yc[((k1 * w + k2) * b + bi) * d + o] - acc).norm() < 1e-13);
                }
            }
        }
    }

    let err = grad_check_many(
        |tape, v| {
            let y = tape.spectral_mix(v[0], v[1], v[2], m)?;
            complex_weighted_sum(tape, y, 30)
        },
        &[x, low, high],
        1e-5,
        None,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn spectral_mix_rejects_too_many_modes() {
    let tape: Tape<f64> = Tape::new();
    let x = tape.constant(Tensor::complex_zeros(&[4, 4, 1, 1]));
    let r = tape.constant(Tensor::complex_zeros(&[3, 3, 1, 1]));
    assert!(matches!(tape.spectral_mix(x, r, r, 3), Err(Error::ModeBound { .. })));
}

#[test]
fn conv_and_transpose_gradcheck() {
    let x = random(&[4, 4, 2, 2], 31);
    let k = random(&[3, 3, 2, 3], 32);
    let b = random(&[3], 33);
    let err = grad_check_many(
        |tape, v| {
            let y = tape.conv2d(v[0], v[1], Some(v[2]), 2, 1)?;
            let y = tape.gelu(y);
            weighted_sum(tape, y, 34)
        },
        &[x.clone(), k.clone(), b],
        1e-5,
        None,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");

    let small = random(&[2, 2, 2, 3], 35);
    let kt = random(&[3, 3, 2, 3], 36);
    let bt = random(&[2], 37);
    let err = grad_check_many(
        |tape, v| {
            let y = tape.conv_transpose2d(v[0], v[1], Some(v[2]))?;
            weighted_sum(tape, y, 38)
        },
        &[small, kt, bt],
        1e-5,
        None,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn conv_transpose_is_adjoint_of_strided_conv() {
    let x = random(&[8, 8, 2, 3], 39);
    let y = random(&[4, 4, 2, 5], 40);
    let k = random(&[3, 3, 3, 5], 41);
    let tape: Tape<f64> = Tape::new();
    let kx = tape.constant(k);
    let cx = tape.value(tape.conv2d(tape.constant(x.clone()), kx, None, 2, 1).unwrap());
    let ty = tape.value(tape.conv_transpose2d(tape.constant(y.clone()), kx, None).unwrap());
    let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
    let rhs: f64 = x.data().iter().zip(ty.data()).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn softplus_is_positive(x in -1e3f64..1e3, tau in 0.01f64..10.0) {
        let tape: Tape<f64> = Tape::new();
        let v = tape.constant(Tensor::scalar(x));
        let y = tape.item(tape.softplus_clamped(v, tau, 1e-6).unwrap());
        prop_assert!(y >= 1e-6 && y.is_finite());
    }

    #[test]
    fn parseval_holds(seed in 0u64..1000, hp in 0u32..5, wp in 0u32..5) {
        let (h, w) = (1usize << hp, 1usize << wp);
        let x = random_complex(&[h, w], seed);
        let tape: Tape<f64> = Tape::new();
        let xh = tape.value(tape.fft2(tape.constant(x.clone())).unwrap());
        let e: f64 = x.as_complex().iter().map(|z| z.norm_sqr()).sum();
        let eh: f64 = xh.as_complex().iter().map(|z| z.norm_sqr()).sum::<f64>() / (h * w) as f64;
        prop_assert!((e - eh).abs() < 1e-10 * e.max(1.0));
    }

    #[test]
    fn elementwise_gradcheck_random_points(seed in 0u64..10_000) {
        let x = random(&[3], seed);
        let err = grad_check(
            |tape, x| {
                let g = tape.gelu(x);
                let s = tape.softplus_clamped(x, 1.0, 1e-6)?;
                let e = tape.exp(x);
                let p = tape.mul(g, s)?;
                let q = tape.div(p, e)?;
                Ok(tape.sum(q))
            },
            &x,
            1e-5,
        ).unwrap();
        prop_assert!(err < 1e-4, "{}", err);
    }
}

fn kept(k1: usize, k2: usize, h: usize, m: usize) -> bool {
    k2 < m && (k1 < m || k1 >= h - m)
}

#[test]
fn truncated_transforms_match_full_fft() {
    for (h, w, m) in [(8, 8, 2), (8, 16, 4), (16, 8, 4), (4, 4, 2)] {
        let x = random(&[h, w, 2, 3], 40);
        let tape: Tape<f64> = Tape::new();
        let xv = tape.constant(x);
        let full = tape.fft2(tape.to_complex(xv).unwrap()).unwrap();
        let trunc = tape.rfft2_modes(xv, m).unwrap();
        let (fv, tv) = (tape.value(full), tape.value(trunc));
        let lane = 6;
        for (i, (a, b)) in fv.as_complex().iter().zip(tv.as_complex()).enumerate() {
            let (k1, k2) = (i / (w * lane), (i / lane) % w);
            let expect = if kept(k1, k2, h, m) { *a } else { Complex::new(0.0, 0.0) };
            assert!((expect - b).norm() < 1e-12, "{h}x{w} m={m} at {k1},{k2}");
        }

        let y = random_complex(&[h, w, 2, 3], 41);
        let mut masked = y.clone();
        for (i, z) in masked.as_complex_mut().iter_mut().enumerate() {
            if !kept(i / (w * lane), (i / lane) % w, h, m) {
                *z = Complex::new(0.0, 0.0);
            }
        }
        let yv = tape.constant(y);
        let mv = tape.constant(masked);
        let a = tape.real_part(tape.ifft2(mv).unwrap()).unwrap();
        let b = tape.irfft2_modes(yv, m).unwrap();
        assert!(crate::tensor::max_rel_error(&tape.value(b), &tape.value(a), 1.0) < 1e-12);
    }
}

#[test]
fn truncated_transforms_gradcheck() {
    let x = random(&[8, 8, 2], 42);
    let err = grad_check(|tape, x| complex_weighted_sum(tape, tape.rfft2_modes(x, 3)?, 43), &x, 1e-5).unwrap();
    assert!(err < 1e-6, "{err}");
    let y = random_complex(&[8, 8, 2], 44);
    let err = grad_check(|tape, y| weighted_sum(tape, tape.irfft2_modes(y, 3)?, 45), &y, 1e-5).unwrap();
    assert!(err < 1e-6, "{err}");
    let tape: Tape<f64> = Tape::new();
    let v = tape.constant(Tensor::zeros(&[8, 8, 1]));
    assert!(matches!(tape.rfft2_modes(v, 5), Err(Error::ModeBound { .. })));
}
