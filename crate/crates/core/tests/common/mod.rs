#![allow(dead_code)]

use ifno::{Result, Tape, Tensor, Var};
use num_complex::Complex;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

pub fn random_complex(shape: &[usize], seed: u64, scale: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let z = (0..n)
        .map(|_| Complex::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
        .collect();
    Tensor::from_complex(shape.to_vec(), z).unwrap()
}

/// Sum of `y` weighted by a fixed random field.
pub fn weighted_sum(tape: &Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let w = tape.constant(random(&tape.shape(y), seed));
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

pub fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rel_err(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    max_abs_diff(a, b) / b.max_abs().max(1e-300)
}

pub fn tiny_config(grid: usize) -> ifno::network::NetworkConfig {
    ifno::network::NetworkConfig {
        operator: ifno::model::OperatorConfig {
            c_in: 1,
            c_out: 1,
            width: 2,
            modes: 2,
            blocks: 2,
            tau: 1.0,
            hidden: 4,
        },
        grid,
        z_dim: 3,
    }
}

/// Darcy pairs on an `n x n` grid as `[n, n, 1]` tensors.
pub fn darcy_pairs(n: usize, count: usize, seed: u64) -> ifno::training::PairSet<f64> {
    use ifno::datagen::{derive_seed, generate_sample, Kind, SolverOptions};
    let (mut f, mut u) = (Vec::new(), Vec::new());
    for k in 0..count {
        let s = generate_sample(Kind::Line, n, k, derive_seed(seed, k), &SolverOptions::default()).unwrap();
        f.push(s.a.reshape(&[n, n, 1]).unwrap());
        u.push(s.u.reshape(&[n, n, 1]).unwrap());
    }
    ifno::training::PairSet { f, u }
}

/// Set every parameter whose name starts with one of `prefixes` to zero.
pub fn zero_named<T: ifno::Scalar>(store: &mut ifno::params::ParamStore<T>, prefixes: &[&str]) {
    let ids: Vec<_> = store
        .ids()
        .filter(|&id| prefixes.iter().any(|p| store.name(id).starts_with(p)))
        .collect();
    for id in ids {
        let z = store.get(id).zeros_like();
        *store.get_mut(id) = z;
    }
}

/// Real field on an `n x n` grid containing only frequencies with
/// `|k1|, |k2| <= band`.
pub fn band_limited(n: usize, d: usize, band: i64, seed: u64) -> Tensor<f64> {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::new();
    for _ in 0..d {
        let mut ch = Vec::new();
        for k1 in -band..=band {
            for k2 in -band..=band {
                ch.push((k1, k2, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            }
        }
        terms.push(ch);
    }
    Tensor::from_fn(&[n, n, d], |idx| {
        let (x1, x2) = (idx[0] as f64, idx[1] as f64);
        terms[idx[2]]
            .iter()
            .map(|&(k1, k2, a, b)| {
                let th = 2.0 * PI * (k1 as f64 * x1 + k2 as f64 * x2) / n as f64;
                a * th.cos() + b * th.sin()
            })
            .sum()
    })
}

/// Spectral weights equivalent to a circular convolution with a random
/// spatial kernel, and the convolution itself computed by direct summation.
pub struct ConvCase {
    pub v: Tensor<f64>,
    pub low: Tensor<f64>,
    pub high: Tensor<f64>,
    pub m: usize,
    pub expect: Tensor<f64>,
}

/// With every non-Nyquist mode kept (`m = n / 2`) and a band-limited input,
/// the layer is a circular convolution whose kernel spectrum is the weight,
/// doubled for the k2 > 0 half of the spectrum.
pub fn circular_conv_case(n: usize, d: usize, m: usize, seed: u64) -> ConvCase {
    use std::f64::consts::PI;
    let v = band_limited(n, d, m as i64 - 1, seed);
    let kernel = random(&[n, n, d, d], seed + 1);

    let spectrum = |k1: usize, k2: usize, c: usize, o: usize| -> Complex<f64> {
        let mut acc = Complex::new(0.0, 0.0);
        for y1 in 0..n {
            for y2 in 0..n {
                let th = -2.0 * PI * ((k1 * y1 + k2 * y2) as f64) / n as f64;
                acc += Complex::from_polar(kernel.get(&[y1, y2, c, o]), th);
            }
        }
        acc
    };
    let weights = |rows: std::ops::Range<usize>| -> Tensor<f64> {
        let mut vals = Vec::new();
        for k1 in rows {
            for k2 in 0..m {
                let factor = if k2 == 0 { 1.0 } else { 2.0 };
                for c in 0..d {
                    for o in 0..d {
                        vals.push(spectrum(k1, k2, c, o) * factor);
                    }
                }
            }
        }
        Tensor::from_complex(vec![m, m, d, d], vals).unwrap()
    };
    let (low, high) = (weights(0..m), weights(n - m..n));

    let expect = Tensor::from_fn(&[n, n, d], |idx| {
        let o = idx[2];
        let mut acc = 0.0;
        for y1 in 0..n {
            for y2 in 0..n {
                let s1 = (idx[0] + n - y1) % n;
                let s2 = (idx[1] + n - y2) % n;
                for c in 0..d {
                    acc += kernel.get(&[y1, y2, c, o]) * v.get(&[s1, s2, c]);
                }
            }
        }
        acc
    });
    ConvCase { v, low, high, m, expect }
}
