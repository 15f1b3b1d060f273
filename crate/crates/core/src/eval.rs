//! Test-set metrics, pointwise error maps and posterior sampling.
//!
//! All predictions are returned in raw (de-normalized) units.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::losses::{stack, unstack};
use crate::network::Network;
use crate::normalize::Field;
use crate::tensor::{Scalar, Tensor};
use crate::vae::standard_normal;

/// Default number of posterior draws for uncertainty maps.
pub const DEFAULT_SAMPLES: usize = 500;

const EVAL_CHUNK: usize = 16;

fn as_batch<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, bool)> {
    match *x.shape() {
        [h, w, c] => Ok((x.clone().reshape(&[h, w, 1, c])?, true)),
        [_, _, _, _] => Ok((x.clone(), false)),
        _ => Err(Error::InvalidArgument(format!(
            "expected [H, W, C] or [H, W, B, C], got {:?}",
            x.shape()
        ))),
    }
}

fn restore<T: Scalar>(y: Tensor<T>, single: bool) -> Tensor<T> {
    if single {
        unstack(&y, 0)
    } else {
        y
    }
}

/// Forward prediction `u` from raw input `f`.
pub fn predict_forward<T: Scalar>(net: &Network<T>, f: &Tensor<T>) -> Result<Tensor<T>> {
    let (f, single) = as_batch(f)?;
    let tape = Tape::new();
    let p = net.store.bind(&tape, |_| false);
    let x = tape.constant(net.norm.normalize(&f, Field::Input));
    let y = net.op.forward_predict(&tape, &p, x)?;
    let y = net.norm.denormalize(&tape.value(y), Field::Output);
    Ok(restore(y, single))
}

/// Deterministic inverse prediction through the block chain only.
pub fn predict_inverse_latent<T: Scalar>(net: &Network<T>, u: &Tensor<T>) -> Result<Tensor<T>> {
    let (u, single) = as_batch(u)?;
    let tape = Tape::new();
    let p = net.store.bind(&tape, |_| false);
    let x = tape.constant(net.norm.normalize(&u, Field::Output));
    let y = net.op.inverse_latent(&tape, &p, x)?;
    let y = net.norm.denormalize(&tape.value(y), Field::Input);
    Ok(restore(y, single))
}

/// Posterior parameters `(mu, logvar)`, each `[B, z_dim]`, for outputs `u`.
pub fn posterior<T: Scalar>(net: &Network<T>, u: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let (u, _) = as_batch(u)?;
    let tape = Tape::new();
    let p = net.store.bind(&tape, |_| false);
    let x = tape.constant(net.norm.normalize(&u, Field::Output));
    let latent = net.op.inverse_latent(&tape, &p, x)?;
    let (mu, logvar) = net.vae.encode(&tape, &p, latent)?;
    Ok(((*tape.value(mu)).clone(), (*tape.value(logvar)).clone()))
}

/// Decode latents `[B, z_dim]` to raw input fields `[H, W, B, C]`.
pub fn decode<T: Scalar>(net: &Network<T>, z: &Tensor<T>) -> Result<Tensor<T>> {
    let tape = Tape::new();
    let p = net.store.bind(&tape, |_| false);
    let zv = tape.constant(z.clone());
    let y = net.vae.decode(&tape, &p, zv)?;
    Ok(net.norm.denormalize(&tape.value(y), Field::Input))
}

/// Inverse prediction: `decode(mu)` of the encoder fed the inverse chain.
pub fn predict_inverse<T: Scalar>(net: &Network<T>, u: &Tensor<T>) -> Result<Tensor<T>> {
    let single = u.rank() == 3;
    let (mu, _) = posterior(net, u)?;
    Ok(restore(decode(net, &mu)?, single))
}

/// `||pred_b - target_b|| / ||target_b||` for every sample of `[H, W, B, C]`
/// tensors.
pub fn per_sample_rel_l2<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Vec<f64>> {
    if pred.shape() != target.shape() || pred.rank() != 4 {
        return Err(Error::ShapeMismatch {
            op: "rel_l2",
            lhs: pred.shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    let (b, c) = (pred.shape()[2], pred.shape()[3]);
    let mut num = vec![0.0; b];
    let mut den = vec![0.0; b];
    for (i, (&p, &t)) in pred.data().iter().zip(target.data()).enumerate() {
        let k = (i / c) % b;
        let (p, t) = (p.to_f64(), t.to_f64());
        num[k] += (p - t) * (p - t);
        den[k] += t * t;
    }
    num.iter()
        .zip(&den)
        .map(|(n, d)| {
            if *d == 0.0 {
                Err(Error::ZeroNormTarget)
            } else {
                Ok((n / d).sqrt())
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub per_sample: Vec<f64>,
}

impl Metrics {
    pub fn mean(&self) -> f64 {
        mean_std(&self.per_sample).0
    }

    pub fn std(&self) -> f64 {
        mean_std(&self.per_sample).1
    }

    /// `mean ± std` as `3.60e-2 ± 5.1e-4`.
    pub fn summary(&self) -> String {
        let (m, s) = mean_std(&self.per_sample);
        format!("{m:.2e} ± {s:.1e}")
    }
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-sample relative L2 of `predict` (given stacked `[H, W, B, C]` inputs)
/// against `targets`, in chunks.
pub fn evaluate_with<T: Scalar>(
    fs: &[Tensor<T>],
    targets: &[Tensor<T>],
    mut predict: impl FnMut(&Tensor<T>) -> Result<Tensor<T>>,
) -> Result<Metrics> {
    if fs.len() != targets.len() || fs.is_empty() {
        return Err(Error::InvalidArgument("evaluation needs matching, non-empty sets".into()));
    }
    let mut per_sample = Vec::with_capacity(fs.len());
    let idx: Vec<usize> = (0..fs.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let x = stack(&chunk.iter().map(|&i| &fs[i]).collect::<Vec<_>>())?;
        let t = stack(&chunk.iter().map(|&i| &targets[i]).collect::<Vec<_>>())?;
        per_sample.extend(per_sample_rel_l2(&predict(&x)?, &t)?);
    }
    Ok(Metrics { per_sample })
}

/// Relative L2 of forward predictions over `[H, W, C]` pairs.
pub fn eval_forward<T: Scalar>(net: &Network<T>, f: &[Tensor<T>], u: &[Tensor<T>]) -> Result<Metrics> {
    evaluate_with(f, u, |x| predict_forward(net, x))
}

/// Relative L2 of `decode(mu)` inverse predictions.
pub fn eval_inverse<T: Scalar>(net: &Network<T>, f: &[Tensor<T>], u: &[Tensor<T>]) -> Result<Metrics> {
    evaluate_with(u, f, |x| predict_inverse(net, x))
}

/// Relative L2 of the deterministic inverse chain (no VAE).
pub fn eval_inverse_latent<T: Scalar>(net: &Network<T>, f: &[Tensor<T>], u: &[Tensor<T>]) -> Result<Metrics> {
    evaluate_with(u, f, |x| predict_inverse_latent(net, x))
}

/// `|pred - truth|` per location.
pub fn pointwise_error<T: Scalar>(pred: &Tensor<T>, truth: &Tensor<T>) -> Result<Tensor<T>> {
    pred.zip_map(truth, |a, b| (a - b).abs())
}

#[derive(Clone, Debug)]
pub struct UncertaintyMap<T> {
    pub mean: Tensor<T>,
    /// Population standard deviation across the draws.
    pub std: Tensor<T>,
    pub samples: usize,
}

/// Draw `samples` latents `mu + exp(logvar / 2) * eps` (`mu`, `logvar` of
/// shape `[z_dim]` or `[1, z_dim]`), map each through `decode` and return the
/// location-wise mean and std. `decode` takes `[B, z_dim]` and returns
/// `[H, W, B, C]`.
pub fn sample_decodings<T: Scalar>(
    mu: &Tensor<T>,
    logvar: &Tensor<T>,
    samples: usize,
    seed: u64,
    decode: impl FnMut(&Tensor<T>) -> Result<Tensor<T>>,
) -> Result<UncertaintyMap<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps: Tensor<T> = standard_normal(&mut rng, &[samples, mu.numel()]);
    decode_draws(mu, logvar, &eps, decode)
}

/// [`sample_decodings`] with the noise given explicitly as `[S, z_dim]`.
pub fn decode_draws<T: Scalar>(
    mu: &Tensor<T>,
    logvar: &Tensor<T>,
    eps: &Tensor<T>,
    mut decode: impl FnMut(&Tensor<T>) -> Result<Tensor<T>>,
) -> Result<UncertaintyMap<T>> {
    let z_dim = mu.numel();
    let [samples, ez] = eps.shape()[..] else {
        return Err(Error::InvalidArgument(format!("eps must be [S, z_dim], got {:?}", eps.shape())));
    };
    if ez != z_dim || logvar.numel() != z_dim {
        return Err(Error::InvalidArgument(format!(
            "mu, logvar and eps disagree on z_dim ({z_dim}, {}, {ez})",
            logvar.numel()
        )));
    }
    if samples < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {samples}")));
    }
    // Welford accumulation, so identical draws give exactly zero spread.
    let mut mean: Vec<f64> = Vec::new();
    let mut m2: Vec<f64> = Vec::new();
    let mut out_shape = Vec::new();
    let mut done = 0;
    while done < samples {
        let b = EVAL_CHUNK.min(samples - done);
        let z = Tensor::from_fn(&[b, z_dim], |i| {
            let k = i[1];
            mu.data()[k] + (logvar.data()[k] * T::from_f64(0.5)).exp() * eps.data()[(done + i[0]) * z_dim + k]
        });
        let y = decode(&z)?;
        let [h, w, yb, c] = y.shape()[..] else {
            return Err(Error::InvalidArgument("decoder must return [H, W, B, C]".into()));
        };
        if yb != b {
            return Err(Error::InvalidArgument("decoder changed the batch size".into()));
        }
        if mean.is_empty() {
            mean = vec![0.0; h * w * c];
            m2 = vec![0.0; h * w * c];
            out_shape = vec![h, w, c];
        }
        for bi in 0..b {
            let k = (done + bi + 1) as f64;
            let s = unstack(&y, bi);
            for ((m, q), &v) in mean.iter_mut().zip(m2.iter_mut()).zip(s.data()) {
                let v = v.to_f64();
                let delta = v - *m;
                *m += delta / k;
                *q += delta * (v - *m);
            }
        }
        done += b;
    }
    let n = samples as f64;
    let std: Vec<f64> = m2.iter().map(|q| (q / n).max(0.0).sqrt()).collect();
    Ok(UncertaintyMap {
        mean: Tensor::new(out_shape.clone(), mean.into_iter().map(T::from_f64).collect())?,
        std: Tensor::new(out_shape, std.into_iter().map(T::from_f64).collect())?,
        samples,
    })
}

/// Posterior predictive mean and std of the input field for one output `u`
/// (`[H, W, C]`).
pub fn posterior_uncertainty<T: Scalar>(
    net: &Network<T>,
    u: &Tensor<T>,
    samples: usize,
    seed: u64,
) -> Result<UncertaintyMap<T>> {
    if u.rank() != 3 {
        return Err(Error::InvalidArgument(format!("expected one [H, W, C] field, got {:?}", u.shape())));
    }
    let (mu, logvar) = posterior(net, u)?;
    sample_decodings(&mu, &logvar, samples, seed, |z| decode(net, z))
}

/// Forward and inverse metrics over one evaluation set.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// Dataset index of every evaluated sample.
    pub indices: Vec<usize>,
    pub forward: Metrics,
    pub inverse: Metrics,
    pub seed: u64,
    pub fingerprint: u64,
}

impl MetricsReport {
    pub fn evaluate<T: Scalar>(
        net: &Network<T>,
        indices: Vec<usize>,
        f: &[Tensor<T>],
        u: &[Tensor<T>],
        seed: u64,
        fingerprint: u64,
    ) -> Result<Self> {
        Ok(MetricsReport {
            indices,
            forward: eval_forward(net, f, u)?,
            inverse: eval_inverse(net, f, u)?,
            seed,
            fingerprint,
        })
    }

    /// `sample,rel_l2_fwd,rel_l2_inv` rows, full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,rel_l2_fwd,rel_l2_inv\n");
        for ((i, f), v) in self.indices.iter().zip(&self.forward.per_sample).zip(&self.inverse.per_sample) {
            out.push_str(&format!("{i},{f:e},{v:e}\n"));
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "forward {}\ninverse {}\nsamples={}\nseed={}\nfingerprint={:016x}\n",
            self.forward.summary(),
            self.inverse.summary(),
            self.indices.len(),
            self.seed,
            self.fingerprint
        )
    }
}

/// Per-sample relative L2 of predicting every target by the location-wise
/// mean of `reference`.
pub fn mean_baseline<T: Scalar>(reference: &[Tensor<T>], targets: &[Tensor<T>]) -> Result<Metrics> {
    let first = reference
        .first()
        .ok_or_else(|| Error::InvalidArgument("baseline needs a non-empty reference set".into()))?;
    let mut mean = vec![0.0; first.numel()];
    for r in reference {
        for (m, &v) in mean.iter_mut().zip(r.data()) {
            *m += v.to_f64() / reference.len() as f64;
        }
    }
    let mean = Tensor::new(first.shape().to_vec(), mean.into_iter().map(T::from_f64).collect())?;
    let preds: Vec<Tensor<T>> = targets.iter().map(|_| mean.clone()).collect();
    evaluate_with(&preds, targets, |x| Ok(x.clone()))
}
