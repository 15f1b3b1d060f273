//! Location-wise white noise scaled by the dataset's own spread.

use rand::RngExt;
use rand_distr::StandardNormal;

use crate::tensor::Tensor;

/// Population standard deviation across samples at each location.
pub fn location_std(xs: &[Tensor<f64>]) -> Tensor<f64> {
    let first = xs.first().expect("location_std of an empty set");
    let n = xs.len() as f64;
    let mut mean = first.zeros_like();
    for x in xs {
        mean.add_assign(x);
    }
    let mean = mean.scale(1.0 / n);
    let mut var = first.zeros_like();
    for x in xs {
        for ((v, &xi), &mi) in var.data_mut().iter_mut().zip(x.data()).zip(mean.data()) {
            *v += (xi - mi) * (xi - mi);
        }
    }
    var.map(|v| (v / n).sqrt())
}

/// `x <- x + eta * sigma * eps` with fresh standard-normal `eps` per sample
/// and location. Returns `sigma`. With `eta == 0` nothing is touched.
pub fn inject_noise(xs: &mut [Tensor<f64>], eta: f64, rng: &mut impl RngExt) -> Tensor<f64> {
    let sigma = location_std(xs);
    if eta == 0.0 {
        return sigma;
    }
    for x in xs.iter_mut() {
        for (v, &s) in x.data_mut().iter_mut().zip(sigma.data()) {
            let e: f64 = rng.sample(StandardNormal);
            *v += eta * s * e;
        }
    }
    sigma
}

/// `10 log10(sum clean^2 / sum (noisy - clean)^2)` over the whole set;
/// `+inf` when the two are identical.
pub fn snr_db(clean: &[Tensor<f64>], noisy: &[Tensor<f64>]) -> f64 {
    let mut signal = 0.0;
    let mut noise = 0.0;
    for (c, n) in clean.iter().zip(noisy) {
        for (&a, &b) in c.data().iter().zip(n.data()) {
            signal += a * a;
            noise += (b - a) * (b - a);
        }
    }
    if noise == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (signal / noise).log10()
    }
}
