//! Training objectives. Every relative-L2 term is measured on de-normalized
//! fields, so the model's internal standardization never changes the metric.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::normalize::{Field, Normalizer};
use crate::params::Bound;
use crate::tensor::{Scalar, Tensor};
use crate::vae::{kl_divergence, reparameterize};

/// A batch of raw fields plus their normalized copies, all `[H, W, B, C]`.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub f: Tensor<T>,
    pub u: Tensor<T>,
    pub f_norm: Tensor<T>,
    pub u_norm: Tensor<T>,
}

impl<T: Scalar> Batch<T> {
    /// Stack `[H, W, C]` samples along a new batch axis.
    pub fn new(norm: &Normalizer, fs: &[&Tensor<T>], us: &[&Tensor<T>]) -> Result<Self> {
        let f = stack(fs)?;
        let u = stack(us)?;
        let f_norm = norm.normalize(&f, Field::Input);
        let u_norm = norm.normalize(&u, Field::Output);
        Ok(Batch { f, u, f_norm, u_norm })
    }

    pub fn len(&self) -> usize {
        self.f.shape()[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `[H, W, C]` tensors to one `[H, W, B, C]` tensor.
pub fn stack<T: Scalar>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = xs.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let shape = first.shape().to_vec();
    let [h, w, c] = shape[..] else {
        return Err(Error::InvalidArgument(format!("expected [H, W, C] samples, got {shape:?}")));
    };
    let b = xs.len();
    let mut data = vec![T::zero(); h * w * b * c];
    for (bi, x) in xs.iter().enumerate() {
        if x.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "stack",
                lhs: shape.clone(),
                rhs: x.shape().to_vec(),
            });
        }
        for p in 0..h * w {
            let dst = (p * b + bi) * c;
            data[dst..dst + c].copy_from_slice(&x.data()[p * c..(p + 1) * c]);
        }
    }
    Tensor::new(vec![h, w, b, c], data)
}

/// Sample `b` of a `[H, W, B, C]` tensor as `[H, W, C]`.
pub fn unstack<T: Scalar>(x: &Tensor<T>, b: usize) -> Tensor<T> {
    let [h, w, nb, c] = x.shape()[..] else {
        panic!("unstack needs a rank-4 tensor");
    };
    let mut data = Vec::with_capacity(h * w * c);
    for p in 0..h * w {
        let src = (p * nb + b) * c;
        data.extend_from_slice(&x.data()[src..src + c]);
    }
    Tensor::new(vec![h, w, c], data).unwrap()
}

/// `||pred - target|| / ||target||` per sample, averaged over the batch.
pub fn rel_l2<T: Scalar>(tape: &Tape<T>, pred: Var, target: Var) -> Result<Var> {
    let den = tape.sample_norms(target);
    if tape.value(den).data().iter().any(|&n| n == T::zero()) {
        return Err(Error::ZeroNormTarget);
    }
    let diff = tape.sub(pred, target)?;
    let num = tape.sample_norms(diff);
    let ratio = tape.div(num, den)?;
    Ok(tape.mean(ratio))
}

/// Values of the individual loss terms of one evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub fwd: f64,
    pub inv: f64,
    pub pq: f64,
    pub p2q: f64,
    pub kl: f64,
    pub rec: f64,
    pub total: f64,
}

impl LossTerms {
    /// `self += w * other`, for batch-size weighted averaging.
    pub fn accumulate(&mut self, other: &LossTerms, w: f64) {
        self.fwd += w * other.fwd;
        self.inv += w * other.inv;
        self.pq += w * other.pq;
        self.p2q += w * other.p2q;
        self.kl += w * other.kl;
        self.rec += w * other.rec;
        self.total += w * other.total;
    }
}

struct Inputs {
    f: Var,
    u: Var,
    f_norm: Var,
    u_norm: Var,
}

fn inputs<T: Scalar>(tape: &Tape<T>, batch: &Batch<T>) -> Inputs {
    Inputs {
        f: tape.constant(batch.f.clone()),
        u: tape.constant(batch.u.clone()),
        f_norm: tape.constant(batch.f_norm.clone()),
        u_norm: tape.constant(batch.u_norm.clone()),
    }
}

fn rel_raw<T: Scalar>(tape: &Tape<T>, net: &Network<T>, pred: Var, target: Var, field: Field) -> Result<Var> {
    let raw = net.norm.denormalize_var(tape, pred, field)?;
    rel_l2(tape, raw, target)
}

/// The three operator terms shared by the stage-1 and joint objectives:
/// forward prediction, `Q'(P(f))` and `Q(P'(u))`. Also returns the lifted
/// output latents for reuse by the inverse path.
fn operator_terms<T: Scalar>(
    tape: &Tape<T>,
    net: &Network<T>,
    p: &Bound,
    x: &Inputs,
) -> Result<(Var, Var, Var, (Var, Var))> {
    let op = &net.op;
    let (a1, a2) = op.lift(tape, p, x.f_norm)?;
    let (b1, b2) = op.chain_forward(tape, p, a1, a2)?;
    let fwd_pred = op.project(tape, p, b1, b2)?;
    let fwd = rel_raw(tape, net, fwd_pred, x.u, Field::Output)?;
    let pq_pred = op.project_prime(tape, p, a1, a2)?;
    let pq = rel_raw(tape, net, pq_pred, x.f, Field::Input)?;

    let (c1, c2) = op.lift_prime(tape, p, x.u_norm)?;
    let p2q_pred = op.project(tape, p, c1, c2)?;
    let p2q = rel_raw(tape, net, p2q_pred, x.u, Field::Output)?;
    Ok((fwd, pq, p2q, (c1, c2)))
}

fn inverse_from_lifted<T: Scalar>(tape: &Tape<T>, net: &Network<T>, p: &Bound, lifted: (Var, Var)) -> Result<Var> {
    let (v1, v2) = net.op.chain_inverse(tape, p, lifted.0, lifted.1)?;
    net.op.project_prime(tape, p, v1, v2)
}

fn sum_terms<T: Scalar>(tape: &Tape<T>, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    Ok(acc)
}

/// Stage-1 objective: forward + inverse + `Q'(P(f))` vs `f` + `Q(P'(u))` vs `u`.
pub fn loss_ifb<T: Scalar>(tape: &Tape<T>, net: &Network<T>, p: &Bound, batch: &Batch<T>) -> Result<(Var, LossTerms)> {
    let x = inputs(tape, batch);
    let (fwd, pq, p2q, lifted) = operator_terms(tape, net, p, &x)?;
    let inv_pred = inverse_from_lifted(tape, net, p, lifted)?;
    let inv = rel_raw(tape, net, inv_pred, x.f, Field::Input)?;
    let total = sum_terms(tape, &[fwd, inv, pq, p2q])?;
    let terms = LossTerms {
        fwd: tape.item(fwd).to_f64(),
        inv: tape.item(inv).to_f64(),
        pq: tape.item(pq).to_f64(),
        p2q: tape.item(p2q).to_f64(),
        total: tape.item(total).to_f64(),
        ..LossTerms::default()
    };
    Ok((total, terms))
}

/// `beta * KL + rel-L2 reconstruction` of `f` from the VAE fed `enc_input`.
fn vae_terms<T: Scalar>(
    tape: &Tape<T>,
    net: &Network<T>,
    p: &Bound,
    enc_input: Var,
    target: Var,
    beta: f64,
    eps: &Tensor<T>,
) -> Result<(Var, Var, Var)> {
    let (mu, logvar) = net.vae.encode(tape, p, enc_input)?;
    let e = tape.constant(eps.clone());
    let z = reparameterize(tape, mu, logvar, e)?;
    let recon = net.vae.decode(tape, p, z)?;
    let rec = rel_raw(tape, net, recon, target, Field::Input)?;
    let kl = kl_divergence(tape, mu, logvar)?;
    let weighted = tape.scale(kl, T::from_f64(beta));
    let total = tape.add(weighted, rec)?;
    Ok((total, kl, rec))
}

/// Stage-2 objective on the VAE alone; `eps` is `[B, z_dim]`.
pub fn loss_vae<T: Scalar>(
    tape: &Tape<T>,
    net: &Network<T>,
    p: &Bound,
    batch: &Batch<T>,
    beta: f64,
    eps: &Tensor<T>,
) -> Result<(Var, LossTerms)> {
    let x = inputs(tape, batch);
    let (total, kl, rec) = vae_terms(tape, net, p, x.f_norm, x.f, beta, eps)?;
    let terms = LossTerms {
        kl: tape.item(kl).to_f64(),
        rec: tape.item(rec).to_f64(),
        total: tape.item(total).to_f64(),
        ..LossTerms::default()
    };
    Ok((total, terms))
}

/// Stage-3 objective: forward + `Q'(P(f))` + `Q(P'(u))` + VAE terms, with the
/// encoder fed the deterministic inverse prediction.
pub fn loss_joint<T: Scalar>(
    tape: &Tape<T>,
    net: &Network<T>,
    p: &Bound,
    batch: &Batch<T>,
    beta: f64,
    eps: &Tensor<T>,
) -> Result<(Var, LossTerms)> {
    let x = inputs(tape, batch);
    let (fwd, pq, p2q, lifted) = operator_terms(tape, net, p, &x)?;
    let inv_latent = inverse_from_lifted(tape, net, p, lifted)?;
    let (vae, kl, rec) = vae_terms(tape, net, p, inv_latent, x.f, beta, eps)?;
    let total = sum_terms(tape, &[fwd, pq, p2q, vae])?;
    let terms = LossTerms {
        fwd: tape.item(fwd).to_f64(),
        pq: tape.item(pq).to_f64(),
        p2q: tape.item(p2q).to_f64(),
        kl: tape.item(kl).to_f64(),
        rec: tape.item(rec).to_f64(),
        total: tape.item(total).to_f64(),
        ..LossTerms::default()
    };
    Ok((total, terms))
}
