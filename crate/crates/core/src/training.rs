//! Adam and the three-stage schedule: operator only, VAE only, then joint.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::losses::{loss_ifb, loss_joint, loss_vae, Batch, LossTerms};
use crate::network::Network;
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};
use crate::vae::standard_normal;

/// Losses above this abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Learning rate of stages 1 and 2.
    pub lr: f64,
    /// Learning rate of the joint fine-tuning stage.
    pub lr_joint: f64,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: [usize; 3],
    pub beta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            lr_joint: 1e-4,
            lr_decay: 0.99,
            weight_decay: 0.0,
            batch: 10,
            epochs: [100, 200, 50],
            beta: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: Vec<Option<Tensor<T>>>,
    v: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n_params: usize, lr: f64, weight_decay: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: vec![None; n_params],
            v: vec![None; n_params],
        }
    }

    /// One bias-corrected update of every parameter in `grads`. Weight decay
    /// is decoupled (AdamW). Nothing is modified if any gradient is
    /// non-finite.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[(ParamId, Tensor<T>)]) -> Result<()> {
        if let Some((id, _)) = grads.iter().find(|(_, g)| !g.all_finite()) {
            return Err(Error::NonFiniteGradient(store.name(*id).to_string()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (id, g) in grads {
            let i = id.index();
            let m = self.m[i].get_or_insert_with(|| g.zeros_like());
            let v = self.v[i].get_or_insert_with(|| g.zeros_like());
            let p = store.get_mut(*id);
            let decay = 1.0 - self.lr * self.weight_decay;
            for (((pj, &gj), mj), vj) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let gf = gj.to_f64();
                let mf = b1 * mj.to_f64() + (1.0 - b1) * gf;
                let vf = b2 * vj.to_f64() + (1.0 - b2) * gf * gf;
                *mj = T::from_f64(mf);
                *vj = T::from_f64(vf);
                let update = self.lr * (mf / c1) / ((vf / c2).sqrt() + self.eps);
                *pj = T::from_f64(pj.to_f64() * decay - update);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Operator = 1,
    Vae = 2,
    Joint = 3,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Operator, Stage::Vae, Stage::Joint];

    pub fn number(self) -> usize {
        self as usize
    }

    pub fn from_number(n: usize) -> Option<Stage> {
        Stage::ALL.get(n.checked_sub(1)?).copied()
    }

    fn trains(self, net: &Network<impl Scalar>, id: ParamId) -> bool {
        match self {
            Stage::Operator => !net.is_vae(id),
            Stage::Vae => net.is_vae(id),
            Stage::Joint => true,
        }
    }
}

/// Loss values for one epoch; epoch 0 is the evaluation before training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub stage: Stage,
    pub epoch: usize,
    pub terms: LossTerms,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    /// Records of one stage, including the epoch-0 row.
    pub fn stage(&self, stage: Stage) -> Vec<EpochRecord> {
        self.records.iter().filter(|r| r.stage == stage).copied().collect()
    }

    /// Number of trained epochs recorded per stage.
    pub fn lengths(&self) -> [usize; 3] {
        Stage::ALL.map(|s| self.records.iter().filter(|r| r.stage == s && r.epoch > 0).count())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,stage,j_fwd,j_inv,j_pq,j_p2q,j_kl,j_rec,total\n");
        for r in &self.records {
            let t = &r.terms;
            out.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                r.epoch,
                r.stage.number(),
                t.fwd,
                t.inv,
                t.pq,
                t.p2q,
                t.kl,
                t.rec,
                t.total
            ));
        }
        out
    }

    /// Inverse of [`History::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::Config(format!("malformed loss history line {line:?}"));
        let mut records = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 9 {
                return Err(bad(line));
            }
            let num = |i: usize| cells[i].parse::<f64>().map_err(|_| bad(line));
            records.push(EpochRecord {
                epoch: cells[0].parse().map_err(|_| bad(line))?,
                stage: cells[1]
                    .parse()
                    .ok()
                    .and_then(Stage::from_number)
                    .ok_or_else(|| bad(line))?,
                terms: LossTerms {
                    fwd: num(2)?,
                    inv: num(3)?,
                    pq: num(4)?,
                    p2q: num(5)?,
                    kl: num(6)?,
                    rec: num(7)?,
                    total: num(8)?,
                },
            });
        }
        Ok(History { records })
    }
}

/// Training pairs as `[H, W, C]` tensors in raw units.
#[derive(Clone, Debug)]
pub struct PairSet<T> {
    pub f: Vec<Tensor<T>>,
    pub u: Vec<Tensor<T>>,
}

impl<T: Scalar> PairSet<T> {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn batch(&self, net: &Network<T>, idx: &[usize]) -> Result<Batch<T>> {
        let fs: Vec<_> = idx.iter().map(|&i| &self.f[i]).collect();
        let us: Vec<_> = idx.iter().map(|&i| &self.u[i]).collect();
        Batch::new(&net.norm, &fs, &us)
    }
}

fn stage_rng(seed: u64, stage: Stage) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage.number() as u64);
    rng
}

fn stage_loss<T: Scalar>(
    tape: &Tape<T>,
    net: &Network<T>,
    p: &crate::params::Bound,
    stage: Stage,
    batch: &Batch<T>,
    beta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(crate::autodiff::Var, LossTerms)> {
    match stage {
        Stage::Operator => loss_ifb(tape, net, p, batch),
        Stage::Vae | Stage::Joint => {
            let eps = standard_normal(rng, &[batch.len(), net.cfg.z_dim]);
            if stage == Stage::Vae {
                loss_vae(tape, net, p, batch, beta, &eps)
            } else {
                loss_joint(tape, net, p, batch, beta, &eps)
            }
        }
    }
}

fn check_loss(stage: Stage, epoch: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() || loss > DIVERGENCE_LIMIT {
        return Err(Error::Divergence {
            stage: stage.number(),
            epoch,
            loss,
        });
    }
    Ok(())
}

/// Full-set loss of `stage` without updating anything.
pub fn evaluate_stage<T: Scalar>(
    net: &Network<T>,
    data: &PairSet<T>,
    stage: Stage,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LossTerms> {
    let mut acc = LossTerms::default();
    let order: Vec<usize> = (0..data.len()).collect();
    for chunk in order.chunks(cfg.batch.max(1)) {
        let batch = data.batch(net, chunk)?;
        let tape = Tape::new();
        let p = net.store.bind(&tape, |_| false);
        let (_, terms) = stage_loss(&tape, net, &p, stage, &batch, cfg.beta, rng)?;
        acc.accumulate(&terms, chunk.len() as f64 / data.len() as f64);
    }
    Ok(acc)
}

/// Train one stage with a fresh optimizer and its own random stream.
pub fn train_stage<T: Scalar>(
    net: &mut Network<T>,
    data: &PairSet<T>,
    stage: Stage,
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if cfg.batch == 0 || cfg.batch > data.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {} must be in 1..={}",
            cfg.batch,
            data.len()
        )));
    }
    let mut rng = stage_rng(cfg.seed, stage);
    let lr = if stage == Stage::Joint { cfg.lr_joint } else { cfg.lr };
    let mut adam = Adam::new(net.store.len(), lr, cfg.weight_decay);
    let initial = evaluate_stage(net, data, stage, cfg, &mut rng)?;
    check_loss(stage, 0, initial.total)?;
    let mut records = vec![EpochRecord {
        stage,
        epoch: 0,
        terms: initial,
    }];
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=cfg.epochs[stage.number() - 1] {
        order.shuffle(&mut rng);
        let mut acc = LossTerms::default();
        for chunk in order.chunks(cfg.batch) {
            let batch = data.batch(net, chunk)?;
            let tape = Tape::new();
            let p = net.store.bind(&tape, |id| stage.trains(net, id));
            let (loss, terms) = stage_loss(&tape, net, &p, stage, &batch, cfg.beta, &mut rng)?;
            check_loss(stage, epoch, terms.total)?;
            let grads = tape.backward(loss)?;
            let updates: Vec<(ParamId, Tensor<T>)> = net
                .store
                .ids()
                .filter(|&id| stage.trains(net, id))
                .map(|id| (id, grads.wrt(&tape, p[id])))
                .collect();
            drop(grads);
            adam.step(&mut net.store, &updates)?;
            acc.accumulate(&terms, chunk.len() as f64 / data.len() as f64);
        }
        check_loss(stage, epoch, acc.total)?;
        records.push(EpochRecord {
            stage,
            epoch,
            terms: acc,
        });
        adam.lr *= cfg.lr_decay;
    }
    Ok(records)
}

/// Run stages `start..=3`, calling `after_stage` once each finishes (for
/// checkpointing). Starting later than stage 1 assumes `net` already holds
/// the parameters the earlier stages produced.
pub fn train_three_step<T: Scalar>(
    net: &mut Network<T>,
    data: &PairSet<T>,
    cfg: &TrainConfig,
    start: Stage,
    mut after_stage: impl FnMut(Stage, &Network<T>) -> Result<()>,
) -> Result<History> {
    let mut history = History::default();
    for stage in Stage::ALL.into_iter().filter(|&s| s >= start) {
        history.records.extend(train_stage(net, data, stage, cfg)?);
        after_stage(stage, net)?;
    }
    Ok(history)
}
