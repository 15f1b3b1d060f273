//! Flat `key=value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys and repeated keys
//! are errors. Keys not present keep their defaults; [`RunConfig::require`]
//! checks the ones a subcommand cannot default.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datagen::{DataConfig, Kind, SolverOptions};
use crate::error::{Error, Result};
use crate::model::OperatorConfig;
use crate::network::NetworkConfig;
use crate::tensor::DType;
use crate::training::TrainConfig;

pub const KEYS: [&str; 28] = [
    "task",
    "grid",
    "n_train",
    "n_test",
    "eta",
    "d",
    "modes",
    "blocks",
    "tau",
    "z_dim",
    "hidden",
    "beta",
    "lr",
    "lr_joint",
    "lr_decay",
    "weight_decay",
    "batch",
    "epochs1",
    "epochs2",
    "epochs3",
    "seed",
    "dtype",
    "tol",
    "jacobi",
    "data",
    "out",
    "checkpoint",
    "samples",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: Kind,
    pub grid: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub eta: f64,
    pub d: usize,
    pub modes: usize,
    pub blocks: usize,
    pub tau: f64,
    pub z_dim: usize,
    pub hidden: usize,
    pub beta: f64,
    pub lr: f64,
    pub lr_joint: f64,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: [usize; 3],
    pub seed: u64,
    pub dtype: DType,
    pub tol: f64,
    pub jacobi: bool,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub samples: usize,
    /// Keys set explicitly (by the file or an override).
    pub present: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let data = DataConfig::default();
        let op = OperatorConfig::default();
        let net = NetworkConfig::default();
        let train = TrainConfig::default();
        RunConfig {
            task: data.kind,
            grid: data.grid,
            n_train: data.n_train,
            n_test: data.n_test,
            eta: data.eta,
            d: op.width,
            modes: op.modes,
            blocks: op.blocks,
            tau: op.tau,
            z_dim: net.z_dim,
            hidden: op.hidden,
            beta: train.beta,
            lr: train.lr,
            lr_joint: train.lr_joint,
            lr_decay: train.lr_decay,
            weight_decay: train.weight_decay,
            batch: train.batch,
            epochs: train.epochs,
            seed: data.seed,
            dtype: DType::F64,
            tol: data.solver.tol,
            jacobi: data.solver.jacobi,
            data: None,
            out: None,
            checkpoint: None,
            samples: crate::eval::DEFAULT_SAMPLES,
            present: BTreeSet::new(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("bad value {raw:?} for key `{key}`")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad value {raw:?} for key `{key}` (expected true or false)"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
            let key = key.trim();
            if cfg.present.contains(key) {
                return Err(Error::Config(format!("line {}: key `{key}` given twice", n + 1)));
            }
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        match key {
            "task" => self.task = raw.parse()?,
            "grid" => self.grid = parse_num(key, raw)?,
            "n_train" => self.n_train = parse_num(key, raw)?,
            "n_test" => self.n_test = parse_num(key, raw)?,
            "eta" => self.eta = parse_num(key, raw)?,
            "d" => self.d = parse_num(key, raw)?,
            "modes" => self.modes = parse_num(key, raw)?,
            "blocks" => self.blocks = parse_num(key, raw)?,
            "tau" => self.tau = parse_num(key, raw)?,
            "z_dim" => self.z_dim = parse_num(key, raw)?,
            "hidden" => self.hidden = parse_num(key, raw)?,
            "beta" => self.beta = parse_num(key, raw)?,
            "lr" => self.lr = parse_num(key, raw)?,
            "lr_joint" => self.lr_joint = parse_num(key, raw)?,
            "lr_decay" => self.lr_decay = parse_num(key, raw)?,
            "weight_decay" => self.weight_decay = parse_num(key, raw)?,
            "batch" => self.batch = parse_num(key, raw)?,
            "epochs1" => self.epochs[0] = parse_num(key, raw)?,
            "epochs2" => self.epochs[1] = parse_num(key, raw)?,
            "epochs3" => self.epochs[2] = parse_num(key, raw)?,
            "seed" => self.seed = parse_num(key, raw)?,
            "dtype" => {
                self.dtype = DType::parse(raw)
                    .ok_or_else(|| Error::Config(format!("bad value {raw:?} for key `dtype` (expected f32 or f64)")))?
            }
            "tol" => self.tol = parse_num(key, raw)?,
            "jacobi" => self.jacobi = parse_bool(key, raw)?,
            "data" => self.data = Some(PathBuf::from(raw)),
            "out" => self.out = Some(PathBuf::from(raw)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(raw)),
            "samples" => self.samples = parse_num(key, raw)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        self.present.insert(key.to_string());
        Ok(())
    }

    /// Fail naming the first of `keys` that was not set explicitly.
    pub fn require(&self, keys: &[&str]) -> Result<()> {
        match keys.iter().find(|k| !self.present.contains(**k)) {
            Some(k) => Err(Error::Config(format!("missing required key `{k}`"))),
            None => Ok(()),
        }
    }

    /// Every key with its resolved value, in [`KEYS`] order. Unset paths are
    /// omitted. Parsing the result gives back an equal configuration (apart
    /// from `present`).
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut out = String::new();
        for key in KEYS {
            let value = match key {
                "task" => Some(self.task.to_string()),
                "grid" => Some(self.grid.to_string()),
                "n_train" => Some(self.n_train.to_string()),
                "n_test" => Some(self.n_test.to_string()),
                "eta" => Some(self.eta.to_string()),
                "d" => Some(self.d.to_string()),
                "modes" => Some(self.modes.to_string()),
                "blocks" => Some(self.blocks.to_string()),
                "tau" => Some(self.tau.to_string()),
                "z_dim" => Some(self.z_dim.to_string()),
                "hidden" => Some(self.hidden.to_string()),
                "beta" => Some(self.beta.to_string()),
                "lr" => Some(self.lr.to_string()),
                "lr_joint" => Some(self.lr_joint.to_string()),
                "lr_decay" => Some(self.lr_decay.to_string()),
                "weight_decay" => Some(self.weight_decay.to_string()),
                "batch" => Some(self.batch.to_string()),
                "epochs1" => Some(self.epochs[0].to_string()),
                "epochs2" => Some(self.epochs[1].to_string()),
                "epochs3" => Some(self.epochs[2].to_string()),
                "seed" => Some(self.seed.to_string()),
                "dtype" => Some(self.dtype.name().to_string()),
                "tol" => Some(self.tol.to_string()),
                "jacobi" => Some(self.jacobi.to_string()),
                "data" => path(&self.data),
                "out" => path(&self.out),
                "checkpoint" => path(&self.checkpoint),
                "samples" => Some(self.samples.to_string()),
                _ => unreachable!(),
            };
            if let Some(v) = value {
                out.push_str(&format!("{key}={v}\n"));
            }
        }
        out
    }

    pub fn data_config(&self) -> DataConfig {
        DataConfig {
            kind: self.task,
            grid: self.grid,
            n_train: self.n_train,
            n_test: self.n_test,
            eta: self.eta,
            seed: self.seed,
            solver: SolverOptions {
                tol: self.tol,
                jacobi: self.jacobi,
                ..SolverOptions::default()
            },
        }
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            operator: OperatorConfig {
                c_in: 1,
                c_out: 1,
                width: self.d,
                modes: self.modes,
                blocks: self.blocks,
                tau: self.tau,
                hidden: self.hidden,
            },
            grid: self.grid,
            z_dim: self.z_dim,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            lr_joint: self.lr_joint,
            lr_decay: self.lr_decay,
            weight_decay: self.weight_decay,
            batch: self.batch,
            epochs: self.epochs,
            beta: self.beta,
            seed: self.seed,
        }
    }
}
