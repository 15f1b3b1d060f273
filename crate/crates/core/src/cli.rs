//! Command-line front end. Every subcommand writes its artifacts, plus the
//! resolved configuration as `config.txt`, under one output directory.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::{check_compatible, fingerprint, load_checkpoint, meta_map, read_meta, save_checkpoint};
use crate::config::RunConfig;
use crate::datagen::{generate, read_dataset, write_dataset, SplitKind};
use crate::error::{Error, Result};
use crate::eval::{pointwise_error, posterior_uncertainty, predict_forward, predict_inverse, MetricsReport};
use crate::network::Network;
use crate::tensor::{DType, Scalar, Tensor};
use crate::training::{train_three_step, History, PairSet, Stage};

#[derive(Parser, Debug)]
#[command(name = "ifno", version, about = "Invertible Fourier neural operator for Darcy flow")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Flat key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checkpoint directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Fwd,
    Inv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a Darcy dataset.
    GenData(Common),
    /// Run the three training stages.
    Train {
        #[command(flatten)]
        common: Common,
        /// Start at stage 2 or 3 from the checkpoint the previous stage left
        /// in the output directory (or `--checkpoint`).
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
        resume_from_stage: u8,
    },
    /// Relative L2 metrics of a checkpoint on a dataset split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Predict from one field stored as a tensor file.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        direction: Direction,
        #[arg(long)]
        input: PathBuf,
    },
    /// Posterior mean and std of the input field for one output field.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
    },
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(common) => gen_data(&common),
        Command::Train {
            common,
            resume_from_stage,
        } => train(&common, resume_from_stage as usize),
        Command::Eval { common, split } => eval(&common, split),
        Command::Predict {
            common,
            direction,
            input,
        } => predict(&common, direction, &input),
        Command::Sample {
            common,
            input,
            samples,
        } => sample(&common, &input, samples),
    }
}

fn resolve(common: &Common, need_config: bool) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None if need_config => return Err(Error::Config("--config is required".into())),
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.present.insert("seed".into());
    }
    for (flag, slot) in [
        (&common.out, &mut cfg.out),
        (&common.data, &mut cfg.data),
        (&common.checkpoint, &mut cfg.checkpoint),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    Ok(cfg)
}

fn required_path(p: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    p.clone()
        .ok_or_else(|| Error::Config(format!("no {name} directory (pass --{name} or set `{name}`)")))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = required_path(&cfg.out, "out")?;
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write(&out.join("config.txt"), &cfg.to_text())?;
    Ok(out)
}

/// One row per line, comma separated.
pub fn grid_csv<T: Scalar>(t: &Tensor<T>) -> String {
    let w = t.shape().get(1).copied().unwrap_or(1);
    let row_len = w * t.shape()[2..].iter().product::<usize>();
    let mut out = String::new();
    for row in t.data().chunks(row_len.max(1)) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn save_map<T: Scalar>(dir: &Path, name: &str, t: &Tensor<T>) -> Result<()> {
    t.save(dir.join(format!("{name}.tnsr")))?;
    write(&dir.join(format!("{name}.csv")), &grid_csv(t))
}

fn gen_data(common: &Common) -> Result<()> {
    let cfg = resolve(common, true)?;
    cfg.require(&["task", "grid", "n_train", "n_test"])?;
    let out = prepare_out(&cfg)?;
    let ds = generate(&cfg.data_config())?;
    write_dataset(&out, &ds)?;
    println!(
        "wrote {} train / {} test samples to {} (SNR input {:.2} dB, output {:.2} dB)",
        ds.train.len(),
        ds.test.len(),
        out.display(),
        ds.snr_input_db,
        ds.snr_output_db
    );
    Ok(())
}

fn field<T: Scalar>(a: &Tensor<f64>) -> Result<Tensor<T>> {
    let (h, w) = (a.shape()[0], a.shape()[1]);
    Ok(a.clone().reshape(&[h, w, 1])?.cast())
}

fn pairs<T: Scalar>(dir: &Path, grid: usize, split: SplitKind) -> Result<(Vec<usize>, PairSet<T>, crate::normalize::Normalizer)> {
    let ds = read_dataset(dir)?;
    if ds.grid != grid {
        return Err(Error::Config(format!(
            "dataset grid {} does not match config grid {grid}",
            ds.grid
        )));
    }
    let mut idx = Vec::new();
    let mut f = Vec::new();
    let mut u = Vec::new();
    for s in ds.split(split) {
        idx.push(s.index);
        f.push(field(&s.a)?);
        u.push(field(&s.u)?);
    }
    if idx.is_empty() {
        return Err(Error::Config(format!("dataset {} has an empty {split:?} split", dir.display())));
    }
    Ok((idx, PairSet { f, u }, ds.norm))
}

fn train(common: &Common, start: usize) -> Result<()> {
    let cfg = resolve(common, true)?;
    cfg.require(&["grid"])?;
    let net_cfg = cfg.network_config();
    net_cfg.check().map_err(|e| Error::Config(e.to_string()))?;
    let data_dir = required_path(&cfg.data, "data")?;
    let out = prepare_out(&cfg)?;
    match cfg.dtype {
        DType::F64 => train_typed::<f64>(&cfg, &data_dir, &out, start),
        DType::F32 => train_typed::<f32>(&cfg, &data_dir, &out, start),
    }
}

fn stage_dir(out: &Path, stage: Stage) -> PathBuf {
    match stage {
        Stage::Joint => out.join("checkpoint"),
        s => out.join(format!("checkpoint_stage{}", s.number())),
    }
}

fn train_typed<T: Scalar>(cfg: &RunConfig, data_dir: &Path, out: &Path, start: usize) -> Result<()> {
    let net_cfg = cfg.network_config();
    let (_, data, norm) = pairs::<T>(data_dir, cfg.grid, SplitKind::Train)?;
    let start = Stage::from_number(start).ok_or_else(|| Error::Config(format!("no stage {start}")))?;
    let mut prior = History::default();
    let mut net = if start == Stage::Operator {
        let mut net = Network::<T>::new(net_cfg.clone(), cfg.seed)?;
        net.norm = norm;
        net
    } else {
        let prev = Stage::from_number(start.number() - 1).unwrap();
        let dir = cfg.checkpoint.clone().unwrap_or_else(|| stage_dir(out, prev));
        check_compatible(&dir, &net_cfg, T::DTYPE)?;
        let csv = out.join("loss_history.csv");
        if csv.exists() {
            let text = fs::read_to_string(&csv).map_err(|e| Error::io(&csv, e))?;
            prior = History::from_csv(&text)?;
            prior.records.retain(|r| r.stage < start);
        }
        load_checkpoint::<T>(&dir)?
    };
    let tcfg = cfg.train_config();
    let history = train_three_step(&mut net, &data, &tcfg, start, |stage, net| {
        save_checkpoint(&stage_dir(out, stage), net)?;
        println!("stage {} done, checkpoint in {}", stage.number(), stage_dir(out, stage).display());
        Ok(())
    })?;
    prior.records.extend(history.records);
    write(&out.join("loss_history.csv"), &prior.to_csv())?;
    for stage in Stage::ALL.into_iter().filter(|&s| s >= start) {
        let recs = prior.stage(stage);
        if let (Some(first), Some(last)) = (recs.first(), recs.last()) {
            println!(
                "stage {}: loss {:.4e} -> {:.4e} over {} epochs",
                stage.number(),
                first.terms.total,
                last.terms.total,
                recs.len() - 1
            );
        }
    }
    Ok(())
}

fn checkpoint_for(cfg: &RunConfig, common: &Common) -> Result<(PathBuf, DType)> {
    let dir = required_path(&cfg.checkpoint, "checkpoint")?;
    // read_meta alone already rejects a meta.txt that disagrees with its own
    // fingerprint; a config, when given, must match it as well.
    let (_, dtype, _) = read_meta(&dir)?;
    if common.config.is_some() {
        check_compatible(&dir, &cfg.network_config(), cfg.dtype)?;
    }
    Ok((dir, dtype))
}

fn eval(common: &Common, split: SplitArg) -> Result<()> {
    let cfg = resolve(common, false)?;
    let (ckpt, dtype) = checkpoint_for(&cfg, common)?;
    let data_dir = required_path(&cfg.data, "data")?;
    let out = prepare_out(&cfg)?;
    let split = match split {
        SplitArg::Train => SplitKind::Train,
        SplitArg::Test => SplitKind::Test,
    };
    match dtype {
        DType::F64 => eval_typed::<f64>(&cfg, &ckpt, &data_dir, &out, split),
        DType::F32 => eval_typed::<f32>(&cfg, &ckpt, &data_dir, &out, split),
    }
}

fn eval_typed<T: Scalar>(cfg: &RunConfig, ckpt: &Path, data_dir: &Path, out: &Path, split: SplitKind) -> Result<()> {
    let net = load_checkpoint::<T>(ckpt)?;
    let (idx, data, _) = pairs::<T>(data_dir, net.cfg.grid, split)?;
    let fp = fingerprint(&meta_map(&net.cfg, T::DTYPE));
    let report = MetricsReport::evaluate(&net, idx, &data.f, &data.u, cfg.seed, fp)?;
    write(&out.join("metrics.csv"), &report.to_csv())?;
    write(&out.join("summary.txt"), &report.summary())?;
    let fwd = predict_forward(&net, &data.f[0])?;
    let inv = predict_inverse(&net, &data.u[0])?;
    save_map(out, "pointwise_fwd", &pointwise_error(&fwd, &data.u[0])?)?;
    save_map(out, "pointwise_inv", &pointwise_error(&inv, &data.f[0])?)?;
    print!("{}", report.summary());
    Ok(())
}

/// Load a field file as `[H, W, 1]`, remembering the stored shape.
fn load_field<T: Scalar>(path: &Path, grid: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let t = Tensor::<T>::load(path)?;
    let shape = t.shape().to_vec();
    let ok = match shape[..] {
        [h, w] | [h, w, 1] => h == grid && w == grid,
        _ => false,
    };
    if !ok {
        return Err(Error::Config(format!(
            "{}: expected a {grid}x{grid} field, got shape {shape:?}",
            path.display()
        )));
    }
    Ok((t.reshape(&[grid, grid, 1])?, shape))
}

fn predict(common: &Common, direction: Direction, input: &Path) -> Result<()> {
    let cfg = resolve(common, false)?;
    let (ckpt, dtype) = checkpoint_for(&cfg, common)?;
    let out = prepare_out(&cfg)?;
    match dtype {
        DType::F64 => predict_typed::<f64>(&ckpt, &out, direction, input),
        DType::F32 => predict_typed::<f32>(&ckpt, &out, direction, input),
    }
}

fn predict_typed<T: Scalar>(ckpt: &Path, out: &Path, direction: Direction, input: &Path) -> Result<()> {
    let net = load_checkpoint::<T>(ckpt)?;
    let (x, shape) = load_field::<T>(input, net.cfg.grid)?;
    let y = match direction {
        Direction::Fwd => predict_forward(&net, &x)?,
        Direction::Inv => predict_inverse(&net, &x)?,
    };
    let y = y.reshape(&shape)?;
    let path = out.join("prediction.tnsr");
    y.save(&path)?;
    write(&out.join("prediction.csv"), &grid_csv(&y))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn sample(common: &Common, input: &Path, samples: Option<usize>) -> Result<()> {
    let mut cfg = resolve(common, false)?;
    if let Some(s) = samples {
        cfg.samples = s;
    }
    let (ckpt, dtype) = checkpoint_for(&cfg, common)?;
    let out = prepare_out(&cfg)?;
    match dtype {
        DType::F64 => sample_typed::<f64>(&cfg, &ckpt, &out, input),
        DType::F32 => sample_typed::<f32>(&cfg, &ckpt, &out, input),
    }
}

fn sample_typed<T: Scalar>(cfg: &RunConfig, ckpt: &Path, out: &Path, input: &Path) -> Result<()> {
    let net = load_checkpoint::<T>(ckpt)?;
    let (u, shape) = load_field::<T>(input, net.cfg.grid)?;
    let map = posterior_uncertainty(&net, &u, cfg.samples, cfg.seed).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Config(m),
        e => e,
    })?;
    save_map(out, "mean", &map.mean.reshape(&shape)?)?;
    save_map(out, "std", &map.std.reshape(&shape)?)?;
    println!("{} posterior samples written to {}", map.samples, out.display());
    Ok(())
}
