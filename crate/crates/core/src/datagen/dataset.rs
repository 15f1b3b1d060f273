//! On-disk dataset layout:
//!
//! ```text
//! dir/a_00000.tnsr, dir/u_00000.tnsr, ...
//! dir/dataset.txt            one line per sample plus a summary line
//! dir/stats/sigma_f.tnsr     location-wise std of the clean training inputs
//! dir/stats/sigma_u.tnsr
//! dir/stats/{f,u}_{mean,std}.tnsr   per-channel normalization statistics
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, Kind, PERM_FLOOR};
use crate::error::{Error, Result};
use crate::normalize::Normalizer;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Test,
}

impl SplitKind {
    fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Test => "test",
        }
    }
}

fn manifest_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Config(format!("{}: {}", path.display(), reason.into()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Write `ds` under `dir` (created if missing).
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    let stats = dir.join("stats");
    fs::create_dir_all(&stats).map_err(|e| Error::io(&stats, e))?;
    let mut manifest = String::new();
    let splits = [(SplitKind::Train, &ds.train), (SplitKind::Test, &ds.test)];
    for (split, samples) in splits {
        for s in samples {
            s.a.save(dir.join(format!("a_{:05}.tnsr", s.index)))?;
            s.u.save(dir.join(format!("u_{:05}.tnsr", s.index)))?;
            manifest.push_str(&format!(
                "index={} seed={} kind={} eta={} split={}\n",
                s.index,
                s.seed,
                ds.cfg.kind,
                ds.cfg.eta,
                split.name()
            ));
        }
    }
    manifest.push_str(&format!(
        "snr_input_db={} snr_output_db={} n_train={} n_test={} grid={} perm_floor={} master_seed={} tol={} jacobi={}\n",
        ds.snr_input_db,
        ds.snr_output_db,
        ds.cfg.n_train,
        ds.cfg.n_test,
        ds.cfg.grid,
        PERM_FLOOR,
        ds.cfg.seed,
        ds.cfg.solver.tol,
        ds.cfg.solver.jacobi
    ));
    write_file(&dir.join("dataset.txt"), &manifest)?;

    ds.sigma_f.save(stats.join("sigma_f.tnsr"))?;
    ds.sigma_u.save(stats.join("sigma_u.tnsr"))?;
    let n = ds.cfg.grid;
    let fs: Vec<_> = ds.train.iter().map(|s| s.a.clone().reshape(&[n, n, 1]).unwrap()).collect();
    let us: Vec<_> = ds.train.iter().map(|s| s.u.clone().reshape(&[n, n, 1]).unwrap()).collect();
    let norm = Normalizer::fit(&fs, &us);
    for (name, v) in [
        ("f_mean", &norm.f_mean),
        ("f_std", &norm.f_std),
        ("u_mean", &norm.u_mean),
        ("u_std", &norm.u_std),
    ] {
        Tensor::new(vec![v.len()], v.clone())?.save(stats.join(format!("{name}.tnsr")))?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct StoredSample {
    pub index: usize,
    pub seed: u64,
    pub split: SplitKind,
    pub a: Tensor<f64>,
    pub u: Tensor<f64>,
}

#[derive(Clone, Debug)]
pub struct StoredDataset {
    pub dir: PathBuf,
    pub kind: Kind,
    pub grid: usize,
    pub eta: f64,
    pub samples: Vec<StoredSample>,
    pub summary: BTreeMap<String, String>,
    pub norm: Normalizer,
}

impl StoredDataset {
    pub fn split(&self, split: SplitKind) -> impl Iterator<Item = &StoredSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }
}

fn parse_line(line: &str) -> BTreeMap<String, String> {
    line.split_whitespace()
        .filter_map(|tok| tok.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn field<'a>(path: &Path, map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| manifest_err(path, format!("missing {key}")))
}

fn parse<T: std::str::FromStr>(path: &Path, map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = field(path, map, key)?;
    raw.parse()
        .map_err(|_| manifest_err(path, format!("bad value {raw:?} for {key}")))
}

fn load_vec(path: &Path) -> Result<Vec<f64>> {
    Ok(Tensor::<f64>::load(path)?.into_data())
}

pub fn read_dataset(dir: &Path) -> Result<StoredDataset> {
    let path = dir.join("dataset.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut samples = Vec::new();
    let mut summary = None;
    let mut kind = None;
    let mut eta = 0.0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let map = parse_line(line);
        if !map.contains_key("index") {
            summary = Some(map);
            continue;
        }
        let index: usize = parse(&path, &map, "index")?;
        let split = match field(&path, &map, "split")? {
            "train" => SplitKind::Train,
            "test" => SplitKind::Test,
            other => return Err(manifest_err(&path, format!("unknown split {other:?}"))),
        };
        kind = Some(field(&path, &map, "kind")?.parse::<Kind>()?);
        eta = parse(&path, &map, "eta")?;
        let a = Tensor::<f64>::load(dir.join(format!("a_{index:05}.tnsr")))?;
        let u = Tensor::<f64>::load(dir.join(format!("u_{index:05}.tnsr")))?;
        samples.push(StoredSample {
            index,
            seed: parse(&path, &map, "seed")?,
            split,
            a,
            u,
        });
    }
    let summary = summary.ok_or_else(|| manifest_err(&path, "missing summary line"))?;
    let grid: usize = parse(&path, &summary, "grid")?;
    let kind = kind.ok_or_else(|| manifest_err(&path, "no samples"))?;
    if let Some(s) = samples.iter().find(|s| s.a.shape() != [grid, grid] || s.u.shape() != [grid, grid]) {
        return Err(manifest_err(&path, format!("sample {} is not {grid}x{grid}", s.index)));
    }
    let stats = dir.join("stats");
    let norm = Normalizer {
        f_mean: load_vec(&stats.join("f_mean.tnsr"))?,
        f_std: load_vec(&stats.join("f_std.tnsr"))?,
        u_mean: load_vec(&stats.join("u_mean.tnsr"))?,
        u_std: load_vec(&stats.join("u_std.tnsr"))?,
    };
    Ok(StoredDataset {
        dir: dir.to_path_buf(),
        kind,
        grid,
        eta,
        samples,
        summary,
        norm,
    })
}
