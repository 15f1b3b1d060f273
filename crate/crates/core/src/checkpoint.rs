//! Checkpoint directories: one tensor file per parameter, `manifest.txt`,
//! `meta.txt` and the normalization statistics.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::OperatorConfig;
use crate::network::{Network, NetworkConfig};
use crate::normalize::Normalizer;
use crate::tensor::{DType, Scalar, Tensor};

const NORM_FILES: [&str; 4] = ["f_mean", "f_std", "u_mean", "u_std"];

/// Architecture keys describing a network, in sorted order.
pub fn meta_map(cfg: &NetworkConfig, dtype: DType) -> BTreeMap<String, String> {
    let op = &cfg.operator;
    [
        ("K", op.blocks.to_string()),
        ("c_in", op.c_in.to_string()),
        ("c_out", op.c_out.to_string()),
        ("d", op.width.to_string()),
        ("dtype", dtype.name().to_string()),
        ("grid", cfg.grid.to_string()),
        ("hidden", op.hidden.to_string()),
        ("m", op.modes.to_string()),
        ("tau", op.tau.to_string()),
        ("z_dim", cfg.z_dim.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// 64-bit FNV-1a over the sorted `key=value` lines.
pub fn fingerprint(meta: &BTreeMap<String, String>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (k, v) in meta {
        for b in format!("{k}={v}\n").bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn config_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Config(format!("{}: {}", path.display(), reason.into()))
}

fn parse_kv(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.trim().split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

pub fn save_checkpoint<T: Scalar>(dir: &Path, net: &Network<T>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for (_, name, value) in net.store.iter() {
        let rel = format!("{name}.tnsr");
        let stored = if value.is_complex() {
            value.clone().complex_to_pairs()
        } else {
            value.clone()
        };
        stored.save(dir.join(&rel))?;
        let shape: Vec<String> = stored.shape().iter().map(|d| d.to_string()).collect();
        let kind = if value.is_complex() { " complex=1" } else { "" };
        manifest.push_str(&format!(
            "{name}={rel} shape={} dtype={}{kind}\n",
            shape.join("x"),
            T::DTYPE.name()
        ));
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;

    let meta = meta_map(&net.cfg, T::DTYPE);
    let mut text: String = meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    text.push_str(&format!("fingerprint={:016x}\n", fingerprint(&meta)));
    let path = dir.join("meta.txt");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    let norm = &net.norm;
    for (name, v) in NORM_FILES.iter().zip([&norm.f_mean, &norm.f_std, &norm.u_mean, &norm.u_std]) {
        Tensor::new(vec![v.len()], v.clone())?.save(dir.join(format!("norm_{name}.tnsr")))?;
    }
    Ok(())
}

/// Architecture and fingerprint recorded in a checkpoint.
pub fn read_meta(dir: &Path) -> Result<(NetworkConfig, DType, u64)> {
    let path = dir.join("meta.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let map = parse_kv(&text);
    let get = |k: &str| -> Result<&str> {
        map.get(k)
            .map(String::as_str)
            .ok_or_else(|| config_err(&path, format!("missing {k}")))
    };
    let num = |k: &str| -> Result<usize> {
        let raw = get(k)?;
        raw.parse()
            .map_err(|_| config_err(&path, format!("bad value {raw:?} for {k}")))
    };
    let tau_raw = get("tau")?;
    let cfg = NetworkConfig {
        operator: OperatorConfig {
            c_in: num("c_in")?,
            c_out: num("c_out")?,
            width: num("d")?,
            modes: num("m")?,
            blocks: num("K")?,
            tau: tau_raw
                .parse()
                .map_err(|_| config_err(&path, format!("bad tau {tau_raw:?}")))?,
            hidden: num("hidden")?,
        },
        grid: num("grid")?,
        z_dim: num("z_dim")?,
    };
    let dtype_raw = get("dtype")?;
    let dtype = DType::parse(dtype_raw).ok_or_else(|| config_err(&path, format!("bad dtype {dtype_raw:?}")))?;
    let fp_raw = get("fingerprint")?;
    let fp = u64::from_str_radix(fp_raw, 16).map_err(|_| config_err(&path, format!("bad fingerprint {fp_raw:?}")))?;
    let expected = fingerprint(&meta_map(&cfg, dtype));
    if fp != expected {
        return Err(config_err(&path, "fingerprint does not match the recorded keys"));
    }
    Ok((cfg, dtype, fp))
}

/// Load a checkpoint into a network of scalar type `T` (values are converted
/// if the stored width differs).
pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<Network<T>> {
    let (cfg, _, _) = read_meta(dir)?;
    let mut net = Network::<T>::new(cfg, 0)?;
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut seen = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let first = line.split_whitespace().next().unwrap_or("");
        let (name, rel) = first
            .split_once('=')
            .ok_or_else(|| config_err(&path, format!("bad line {line:?}")))?;
        let id = net
            .store
            .find(name)
            .ok_or_else(|| config_err(&path, format!("unknown parameter {name}")))?;
        let loaded = Tensor::<T>::load(dir.join(rel))?;
        let expect = net.store.get(id);
        let value = if expect.is_complex() {
            loaded.pairs_to_complex()?
        } else {
            loaded
        };
        if value.shape() != expect.shape() {
            return Err(config_err(
                &path,
                format!("{name} has shape {:?}, expected {:?}", value.shape(), expect.shape()),
            ));
        }
        *net.store.get_mut(id) = value;
        seen += 1;
    }
    if seen != net.store.len() {
        return Err(config_err(
            &path,
            format!("lists {seen} parameters, the architecture has {}", net.store.len()),
        ));
    }
    let load = |name: &str| -> Result<Vec<f64>> {
        Ok(Tensor::<f64>::load(dir.join(format!("norm_{name}.tnsr")))?.into_data())
    };
    net.norm = Normalizer {
        f_mean: load("f_mean")?,
        f_std: load("f_std")?,
        u_mean: load("u_mean")?,
        u_std: load("u_std")?,
    };
    Ok(net)
}

/// Fail with [`Error::Fingerprint`] unless the checkpoint was written for
/// `cfg` at `dtype`.
pub fn check_compatible(dir: &Path, cfg: &NetworkConfig, dtype: DType) -> Result<()> {
    let (_, _, stored) = read_meta(dir)?;
    let expected = fingerprint(&meta_map(cfg, dtype));
    if stored != expected {
        return Err(Error::Fingerprint {
            checkpoint: stored,
            config: expected,
        });
    }
    Ok(())
}
