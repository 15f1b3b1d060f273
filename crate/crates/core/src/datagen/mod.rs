//! Darcy-flow datasets: random three-region permeability fields and the
//! matching pressure solutions for a unit source.

mod dataset;
pub mod geometry;
pub mod noise;
pub mod solver;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use dataset::{read_dataset, write_dataset, SplitKind};
pub use geometry::{sample_geometry, Geometry, Kind, PERM_FLOOR};
pub use noise::{inject_noise, location_std, snr_db};
pub use solver::{darcy_solve, SolverOptions};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub kind: Kind,
    pub grid: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub eta: f64,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            kind: Kind::Line,
            grid: 16,
            n_train: 200,
            n_test: 50,
            eta: 0.0,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub index: usize,
    pub seed: u64,
    pub geometry: Geometry,
    /// Permeability `[n, n]`.
    pub a: Tensor<f64>,
    /// Pressure `[n, n]`, zero on the boundary.
    pub u: Tensor<f64>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub cfg: DataConfig,
    /// Training samples, noisy when `eta > 0`.
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub sigma_f: Tensor<f64>,
    pub sigma_u: Tensor<f64>,
    pub snr_input_db: f64,
    pub snr_output_db: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of sample `index`; independent of generation order.
pub fn derive_seed(master: u64, index: usize) -> u64 {
    splitmix64(splitmix64(master) ^ index as u64)
}

/// Geometry, rasterized permeability and solution for one seed.
pub fn generate_sample(kind: Kind, n: usize, index: usize, seed: u64, opts: &SolverOptions) -> Result<Sample> {
    let geometry = sample_geometry(kind, &mut ChaCha8Rng::seed_from_u64(seed));
    let a = geometry.rasterize(n);
    let g = Tensor::ones(&[n, n]);
    let u = darcy_solve(&a, &g, opts)
        .map_err(|e| Error::SampleSolve {
            index,
            source: Box::new(e),
        })?
        .u;
    Ok(Sample {
        index,
        seed,
        geometry,
        a,
        u,
    })
}

/// Generate the clean samples `0..count` using every available core.
pub fn generate_samples(cfg: &DataConfig, count: usize) -> Result<Vec<Sample>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(count.max(1));
    let per = count.div_ceil(workers.max(1));
    let chunks: Vec<Result<Vec<Sample>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (w * per..((w + 1) * per).min(count))
                        .map(|k| generate_sample(cfg.kind, cfg.grid, k, derive_seed(cfg.seed, k), &cfg.solver))
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("generation worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(count);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Full dataset: the first `n_train` samples form the training split and get
/// noise; the rest are held out clean.
pub fn generate(cfg: &DataConfig) -> Result<Dataset> {
    if cfg.grid < 4 {
        return Err(Error::Config(format!("grid must be >= 4, got {}", cfg.grid)));
    }
    if cfg.n_train < 2 {
        return Err(Error::Config("n_train must be at least 2".into()));
    }
    if !(cfg.eta >= 0.0) {
        return Err(Error::Config(format!("eta must be >= 0, got {}", cfg.eta)));
    }
    let mut samples = generate_samples(cfg, cfg.n_train + cfg.n_test)?;
    let test = samples.split_off(cfg.n_train);
    let mut train = samples;

    let clean_a: Vec<_> = train.iter().map(|s| s.a.clone()).collect();
    let clean_u: Vec<_> = train.iter().map(|s| s.u.clone()).collect();
    let mut noisy_a = clean_a.clone();
    let mut noisy_u = clean_u.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ 0x6e6f_6973_65));
    let sigma_f = inject_noise(&mut noisy_a, cfg.eta, &mut rng);
    let sigma_u = inject_noise(&mut noisy_u, cfg.eta, &mut rng);
    let snr_input_db = snr_db(&clean_a, &noisy_a);
    let snr_output_db = snr_db(&clean_u, &noisy_u);
    for ((s, a), u) in train.iter_mut().zip(noisy_a).zip(noisy_u) {
        s.a = a;
        s.u = u;
    }
    Ok(Dataset {
        cfg: cfg.clone(),
        train,
        test,
        sigma_f,
        sigma_u,
        snr_input_db,
        snr_output_db,
    })
}
