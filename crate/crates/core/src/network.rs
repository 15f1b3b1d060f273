//! The operator and the VAE sharing one parameter store.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Operator, OperatorConfig};
use crate::normalize::Normalizer;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Scalar;
use crate::vae::{Vae, VaeConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub operator: OperatorConfig,
    pub grid: usize,
    pub z_dim: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            operator: OperatorConfig::default(),
            grid: 16,
            z_dim: 64,
        }
    }
}

impl NetworkConfig {
    pub fn check(&self) -> Result<()> {
        let m = self.operator.modes;
        if !self.grid.is_power_of_two() || self.grid < 4 {
            return Err(Error::InvalidArgument(format!(
                "grid must be a power of two >= 4, got {}",
                self.grid
            )));
        }
        if 2 * m > self.grid {
            return Err(Error::ModeBound {
                modes: m,
                height: self.grid,
                width: self.grid,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Network<T> {
    pub cfg: NetworkConfig,
    pub store: ParamStore<T>,
    pub op: Operator,
    pub vae: Vae,
    /// Parameters with index `>= vae_start` belong to the VAE.
    pub vae_start: usize,
    pub norm: Normalizer,
}

impl<T: Scalar> Network<T> {
    /// Freshly initialized parameters; the same seed always gives the same
    /// network.
    pub fn new(cfg: NetworkConfig, seed: u64) -> Result<Self> {
        cfg.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let op = Operator::new(&mut store, cfg.operator.clone(), &mut rng)?;
        let vae_start = store.len();
        let vae = Vae::new(
            &mut store,
            VaeConfig {
                grid: cfg.grid,
                c_in: cfg.operator.c_in,
                z_dim: cfg.z_dim,
            },
            &mut rng,
        )?;
        let norm = Normalizer::identity(cfg.operator.c_in, cfg.operator.c_out);
        Ok(Network {
            cfg,
            store,
            op,
            vae,
            vae_start,
            norm,
        })
    }

    pub fn is_vae(&self, id: ParamId) -> bool {
        id.index() >= self.vae_start
    }

    pub fn operator_scalars(&self) -> usize {
        self.store
            .iter()
            .filter(|(id, _, _)| !self.is_vae(*id))
            .map(|(_, _, v)| v.data().len())
            .sum()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            cfg: self.cfg.clone(),
            store: self.store.cast(),
            op: self.op.clone(),
            vae: self.vae.clone(),
            vae_start: self.vae_start,
            norm: self.norm.clone(),
        }
    }
}
