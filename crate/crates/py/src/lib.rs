//! Python bindings. Fields cross the boundary as nested lists (`list[list[float]]`,
//! row-major); anything indexable that way, numpy arrays included, is accepted.

use std::path::PathBuf;

use ifno::checkpoint::{load_checkpoint, save_checkpoint};
use ifno::datagen::{self, Kind, SolverOptions};
use ifno::eval;
use ifno::model::OperatorConfig;
use ifno::network::{Network, NetworkConfig};
use ifno::Tensor;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

type Grid = Vec<Vec<f64>>;

fn to_py(e: ifno::Error) -> PyErr {
    match (&e, e.exit_code()) {
        (ifno::Error::Io { .. }, _) => PyIOError::new_err(e.to_string()),
        (_, 1 | 2) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_tensor(rows: &Grid) -> PyResult<Tensor<f64>> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if h == 0 || w == 0 || rows.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("expected a non-empty rectangular 2-D grid"));
    }
    Tensor::new(vec![h, w], rows.concat()).map_err(to_py)
}

fn to_grid(t: &Tensor<f64>) -> Grid {
    let w = t.shape()[1];
    t.data().chunks(w).map(<[f64]>::to_vec).collect()
}

fn field(rows: &Grid, grid: usize) -> PyResult<Tensor<f64>> {
    let t = to_tensor(rows)?;
    if t.shape() != [grid, grid] {
        return Err(PyValueError::new_err(format!(
            "expected a {grid}x{grid} field, got {:?}",
            t.shape()
        )));
    }
    t.reshape(&[grid, grid, 1]).map_err(to_py)
}

fn flat(t: Tensor<f64>) -> Grid {
    let (h, w) = (t.shape()[0], t.shape()[1]);
    to_grid(&t.reshape(&[h, w]).expect("single-channel field"))
}

fn kind(name: &str) -> PyResult<Kind> {
    name.parse().map_err(to_py)
}

/// Solve `-div(a grad u) = g` with zero boundary values. `g` defaults to 1.
/// Returns `(u, iterations, residual)`.
#[pyfunction]
#[pyo3(signature = (a, g=None, tol=1e-8))]
fn darcy_solve(a: Grid, g: Option<Grid>, tol: f64) -> PyResult<(Grid, usize, f64)> {
    let a = to_tensor(&a)?;
    let g = match g {
        Some(g) => to_tensor(&g)?,
        None => Tensor::ones(a.shape()),
    };
    let opts = SolverOptions {
        tol,
        ..SolverOptions::default()
    };
    let sol = datagen::darcy_solve(&a, &g, &opts).map_err(to_py)?;
    Ok((to_grid(&sol.u), sol.iterations, sol.residual))
}

/// One `(a, u)` pair of task `dline` or `dcurv`; the same arguments always
/// give the same pair.
#[pyfunction]
#[pyo3(signature = (task, n, index=0, seed=0))]
fn generate_sample(task: &str, n: usize, index: usize, seed: u64) -> PyResult<(Grid, Grid)> {
    let s = datagen::generate_sample(kind(task)?, n, index, datagen::derive_seed(seed, index), &SolverOptions::default())
        .map_err(to_py)?;
    Ok((to_grid(&s.a), to_grid(&s.u)))
}

/// `||pred - target|| / ||target||`.
#[pyfunction]
fn rel_l2(pred: Grid, target: Grid) -> PyResult<f64> {
    let as_batch = |g: &Grid| -> PyResult<Tensor<f64>> {
        let t = to_tensor(g)?;
        let (h, w) = (t.shape()[0], t.shape()[1]);
        t.reshape(&[h, w, 1, 1]).map_err(to_py)
    };
    let e = eval::per_sample_rel_l2(&as_batch(&pred)?, &as_batch(&target)?).map_err(to_py)?;
    Ok(e[0])
}

/// Run the command-line tool in-process, e.g. `cli(["gen-data", "--config", "c.txt"])`.
/// Returns the exit code.
#[pyfunction]
fn cli(args: Vec<String>) -> i32 {
    ifno::cli::main_with_args(std::iter::once("ifno".to_string()).chain(args))
}

/// Forward and inverse model in double precision.
#[pyclass(module = "ifno_py")]
struct Model {
    net: Network<f64>,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (grid=16, width=32, modes=8, blocks=3, tau=1.0, hidden=128, z_dim=64, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        grid: usize,
        width: usize,
        modes: usize,
        blocks: usize,
        tau: f64,
        hidden: usize,
        z_dim: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = NetworkConfig {
            operator: OperatorConfig {
                width,
                modes,
                blocks,
                tau,
                hidden,
                ..OperatorConfig::default()
            },
            grid,
            z_dim,
        };
        Ok(Model {
            net: Network::new(cfg, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model {
            net: load_checkpoint(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&path, &self.net).map_err(to_py)
    }

    #[getter]
    fn grid(&self) -> usize {
        self.net.cfg.grid
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.net.store.iter().map(|(_, _, v)| v.data().len()).sum()
    }

    /// Pressure field predicted from a permeability field.
    fn predict_forward(&self, a: Grid) -> PyResult<Grid> {
        let x = field(&a, self.net.cfg.grid)?;
        eval::predict_forward(&self.net, &x).map(flat).map_err(to_py)
    }

    /// Permeability field predicted from a pressure field.
    fn predict_inverse(&self, u: Grid) -> PyResult<Grid> {
        let x = field(&u, self.net.cfg.grid)?;
        eval::predict_inverse(&self.net, &x).map(flat).map_err(to_py)
    }

    /// Posterior mean and std of the permeability for a pressure field.
    #[pyo3(signature = (u, samples=100, seed=0))]
    fn sample_inverse(&self, u: Grid, samples: usize, seed: u64) -> PyResult<(Grid, Grid)> {
        let x = field(&u, self.net.cfg.grid)?;
        let map = eval::posterior_uncertainty(&self.net, &x, samples, seed).map_err(to_py)?;
        Ok((flat(map.mean), flat(map.std)))
    }

    fn __repr__(&self) -> String {
        let c = &self.net.cfg;
        format!(
            "Model(grid={}, width={}, modes={}, blocks={}, z_dim={})",
            c.grid, c.operator.width, c.operator.modes, c.operator.blocks, c.z_dim
        )
    }
}

#[pymodule]
fn ifno_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(darcy_solve, m)?)?;
    m.add_function(wrap_pyfunction!(generate_sample, m)?)?;
    m.add_function(wrap_pyfunction!(rel_l2, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
