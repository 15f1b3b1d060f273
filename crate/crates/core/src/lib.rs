pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod fft;
pub mod losses;
pub mod model;
pub mod network;
pub mod normalize;
pub mod params;
pub mod spectral;
pub mod tensor;
pub mod training;
pub mod vae;

pub use autodiff::{Tape, Var};
pub use error::{Error, Result};
pub use tensor::{DType, Scalar, Tensor};
