//! Physics-informed neural networks for the 1-D nonlinear Schrodinger and
//! viscous Burgers equations, with Gaussian-process smoothing of noisy
//! boundary data.

pub mod diffnet;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod optim;
pub mod pdes;
pub mod sgp;
pub mod training;

pub use error::{Error, Result};
