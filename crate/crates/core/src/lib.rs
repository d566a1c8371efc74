//! Topology optimization of steady heat conduction by the relaxed variational approach.

pub mod app;
pub mod config;
pub mod error;
pub mod fem;
pub mod functionals;
pub mod levelset;
pub mod material;
pub mod mesh;
pub mod optimizer;
pub mod output;
pub mod regularization;

pub use error::{Error, Result};
