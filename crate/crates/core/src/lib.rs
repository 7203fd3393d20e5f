//! Nonparametric Bayesian drift estimation for one-dimensional periodic
//! diffusions with unit diffusion coefficient.

pub mod augmentation;
pub mod basis;
pub mod config;
pub mod conjugate;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod gof;
pub mod hierarchical;
pub mod likelihood;
pub mod path;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
