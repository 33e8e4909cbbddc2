//! Bayesian interaction selection with kernel-based posterior summaries.

pub mod cli;
pub mod data;
pub mod error;
pub mod features;
pub mod io;
pub mod kernels;
pub mod likelihood;
pub mod linalg;
pub mod sampler;
pub mod select;
pub mod simulate;
pub mod skim;
pub mod trick;

pub use error::{Error, Result};
