pub mod benchmark;
pub mod cbn;
pub mod copula;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod gaussian_bn;
pub mod graph;
pub mod marginals;
pub mod model_file;
pub mod normal;
pub mod optimize;
pub mod quadrature;
pub mod structure;

pub use error::{Error, Result};
