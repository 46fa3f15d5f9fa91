//! Entropic optimal transport couplings computed by Sinkhorn scaling and
//! analyzed as multifractal measures on the unit square.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod generators;
pub mod io;
pub mod matrix;
pub mod measure;
pub mod multifractal;
pub mod numeric;
pub mod ot;
pub mod report;

pub use error::{Error, Result};
pub use matrix::Matrix;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
