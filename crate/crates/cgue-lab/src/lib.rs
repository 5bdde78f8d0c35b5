//! Numerical laboratory for constrained Gaussian unitary ensembles.
//!
//! The crate builds constraint sets over the space of Hermitian matrices,
//! samples constrained/deformed/banded/embedded ensembles, evaluates the
//! constraining function by independent routes, solves the large-N level
//! density, and measures spectral fluctuations (nearest-neighbor spacings,
//! spacing ratios, number variance, spectral rigidity) against GUE and
//! Poisson references.

pub mod basis;
pub mod cli;
pub mod config;
pub mod constraining;
pub mod density;
pub mod egue;
pub mod ensemble;
pub mod error;
pub mod formats;
pub mod haar;
pub mod hermitian;
pub mod rng;
pub mod stats;
pub mod svg;

pub use error::{Error, Result};
pub use hermitian::{eigendecompose, trace_inner_product, EigenDecomposition, HermitianMatrix};

/// Crate version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
