//! Numerics for the low-energy resolvent and the Riesz transform on a
//! rotationally symmetric connected sum of two product ends.

pub mod bvp;
pub mod error;
pub mod fit;
pub mod harmonic_ext;
pub mod keylemma;
pub mod linalg;
pub mod lp_estimator;
pub mod model;
pub mod parametrix;
pub mod ode;
pub mod product_kernels;
pub mod quad;
pub mod riesz;
pub mod specfun;

pub use error::{Error, Result};

/// Crate version, embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
