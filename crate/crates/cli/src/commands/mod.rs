pub mod bvp;
pub mod extend;
pub mod keylemma;
pub mod lp;
pub mod model;
pub mod resolvent;
pub mod riesz;
pub mod specfun;

use serde::Serialize;

use neckriesz::model::{GeometryConfig, ModelManifold};
use neckriesz::{Error, Result};

use crate::config::RunConfig;

pub struct Ctx {
    pub run: RunConfig,
    pub geom: GeometryConfig,
    pub model: ModelManifold,
}

/// What a command hands back to the driver.
#[derive(Default)]
pub struct Outcome {
    pub result: serde_json::Value,
    pub warnings: Vec<String>,
    /// Checks that ran and did not hold; any entry makes the exit status 1.
    pub failures: Vec<String>,
    /// Lines for stdout.
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn new<T: Serialize>(result: &T) -> Result<Self> {
        Ok(Self { result: serde_json::to_value(result).map_err(|e| Error::Io(e.to_string()))?, ..Self::default() })
    }
}

pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
}
