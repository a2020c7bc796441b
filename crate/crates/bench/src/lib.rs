//! Shared fixtures for the benchmarks in `benches/`.

use neckriesz::model::{build_model, AxisGrid, GeometryConfig, GridSpec, ModelManifold};

/// The default model and its geometry.
pub fn default_model() -> (ModelManifold, GeometryConfig) {
    let cfg = GeometryConfig::default();
    let m = build_model(&cfg).expect("default geometry builds");
    (m, cfg)
}

/// Default grid truncated at the given end radii.
pub fn spec(cfg: &GeometryConfig, minus: f64, plus: f64) -> GridSpec {
    GridSpec::from_config(cfg).with_r_max(minus, plus)
}

pub fn grid(m: &ModelManifold, cfg: &GeometryConfig, minus: f64, plus: f64) -> AxisGrid {
    AxisGrid::new(m, spec(cfg, minus, plus)).expect("grid builds")
}
