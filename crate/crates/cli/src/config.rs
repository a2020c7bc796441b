//! Run configuration: a versioned TOML file, overridden by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use neckriesz::model::{GeometryConfig, GridSpec};
use neckriesz::{Error, Result};

pub const RUN_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_schema")]
    pub schema_version: u32,
    /// Geometry file (TOML, or JSON by extension).  The default model when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<PathBuf>,
    /// If set, the only subcommand this file may drive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    #[serde(default)]
    pub k_lattice: KLattice,
    #[serde(default)]
    pub grid: GridOverrides,
    #[serde(default = "d_p_list")]
    pub p_list: Vec<f64>,
    /// Truncation radii of the minus end for the Riesz sweep.
    #[serde(rename = "R_max_sweep", default = "d_sweep")]
    pub r_max_sweep: Vec<f64>,
    /// Not part of the experiment, so neither hashed nor reported.
    #[serde(default = "d_out", skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(default = "d_seed")]
    pub seed: u64,
    /// Number of key-lemma stages.
    #[serde(default = "d_q")]
    pub q: usize,
    #[serde(default)]
    pub riesz: RieszOptions,
}

/// k values enter as k = exp(-2^j) for j in `js`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KLattice {
    #[serde(default = "d_js")]
    pub js: Vec<u32>,
    /// Lattice of the ilg k expansion of R(k) v (needs smaller k than `js`).
    #[serde(default = "d_expansion_js")]
    pub expansion_js: Vec<u32>,
    /// Terms c_0..c_n kept in that expansion.
    #[serde(default = "d_expansion_terms")]
    pub expansion_terms: usize,
    /// Energies of the resolvent oracle comparison.
    #[serde(default = "d_oracle")]
    pub oracle_ks: Vec<f64>,
    /// Candidates for the invertibility threshold k0, searched from the top.
    #[serde(default = "d_k0s")]
    pub k0_candidates: Vec<f64>,
}

impl Default for KLattice {
    fn default() -> Self {
        Self { js: d_js(), expansion_js: d_expansion_js(), expansion_terms: d_expansion_terms(), oracle_ks: d_oracle(), k0_candidates: d_k0s() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ds: Option<f64>,
    #[serde(rename = "R_max_minus", default, skip_serializing_if = "Option::is_none")]
    pub r_max_minus: Option<f64>,
    #[serde(rename = "R_max_plus", default, skip_serializing_if = "Option::is_none")]
    pub r_max_plus: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessSource {
    /// -Delta phi_- (beta = 1).
    Cutoff,
    /// Delta of a bump inside the neck (beta = 0).
    NeckBump,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RieszOptions {
    /// Low/high energy split point.
    #[serde(default = "d_k0")]
    pub k0: f64,
    /// Compact spacing for the sweep kernels (norms agree with 0.02).
    #[serde(default = "d_riesz_ds")]
    pub ds: f64,
    #[serde(rename = "R_max_plus", default = "d_riesz_plus")]
    pub r_max_plus: f64,
    /// Largest last-three log-log slope still read as bounded.
    #[serde(default = "d_slope")]
    pub slope_threshold: f64,
    #[serde(default = "d_iter")]
    pub max_iter: usize,
    #[serde(default = "d_true")]
    pub witness: bool,
    #[serde(default = "d_source")]
    pub witness_source: WitnessSource,
    /// Truncation radii of the witness growth fit.
    #[serde(default = "d_witness_radii")]
    pub witness_radii: Vec<f64>,
}

impl Default for RieszOptions {
    fn default() -> Self {
        Self {
            k0: d_k0(),
            ds: d_riesz_ds(),
            r_max_plus: d_riesz_plus(),
            slope_threshold: d_slope(),
            max_iter: d_iter(),
            witness: true,
            witness_source: d_source(),
            witness_radii: d_witness_radii(),
        }
    }
}

fn d_schema() -> u32 {
    RUN_SCHEMA_VERSION
}
fn d_p_list() -> Vec<f64> {
    vec![1.25, 1.5, 2.0, 3.0, 4.0]
}
fn d_sweep() -> Vec<f64> {
    [8, 24, 40].iter().map(|&j| 2f64.powi(j)).collect()
}
fn d_out() -> PathBuf {
    PathBuf::from("neckriesz-out")
}
fn d_seed() -> u64 {
    2024
}
fn d_q() -> usize {
    2
}
fn d_js() -> Vec<u32> {
    vec![3, 4, 5, 6, 7]
}
fn d_expansion_js() -> Vec<u32> {
    vec![5, 6, 7, 8, 9]
}
fn d_expansion_terms() -> usize {
    3
}
fn d_oracle() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}
fn d_k0s() -> Vec<f64> {
    vec![0.5, 0.25, 0.1, 0.05, 0.02, 0.01]
}
fn d_k0() -> f64 {
    0.1
}
fn d_riesz_ds() -> f64 {
    0.05
}
fn d_riesz_plus() -> f64 {
    64.0
}
fn d_slope() -> f64 {
    0.05
}
fn d_iter() -> usize {
    200
}
fn d_true() -> bool {
    true
}
fn d_source() -> WitnessSource {
    WitnessSource::Cutoff
}
fn d_witness_radii() -> Vec<f64> {
    (32..=60).step_by(4).map(|j| 2f64.powi(j)).collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: RUN_SCHEMA_VERSION,
            geometry: None,
            experiment: None,
            k_lattice: KLattice::default(),
            grid: GridOverrides::default(),
            p_list: d_p_list(),
            r_max_sweep: d_sweep(),
            output_dir: d_out(),
            seed: d_seed(),
            q: d_q(),
            riesz: RieszOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn from_path(p: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("run config {}: {e}", p.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("run config {}: {e}", p.display())))?;
        // relative paths are relative to the config file
        let base = p.parent().unwrap_or(Path::new("."));
        if let Some(g) = &cfg.geometry {
            if g.is_relative() {
                cfg.geometry = Some(base.join(g));
            }
        }
        Ok(cfg)
    }

    /// Parses and validates the geometry before any compute.
    pub fn load_geometry(&self) -> Result<GeometryConfig> {
        let g = match &self.geometry {
            None => GeometryConfig::default(),
            Some(p) => {
                if !p.is_file() {
                    return Err(Error::Config(format!("geometry file {} does not exist", p.display())));
                }
                GeometryConfig::from_path(p).map_err(|e| match e {
                    Error::Io(m) => Error::Config(format!("geometry file {m}")),
                    e => e,
                })?
            }
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self, command: &str) -> Result<()> {
        if self.schema_version != RUN_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "run config schema_version {} unsupported (expected {RUN_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let Some(e) = &self.experiment {
            if e != command {
                return Err(Error::Config(format!("run config is for experiment {e:?}, not {command:?}")));
            }
        }
        if self.q < 1 {
            return Err(Error::Config("q must be at least 1".into()));
        }
        if self.k_lattice.js.len() < 3 {
            return Err(Error::Config("k_lattice.js needs at least three entries".into()));
        }
        let kl = &self.k_lattice;
        // exp(-2^10) underflows
        if kl.js.iter().chain(&kl.expansion_js).any(|&j| !(1..=9).contains(&j)) {
            return Err(Error::Config("k_lattice exponents j must lie in 1..=9".into()));
        }
        if kl.expansion_terms < 1 || kl.expansion_js.len() < kl.expansion_terms + 2 {
            return Err(Error::Config("k_lattice.expansion_js needs at least expansion_terms + 2 entries".into()));
        }
        if self.k_lattice.oracle_ks.iter().chain(&self.k_lattice.k0_candidates).any(|&k| !(k > 0.0 && k < 1.0)) {
            return Err(Error::Config("k values must lie in (0, 1)".into()));
        }
        if self.p_list.iter().any(|&p| !(p > 1.0 && p.is_finite())) {
            return Err(Error::Config("p_list entries must exceed 1".into()));
        }
        if self.r_max_sweep.len() < 3 || self.r_max_sweep.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("R_max_sweep needs at least three increasing radii".into()));
        }
        let r = &self.riesz;
        if !(r.k0 > 0.0 && r.k0 <= 0.5) {
            return Err(Error::Config("riesz.k0 must lie in (0, 0.5]".into()));
        }
        if !(r.ds > 0.0) || !(r.slope_threshold > 0.0) {
            return Err(Error::Config("riesz.ds and riesz.slope_threshold must be positive".into()));
        }
        if r.witness_radii.len() < 3 || r.witness_radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("riesz.witness_radii needs at least three increasing radii".into()));
        }
        if let Some(ds) = self.grid.ds {
            if !(ds > 0.0 && ds <= 0.5) {
                return Err(Error::Config("grid.ds must lie in (0, 0.5]".into()));
            }
        }
        Ok(())
    }

    /// Grid of the geometry with the given default truncation, then the overrides.
    pub fn grid_spec(&self, geom: &GeometryConfig, minus: f64, plus: f64) -> GridSpec {
        let mut sp = GridSpec::from_config(geom)
            .with_r_max(self.grid.r_max_minus.unwrap_or(minus), self.grid.r_max_plus.unwrap_or(plus));
        if let Some(ds) = self.grid.ds {
            sp.ds = ds;
        }
        sp
    }
}
