//! Geometry configuration (TOML or JSON).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cutoff::CutoffSet;
use super::CrossSection;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum CrossSectionConfig {
    Point,
    Circle {
        #[serde(default = "two_pi")]
        length: f64,
        #[serde(default = "default_modes")]
        modes: usize,
    },
    Explicit {
        dim: usize,
        volume: f64,
        eigenvalues: Vec<f64>,
    },
}

fn two_pi() -> f64 {
    2.0 * std::f64::consts::PI
}

fn default_modes() -> usize {
    8
}

impl CrossSectionConfig {
    pub fn build(&self) -> CrossSection {
        match self {
            CrossSectionConfig::Point => CrossSection::point(),
            CrossSectionConfig::Circle { length, modes } => CrossSection::circle(*length, *modes),
            CrossSectionConfig::Explicit { dim, volume, eigenvalues } => CrossSection {
                dim: *dim,
                volume: *volume,
                eigenvalues: eigenvalues.clone(),
                kind: super::CrossSectionKind::General,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spectra {
    pub minus: CrossSectionConfig,
    pub plus: CrossSectionConfig,
}

impl Default for Spectra {
    fn default() -> Self {
        // R^2 x circle glued to R^3 x point: both ends have dimension 3
        Self {
            minus: CrossSectionConfig::Circle { length: two_pi(), modes: default_modes() },
            plus: CrossSectionConfig::Point,
        }
    }
}

/// Optional explicit cross-section volumes; must agree with the spectra.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Volumes {
    pub minus: Option<f64>,
    pub plus: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Node spacing on the compact part |s| <= R.
    #[serde(default = "d_ds")]
    pub ds: f64,
    /// Largest spacing in log r on the ends.
    #[serde(default = "d_dt")]
    pub dt_max: f64,
    /// Geometric growth factor of the end spacing.
    #[serde(default = "d_growth")]
    pub growth: f64,
}

fn d_ds() -> f64 {
    0.02
}
fn d_dt() -> f64 {
    0.05
}
fn d_growth() -> f64 {
    1.05
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { ds: d_ds(), dt_max: d_dt(), growth: d_growth() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Basepoints {
    pub minus: f64,
    pub plus: f64,
}

impl Default for Basepoints {
    fn default() -> Self {
        Self { minus: 1.5, plus: 1.5 }
    }
}

/// Hex SHA-256 of the compact JSON serialisation of `v`.
pub fn content_hash<T: Serialize + ?Sized>(v: &T) -> String {
    let canon = serde_json::to_string(v).expect("value serialises");
    let d = Sha256::digest(canon.as_bytes());
    d.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default = "d_schema")]
    pub schema_version: u32,
    #[serde(default = "d_nplus")]
    pub n_plus: usize,
    #[serde(default)]
    pub spectra: Spectra,
    #[serde(default)]
    pub volumes: Volumes,
    /// Gluing radius: K = {|s| <= R}.
    #[serde(rename = "R", default = "d_r")]
    pub r_glue: f64,
    #[serde(rename = "S_minus", default = "d_one")]
    pub s_minus: f64,
    #[serde(rename = "S_plus", default = "d_one")]
    pub s_plus: f64,
    /// Outer truncation radius (both ends unless overridden).
    #[serde(rename = "R_max", default = "d_rmax")]
    pub r_max: f64,
    #[serde(rename = "R_max_minus", default, skip_serializing_if = "Option::is_none")]
    pub r_max_minus: Option<f64>,
    #[serde(rename = "R_max_plus", default, skip_serializing_if = "Option::is_none")]
    pub r_max_plus: Option<f64>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub cutoffs: CutoffSet,
    #[serde(default)]
    pub basepoints: Basepoints,
}

fn d_schema() -> u32 {
    SCHEMA_VERSION
}
fn d_nplus() -> usize {
    3
}
fn d_r() -> f64 {
    5.0
}
fn d_one() -> f64 {
    1.0
}
fn d_rmax() -> f64 {
    1.0e4
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            n_plus: 3,
            spectra: Spectra::default(),
            volumes: Volumes::default(),
            r_glue: d_r(),
            s_minus: 1.0,
            s_plus: 1.0,
            r_max: d_rmax(),
            r_max_minus: None,
            r_max_plus: None,
            grid: GridConfig::default(),
            cutoffs: CutoffSet::default(),
            basepoints: Basepoints::default(),
        }
    }
}

impl GeometryConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `.json` as JSON and anything else as TOML.
    pub fn from_path(p: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        if p.extension().and_then(|e| e.to_str()) == Some("json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the canonical JSON form, used to tag reports.
    pub fn hash(&self) -> String {
        content_hash(self)
    }

    pub fn r_max_minus(&self) -> f64 {
        self.r_max_minus.unwrap_or(self.r_max)
    }

    pub fn r_max_plus(&self) -> f64 {
        self.r_max_plus.unwrap_or(self.r_max)
    }

    pub fn cross_sections(&self) -> Result<(CrossSection, CrossSection)> {
        let m = self.spectra.minus.build();
        let p = self.spectra.plus.build();
        for (cs, v, name) in [(&m, self.volumes.minus, "minus"), (&p, self.volumes.plus, "plus")] {
            if let Some(v) = v {
                if (v - cs.volume).abs() > 1e-12 * cs.volume.max(1.0) {
                    return Err(Error::Config(format!(
                        "volumes.{name} = {v} disagrees with the {name} spectrum's volume {}",
                        cs.volume
                    )));
                }
            }
        }
        Ok((m, p))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.s_minus >= 1.0 && self.s_plus >= 1.0) {
            return Err(Error::Config("S_minus and S_plus must be at least 1".into()));
        }
        if !(self.r_glue > self.s_minus.max(self.s_plus)) {
            return Err(Error::Config("R must exceed both junction radii".into()));
        }
        if !(self.r_max_minus() >= self.r_glue && self.r_max_plus() >= self.r_glue) {
            return Err(Error::Config("R_max must be at least R".into()));
        }
        let g = &self.grid;
        if !(g.ds > 0.0 && g.ds < 0.5 && g.dt_max > 0.0 && g.dt_max < 1.0 && g.growth >= 1.0 && g.growth < 2.0) {
            return Err(Error::Config(format!("grid parameters out of range: {g:?}")));
        }
        Ok(())
    }
}
