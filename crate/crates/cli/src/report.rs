//! Report envelope and writers.  Reports carry no timestamps, so identical
//! inputs give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use neckriesz::model::{content_hash, GeometryConfig};
use neckriesz::{Error, Result};

use crate::config::RunConfig;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub version: &'a str,
    pub cli_version: &'a str,
    /// Hash of the run config and the geometry together.
    pub config_hash: String,
    pub geometry_hash: String,
    pub config: &'a RunConfig,
    pub geometry: &'a GeometryConfig,
    pub status: &'a str,
    pub warnings: &'a [String],
    pub result: &'a T,
}

pub fn config_hash(run: &RunConfig, geom: &GeometryConfig) -> String {
    content_hash(&(run, geom))
}

pub struct Writer {
    pub dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        self.put(name, &bytes)
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        self.written.push(p);
        Ok(())
    }
}

/// Short machine-readable name of an error variant.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Overflow(_) => "overflow",
        Error::NonConvergence(_) => "non_convergence",
        Error::Config(_) => "config",
        Error::InvalidDimension(_) => "invalid_dimension",
        Error::NonAscendingSpectrum(_) => "non_ascending_spectrum",
        Error::Singular(_) => "singular",
        Error::Truncation(_) => "truncation",
        Error::EnvelopeViolation(_) => "envelope_violation",
        Error::ConstantChannelPresent => "constant_channel_present",
        Error::BetaNonPositive(_) => "beta_non_positive",
        Error::FitUnstable(_) => "fit_unstable",
        Error::ComplementFailed(_) => "complement_failed",
        Error::Unsupported(_) => "unsupported",
        Error::BoundaryCase(_) => "boundary_case",
        Error::Invariant(_) => "invariant",
        Error::Io(_) => "io",
    }
}
