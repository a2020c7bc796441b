//! `neckriesz`: runs the experiment families and writes JSON and CSV reports.
//!
//! Exit status: 0 success, 1 a check ran and did not hold, 2 configuration
//! error, 3 invariant violation or other numerical failure, 4 non-convergence.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use neckriesz::model::{build_model, Side};
use neckriesz::{Error, Result};

use commands::{Ctx, Outcome};
use config::{RunConfig, WitnessSource};
use report::{config_hash, error_kind, Envelope, Writer, REPORT_SCHEMA_VERSION};

#[derive(Parser)]
#[command(name = "neckriesz", version, about = "Low-energy resolvent and Riesz transform experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags override the run config file, which overrides the defaults.
#[derive(Args)]
struct Common {
    /// Run config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Geometry file (TOML, or JSON by extension) [default: built-in model].
    #[arg(long, global = true)]
    geometry: Option<PathBuf>,
    /// Output directory [default: neckriesz-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed of the randomized suites [default: 2024].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Key-lemma stages [default: 2].
    #[arg(long, global = true)]
    q: Option<usize>,
    /// Exponents j of the lattice k = exp(-2^j) [default: 3,4,5,6,7].
    #[arg(long, global = true, value_delimiter = ',')]
    js: Option<Vec<u32>>,
    /// Exponents p [default: 1.25,1.5,2,3,4].
    #[arg(long = "p", global = true, value_delimiter = ',')]
    p_list: Option<Vec<f64>>,
    /// Minus-end truncation radii of the Riesz sweep [default: 2^8,2^24,2^40].
    #[arg(long = "r-max-sweep", global = true, value_delimiter = ',')]
    r_max_sweep: Option<Vec<f64>>,
    /// Compact grid spacing [default: from the geometry].
    #[arg(long, global = true)]
    ds: Option<f64>,
    /// Minus-end truncation radius [default: per command].
    #[arg(long = "r-max-minus", global = true)]
    r_max_minus: Option<f64>,
    /// Plus-end truncation radius [default: per command].
    #[arg(long = "r-max-plus", global = true)]
    r_max_plus: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Invariant suite for the Bessel functions and the heat identity.
    SpecfunCheck {
        /// Random samples for the inequalities.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Override a tolerance, NAME=VALUE (repeatable).
        #[arg(long = "tolerance")]
        tolerances: Vec<String>,
    },
    /// Build the model and write its axis grid.
    ModelBuild,
    /// Harmonic extension of boundary data into one end.
    Extend {
        #[arg(long, value_enum, default_value = "minus")]
        end: EndArg,
        /// Boundary mode m,j,l,c (repeatable) [default: m = 0..3 with c = 1/(1+m)].
        #[arg(long = "mode", value_parser = commands::extend::parse_mode)]
        modes: Vec<(u32, u32, usize, f64)>,
        /// Radii R 1.1^i, i < points.
        #[arg(long, default_value_t = 40)]
        points: usize,
    },
    /// Zero-energy solutions on the neck.
    Bvp,
    /// Approximate low-energy solutions for the cutoff source.
    Keylemma {
        /// Energy of the lower-bound check.
        #[arg(long, default_value_t = 1e-4)]
        lower_bound_k: f64,
    },
    /// Resolvent applied to the cutoff source, with oracle comparison.
    Resolvent,
    /// Boundedness table across p and R_max and the unboundedness witness.
    Riesz {
        /// Skip the unboundedness witness.
        #[arg(long)]
        no_witness: bool,
        #[arg(long, value_enum)]
        witness_source: Option<WitnessSource>,
        /// Truncation radii of the witness growth fit [default: 2^32,2^36,..,2^60].
        #[arg(long, value_delimiter = ',')]
        witness_radii: Option<Vec<f64>>,
        /// Low/high energy split point [default: 0.1].
        #[arg(long)]
        k0: Option<f64>,
    },
    /// Power-kernel boundedness lemmas.
    LpLemmas {
        #[arg(long, default_value_t = 100)]
        per_lemma: usize,
        /// Smallest relative distance from a boundary case.
        #[arg(long, default_value_t = 0.15)]
        min_gap: f64,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum EndArg {
    Minus,
    Plus,
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::SpecfunCheck { .. } => "specfun-check",
            Cmd::ModelBuild => "model-build",
            Cmd::Extend { .. } => "extend",
            Cmd::Bvp => "bvp",
            Cmd::Keylemma { .. } => "keylemma",
            Cmd::Resolvent => "resolvent",
            Cmd::Riesz { .. } => "riesz",
            Cmd::LpLemmas { .. } => "lp-lemmas",
        }
    }
}

fn resolve(common: &Common, cmd: &Cmd) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    if let Some(g) = &common.geometry {
        cfg.geometry = Some(g.clone());
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(q) = common.q {
        cfg.q = q;
    }
    if let Some(js) = &common.js {
        cfg.k_lattice.js = js.clone();
    }
    if let Some(p) = &common.p_list {
        cfg.p_list = p.clone();
    }
    if let Some(r) = &common.r_max_sweep {
        cfg.r_max_sweep = r.clone();
    }
    if common.ds.is_some() {
        cfg.grid.ds = common.ds;
    }
    if common.r_max_minus.is_some() {
        cfg.grid.r_max_minus = common.r_max_minus;
    }
    if common.r_max_plus.is_some() {
        cfg.grid.r_max_plus = common.r_max_plus;
    }
    if let Cmd::Riesz { no_witness, witness_source, witness_radii, k0 } = cmd {
        if *no_witness {
            cfg.riesz.witness = false;
        }
        if let Some(s) = witness_source {
            cfg.riesz.witness_source = *s;
        }
        if let Some(r) = witness_radii {
            cfg.riesz.witness_radii = r.clone();
        }
        if let Some(k) = k0 {
            cfg.riesz.k0 = *k;
        }
    }
    cfg.validate(cmd.name())?;
    Ok(cfg)
}

fn dispatch(cmd: &Cmd, ctx: &Ctx, out: &mut Writer) -> Result<Outcome> {
    match cmd {
        Cmd::SpecfunCheck { samples, tolerances } => {
            let tol = commands::specfun::parse_tolerances(tolerances)?;
            commands::specfun::run(ctx, out, *samples, &tol)
        }
        Cmd::ModelBuild => commands::model::run(ctx, out),
        Cmd::Extend { end, modes, points } => {
            let side = match end {
                EndArg::Minus => Side::Minus,
                EndArg::Plus => Side::Plus,
            };
            commands::extend::run(ctx, out, side, modes, *points)
        }
        Cmd::Bvp => commands::bvp::run(ctx, out),
        Cmd::Keylemma { lower_bound_k } => {
            if !(*lower_bound_k > 0.0 && *lower_bound_k < 0.01) {
                return Err(Error::Config("lower-bound-k must lie in (0, 0.01)".into()));
            }
            commands::keylemma::run(ctx, out, *lower_bound_k)
        }
        Cmd::Resolvent => commands::resolvent::run(ctx, out),
        Cmd::Riesz { .. } => commands::riesz::run(ctx, out),
        Cmd::LpLemmas { per_lemma, min_gap } => commands::lp::run(ctx, out, *per_lemma, *min_gap),
    }
}

fn report_error(cmd: &str, e: &Error) -> ExitCode {
    let code = e.exit_code();
    let body = serde_json::json!({ "error": { "command": cmd, "kind": error_kind(e), "code": code, "message": e.to_string() } });
    eprintln!("{body}");
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.cmd.name();
    let setup = || -> Result<(Ctx, Writer)> {
        let run = resolve(&cli.common, &cli.cmd)?;
        let geom = run.load_geometry()?;
        let model = build_model(&geom)?;
        let out = Writer::new(&run.output_dir)?;
        Ok((Ctx { run, geom, model }, out))
    };
    let (ctx, mut out) = match setup() {
        Ok(x) => x,
        Err(e) => return report_error(name, &e),
    };
    let hash = config_hash(&ctx.run, &ctx.geom);
    let envelope = |status: &'static str, warnings: &[String], result: &serde_json::Value| -> serde_json::Value {
        let env = Envelope {
            schema_version: REPORT_SCHEMA_VERSION,
            command: name,
            version: neckriesz::VERSION,
            cli_version: env!("CARGO_PKG_VERSION"),
            config_hash: hash.clone(),
            geometry_hash: ctx.geom.hash(),
            config: &ctx.run,
            geometry: &ctx.geom,
            status,
            warnings,
            result,
        };
        serde_json::to_value(&env).expect("report serialises")
    };
    let file = format!("{}.json", name.replace('-', "_"));
    let o = match dispatch(&cli.cmd, &ctx, &mut out) {
        Ok(o) => o,
        Err(e) => {
            let v = envelope("error", &[], &serde_json::json!({ "kind": error_kind(&e), "message": e.to_string() }));
            // the structured error on stderr is what matters if this fails too
            let _ = out.json(&file, &v);
            return report_error(name, &e);
        }
    };
    let status = if o.failures.is_empty() { "ok" } else { "check_failed" };
    if let Err(e) = out.json(&file, &envelope(status, &o.warnings, &o.result)) {
        return report_error(name, &e);
    }
    println!("{name} (config {})", &hash[..12]);
    for l in &o.summary {
        println!("  {l}");
    }
    for w in &o.warnings {
        eprintln!("warning: {w}");
    }
    for p in &out.written {
        println!("  wrote {}", p.display());
    }
    if o.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for f in &o.failures {
            eprintln!("check failed: {f}");
        }
        ExitCode::from(1)
    }
}
