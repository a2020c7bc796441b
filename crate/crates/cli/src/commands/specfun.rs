//! Invariant suite for the special functions.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use neckriesz::specfun::{
    bessel_i, bessel_i_prime, bessel_k, bessel_k_integral, bessel_k_prime, derivative_envelope, heat_resolvent_identity_check,
};
use neckriesz::{Error, Result};

use super::{logspace, Ctx, Outcome};
use crate::report::Writer;

pub const INVARIANTS: [&str; 5] = ["bessel-k-quadrature", "exp-inequality", "derivative-envelope", "wronskian", "heat-identity"];

/// Defaults per invariant.  The inequalities allow a few ulps of slack.
pub fn default_tolerance(name: &str) -> f64 {
    match name {
        "bessel-k-quadrature" => 1e-10,
        "exp-inequality" | "derivative-envelope" => 1e-13,
        "wronskian" => 1e-11,
        "heat-identity" => 1e-6,
        _ => f64::NAN,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Case {
    pub nu: f64,
    pub x: f64,
    /// Second argument where the invariant has one (y for the exponential
    /// inequality, r for the heat identity).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    /// The checked quantity; the invariant holds when it is at most the tolerance.
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantResult {
    pub name: String,
    pub tolerance: f64,
    pub samples: usize,
    pub violations: usize,
    pub worst: f64,
    pub worst_cases: Vec<Case>,
    pub holds: bool,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    invariant: &'a str,
    nu: f64,
    x: f64,
    y: Option<f64>,
    value: f64,
    tolerance: f64,
}

fn summarise(name: &str, tol: f64, mut cases: Vec<Case>) -> InvariantResult {
    let samples = cases.len();
    let violations = cases.iter().filter(|c| !(c.value <= tol)).count();
    cases.sort_by(|a, b| b.value.partial_cmp(&a.value).unwrap_or(std::cmp::Ordering::Equal));
    cases.truncate(5);
    let worst = cases.first().map_or(f64::NAN, |c| c.value);
    InvariantResult { name: name.into(), tolerance: tol, samples, violations, worst, worst_cases: cases, holds: violations == 0 }
}

pub fn parse_tolerances(items: &[String]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for it in items {
        let (k, v) = it.split_once('=').ok_or_else(|| Error::Config(format!("tolerance {it:?} is not NAME=VALUE")))?;
        if !INVARIANTS.contains(&k) {
            return Err(Error::Config(format!("unknown invariant {k:?}; known: {}", INVARIANTS.join(", "))));
        }
        let v: f64 = v.parse().map_err(|_| Error::Config(format!("tolerance for {k} is not a number: {v:?}")))?;
        out.insert(k.to_string(), v);
    }
    Ok(out)
}

pub fn run(ctx: &Ctx, out: &mut Writer, samples: usize, overrides: &BTreeMap<String, f64>) -> Result<Outcome> {
    let tol = |n: &str| overrides.get(n).copied().unwrap_or_else(|| default_tolerance(n));
    let mut results = Vec::new();

    let mut quad = Vec::new();
    for nu in 0..=10 {
        for x in logspace(1e-3, 50.0, 25) {
            let a = bessel_k(nu as f64, x)?;
            let b = bessel_k_integral(nu as f64, x)?;
            quad.push(Case { nu: nu as f64, x, y: None, value: (a - b).abs() / b.abs() });
        }
    }
    results.push(summarise("bessel-k-quadrature", tol("bessel-k-quadrature"), quad));

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.run.seed);
    let (mut ex, mut der) = (Vec::with_capacity(samples), Vec::with_capacity(samples));
    for _ in 0..samples {
        let nu = rng.gen_range(0..=10) as f64;
        let x = 10f64.powf(rng.gen_range(-3.0f64..50f64.log10()));
        let y = x + rng.gen_range(0.0..20.0);
        // K_nu(y) <= e^{x - y} K_nu(x) for y >= x
        let bound = (x - y).exp() * bessel_k(nu, x)?;
        ex.push(Case { nu, x, y: Some(y), value: bessel_k(nu, y)? / bound - 1.0 });
        // |x K_nu'(x)| <= envelope
        let env = derivative_envelope(nu as u32, x)?;
        der.push(Case { nu, x, y: None, value: (x * bessel_k_prime(nu, x)?).abs() / env - 1.0 });
    }
    results.push(summarise("exp-inequality", tol("exp-inequality"), ex));
    results.push(summarise("derivative-envelope", tol("derivative-envelope"), der));

    // I K' - I' K = -1/x
    let mut wr = Vec::new();
    for nu in 0..=10 {
        for x in logspace(1e-2, 30.0, 20) {
            let (nu, w) = (nu as f64, x);
            let v = bessel_i(nu, w)? * bessel_k_prime(nu, w)? - bessel_i_prime(nu, w)? * bessel_k(nu, w)?;
            wr.push(Case { nu, x, y: None, value: (w * v + 1.0).abs() });
        }
    }
    results.push(summarise("wronskian", tol("wronskian"), wr));

    let mut heat = Vec::new();
    for a in [2.0, 3.0, 4.0, 6.0] {
        for k in logspace(0.1, 10.0, 10) {
            for r in logspace(0.1, 10.0, 10) {
                heat.push(Case { nu: a, x: k, y: Some(r), value: heat_resolvent_identity_check(a, k, r)? });
            }
        }
    }
    results.push(summarise("heat-identity", tol("heat-identity"), heat));

    let rows: Vec<CsvRow> = results
        .iter()
        .flat_map(|r| {
            r.worst_cases.iter().map(|c| CsvRow { invariant: &r.name, nu: c.nu, x: c.x, y: c.y, value: c.value, tolerance: r.tolerance })
        })
        .collect();
    out.csv("specfun_worst.csv", &rows)?;

    let mut o = Outcome::new(&serde_json::json!({ "samples": samples, "invariants": results }))?;
    for r in &results {
        o.summary.push(format!(
            "{:<20} {} worst {:.2e} (tolerance {:.1e}, {} of {} violate)",
            r.name,
            if r.holds { "ok  " } else { "FAIL" },
            r.worst,
            r.tolerance,
            r.violations,
            r.samples
        ));
        if !r.holds {
            let c = &r.worst_cases[0];
            o.failures.push(format!(
                "invariant {} violated: {:.3e} > {:.1e} at nu = {}, x = {:.6e}",
                r.name, c.value, r.tolerance, c.nu, c.x
            ));
        }
    }
    Ok(o)
}
