//! Boundedness table of the low-energy Riesz kernel across p and R_max,
//! and the growth of the unboundedness witness.

use std::thread;

use serde::Serialize;

use neckriesz::keylemma::build_with_setup;
use neckriesz::model::{AxisGrid, GeometryConfig, ModeChannel, ModelManifold, Side};
use neckriesz::parametrix::ParametrixSetup;
use neckriesz::riesz::{
    high_energy_multiplier, low_energy_kernel, lp_boundedness_report, schur_exponent, unboundedness_witness, BoundednessReport,
    KQuad, KernelKind, RieszSplit, RieszTrend, UnboundednessWitness, WitnessConfig,
};
use neckriesz::{Error, Result};

use super::{Ctx, Outcome};
use crate::report::Writer;
use crate::config::{RunConfig, WitnessSource};

#[derive(Serialize)]
struct Prediction {
    p: f64,
    predicted: RieszTrend,
    observed: RieszTrend,
    matches: bool,
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum Unboundedness {
    Computed { source: WitnessSource, witness: Box<UnboundednessWitness> },
    Inapplicable { source: Option<WitnessSource>, reason: String },
}

/// Bounded on L^p exactly for p <= 2.
fn predicted(p: f64) -> RieszTrend {
    if p <= 2.0 {
        RieszTrend::BoundedTrend
    } else {
        RieszTrend::DivergentTrend
    }
}

fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

fn witness(run: &RunConfig, geom: &GeometryConfig, m: &ModelManifold) -> Result<Unboundedness> {
    let opts = &run.riesz;
    if !opts.witness {
        return Ok(Unboundedness::Inapplicable { source: None, reason: "witness disabled".into() });
    }
    let r_top = *opts.witness_radii.last().unwrap();
    let mut sp = run.grid_spec(&geom, r_top, 200.0);
    sp.r_max_minus = sp.r_max_minus.max(r_top);
    sp.ds = opts.ds;
    let mut setup = ParametrixSetup::new(m, sp, run.q)?;
    if opts.witness_source == WitnessSource::NeckBump {
        // Delta of a bump inside the neck: the zero-energy solution decays on
        // both ends, so beta vanishes
        let psi: Vec<f64> = setup.key.grid.s.iter().map(|&s| bump(s / 2.0)).collect();
        let v = setup.key.laplacian(&psi)?;
        setup.approx[0] = build_with_setup(setup.key.clone(), &v, run.q)?;
    }
    let beta = setup.approx[0].beta;
    let scale = setup.approx[0].stages[0].phi.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
    if beta.abs() <= 1e-10 * scale {
        return Ok(Unboundedness::Inapplicable {
            source: Some(opts.witness_source),
            reason: format!("beta = {beta:.3e} vanishes: the key lemma lower bound gives no growth"),
        });
    }
    let cfg = WitnessConfig { max_iter: opts.max_iter, ..WitnessConfig::default() };
    let ps: Vec<f64> = run.p_list.iter().copied().filter(|&p| p > 2.0).collect();
    match unboundedness_witness(&setup, &ps, &opts.witness_radii, &cfg) {
        Ok(w) => Ok(Unboundedness::Computed { source: opts.witness_source, witness: Box::new(w) }),
        Err(Error::BetaNonPositive(b)) => Ok(Unboundedness::Inapplicable {
            source: Some(opts.witness_source),
            reason: format!("beta = {b:.3e} is not positive"),
        }),
        Err(e) => Err(e),
    }
}

pub fn run(ctx: &Ctx, out: &mut Writer) -> Result<Outcome> {
    let (run, geom, m) = (&ctx.run, &ctx.geom, &ctx.model);
    let opts = run.riesz.clone();
    let mut ps = run.p_list.clone();
    ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ps.dedup();
    let rule = KQuad::default();
    let specs: Vec<_> = run
        .r_max_sweep
        .iter()
        .map(|&r| {
            let mut sp = run.grid_spec(geom, r, opts.r_max_plus);
            sp.r_max_minus = r;
            sp.ds = opts.ds;
            sp
        })
        .collect();
    // kernels of the sweep and the witness are independent
    let (kernels, unb) = thread::scope(|sc| {
        let hs: Vec<_> = specs
            .iter()
            .map(|sp| sc.spawn(move || low_energy_kernel(&AxisGrid::new(m, *sp)?, opts.k0, KernelKind::Gradient, &rule)))
            .collect();
        let w = sc.spawn(|| witness(run, geom, m));
        let ks: Result<Vec<_>> = hs.into_iter().map(|h| h.join().expect("kernel worker panicked")).collect();
        (ks, w.join().expect("witness worker panicked"))
    });
    let kernels = kernels?;
    let unb = unb?;
    let table: BoundednessReport = lp_boundedness_report(&kernels, &ps, opts.slope_threshold, opts.max_iter)?;
    out.csv("riesz_norms.csv", &table.rows)?;

    let g = AxisGrid::new(m, run.grid_spec(geom, 32.0, 32.0))?;
    let schur = schur_exponent(m, &g, 1.0, &[1.5, 2.0, 4.0], &run.k_lattice.js)?;
    let split = RieszSplit::new(opts.k0)?;
    let chans = [
        ModeChannel::zero(Side::Minus),
        ModeChannel { end: Side::Minus, m: 1, j: 0, l: 0 },
        ModeChannel { end: Side::Minus, m: 3, j: 0, l: 0 },
        ModeChannel { end: Side::Plus, m: 1, j: 0, l: 0 },
        ModeChannel { end: Side::Plus, m: 2, j: 0, l: 0 },
    ];
    let high = high_energy_multiplier(m, &g, &chans, &split)?;

    let preds: Vec<Prediction> = table
        .verdicts
        .iter()
        .map(|v| Prediction { p: v.p, predicted: predicted(v.p), observed: v.trend, matches: v.trend == predicted(v.p) })
        .collect();
    let mut o = Outcome::new(&serde_json::json!({
        "k0": opts.k0,
        "boundedness": table,
        "predictions": preds,
        "schur": schur,
        "high_energy": high,
        "unboundedness": unb,
    }))?;
    for (v, pr) in table.verdicts.iter().zip(&preds) {
        o.summary.push(format!(
            "p = {:<5} {:<15} (slope {:.3}, log-corrected {:.3}){}",
            v.p,
            v.trend.as_str(),
            v.exponent,
            v.log_corrected_exponent,
            if pr.matches { "" } else { "  <- does not match the prediction" }
        ));
        if !pr.matches {
            o.failures.push(format!("p = {}: observed {}, predicted {}", v.p, v.trend.as_str(), pr.predicted.as_str()));
        }
    }
    for e in &schur {
        o.summary.push(format!("Schur exponent s = {}: {:.3} (expected {:.3})", e.s, e.exponent, e.expected));
    }
    o.summary.push(format!("high-energy multiplier bound {:.3}", high.uniform_bound));
    match &unb {
        Unboundedness::Computed { witness: w, .. } => {
            for gr in &w.growth {
                o.summary.push(format!("witness p = {}: growth exponent {:.3} (expected {:.3})", gr.p, gr.exponent, gr.expected));
            }
        }
        Unboundedness::Inapplicable { reason, .. } => o.summary.push(format!("unboundedness witness inapplicable: {reason}")),
    }
    Ok(o)
}
