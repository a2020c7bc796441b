//! Zero-energy problems on the neck: the cutoff solution and U.

use serde::Serialize;

use neckriesz::bvp::{build_log_harmonic, compact_laplacian, continuum_c1, solve_laplace, NeckProblem};
use neckriesz::model::{GridSpec, Side};
use neckriesz::Result;

use super::{Ctx, Outcome};
use crate::report::Writer;

#[derive(Serialize)]
struct Row {
    x: f64,
    cutoff_solution: f64,
    log_harmonic: f64,
}

pub fn run(ctx: &Ctx, out: &mut Writer) -> Result<Outcome> {
    let m = &ctx.model;
    let sp = ctx.run.grid_spec(&ctx.geom, 200.0, 200.0);
    let p = NeckProblem::zero_channel(m, sp)?;
    let hom = solve_laplace(&p, &vec![0.0; p.len()])?;
    let hom_norm = hom.values.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let phi = |s: f64| m.cutoffs.phi_at(m, Side::Minus, s)[0];
    let solve = |sp: GridSpec| -> Result<_> {
        let p = NeckProblem::zero_channel(m, sp)?;
        // Delta u = Delta phi_-: u is phi_- itself, with beta = 1
        let f = compact_laplacian(m, sp, &phi)?;
        solve_laplace(&p, &f)
    };
    let w = solve(sp)?;
    let w_fine = solve(sp.refined())?;
    let lh = build_log_harmonic(m, sp)?;
    let rows: Vec<Row> = (0..w.x.len())
        .map(|i| Row { x: w.x[i], cutoff_solution: w.values[i], log_harmonic: lh.solution.values[i] })
        .collect();
    out.csv("bvp_solutions.csv", &rows)?;
    let drift = (w.beta - w_fine.beta).abs();
    let c1_continuum = continuum_c1(m);
    let mut o = Outcome::new(&serde_json::json!({
        "homogeneous_sup": hom_norm,
        "beta": w.beta,
        "beta_refined": w_fine.beta,
        "beta_drift": drift,
        "cutoff_residual": w.residual,
        "log_harmonic": {
            "c1": lh.c1,
            "c1_continuum": c1_continuum,
            "plus_coefficient": lh.plus_coefficient,
            "residual": lh.residual,
        },
    }))?;
    o.summary.push(format!(
        "homogeneous solve {hom_norm:.1e}; beta {:.6} (drift under refinement {drift:.1e}); U: c1 {:.6} (continuum {c1_continuum:.6}), plus coefficient {:.6}",
        w.beta, lh.c1, lh.plus_coefficient
    ));
    if hom_norm > 1e-10 {
        o.failures.push(format!("homogeneous problem has a nonzero solution (sup {hom_norm:.2e})"));
    }
    Ok(o)
}
