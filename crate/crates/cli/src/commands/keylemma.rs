//! Low-energy approximate solutions for the cutoff source -Delta phi_-.

use serde::Serialize;

use neckriesz::keylemma::{
    build_with_setup, coefficient_check, cutoff_source, log_harmonic_for, residual_scaling, verify_lower_bound, KeyApproximation,
    KeySetup,
};
use neckriesz::model::{GridSpec, ModelManifold, Side};
use neckriesz::Result;

use super::{Ctx, Outcome};
use crate::report::Writer;

#[derive(Serialize)]
struct Row {
    j: u32,
    k: f64,
    ilg: f64,
    residual_sup: f64,
}

fn approximation(m: &ModelManifold, sp: GridSpec, q: usize) -> Result<KeyApproximation> {
    let s = KeySetup::new(m, sp)?;
    let v = cutoff_source(&s, Side::Minus)?;
    build_with_setup(s, &v, q)
}

pub fn run(ctx: &Ctx, out: &mut Writer, lower_bound_k: f64) -> Result<Outcome> {
    let m = &ctx.model;
    let q = ctx.run.q;
    let js = ctx.run.k_lattice.js.clone();
    let a = approximation(m, ctx.run.grid_spec(&ctx.geom, 200.0, 200.0), q)?;
    let rs = residual_scaling(&a, &js)?;
    let cc = coefficient_check(&a, &log_harmonic_for(&a)?)?;
    let rows: Vec<Row> = rs
        .js
        .iter()
        .zip(&rs.ilg)
        .zip(&rs.residual_sup)
        .map(|((&j, &ilg), &res)| Row { j, k: (-(2f64.powi(j as i32))).exp(), ilg, residual_sup: res })
        .collect();
    out.csv("keylemma_residual.csv", &rows)?;
    // The lower bound needs kr <= 0.1 out to well past r0, so the minus end
    // reaches 2 / k; the first stage carries the leading coefficient.
    let reach = (2.0 / lower_bound_k).max(200.0);
    let mut b = approximation(m, ctx.run.grid_spec(&ctx.geom, reach, reach), 1)?;
    b.q = 1;
    let lb = verify_lower_bound(&b, lower_bound_k, 0.1, 10.0)?;
    let stages: Vec<_> = a.stages.iter().map(|s| serde_json::json!({ "beta": s.beta, "plus_coefficient": s.plus_coefficient })).collect();
    let mut o = Outcome::new(&serde_json::json!({
        "q": q,
        "beta": a.beta,
        "stages": stages,
        "residual_scaling": rs,
        "coefficient_check": cc,
        "lower_bound": lb,
    }))?;
    o.summary.push(format!(
        "q = {q}: residual slope {:.3} against ilg k (target >= {q}); ilg coefficient vs beta U rel {:.1e}; lower bound C = {:.3} at k = {lower_bound_k:e}",
        rs.slope, cc.relative_error, lb.c_fit
    ));
    if rs.slope < q as f64 - 0.2 {
        o.failures.push(format!("residual slope {:.3} below q - 0.2", rs.slope));
    }
    if lb.verdict == Some(false) {
        o.failures.push(format!("lower bound fails at k = {lower_bound_k:e} (C = {:.3})", lb.c_fit));
    }
    Ok(o)
}
