//! R(k) v for v = -Delta phi_-: ilg k coefficients, the HS norm of the
//! parametrix error and a comparison with a direct radiation solve.

use serde::Serialize;

use neckriesz::keylemma::log_harmonic_for;
use neckriesz::parametrix::{hs_scaling, ilg_expansion, inversion_report, resolvent_data, select_k0, ParametrixSetup};
use neckriesz::Result;

use super::{Ctx, Outcome};
use crate::report::Writer;

#[derive(Serialize)]
struct RatioRow {
    s: f64,
    c0: f64,
    c1: f64,
    beta_u: f64,
    /// Empty where |beta U| is below a tenth of its maximum.
    c1_over_beta_u: Option<f64>,
}

#[derive(Serialize)]
struct OracleRow {
    k: f64,
    inverse_residual: f64,
    oracle_rel_error: f64,
}

pub fn run(ctx: &Ctx, out: &mut Writer) -> Result<Outcome> {
    let m = &ctx.model;
    let q = ctx.run.q;
    let js = ctx.run.k_lattice.js.clone();
    let setup = ParametrixSetup::new(m, ctx.run.grid_spec(&ctx.geom, 200.0, 200.0), q)?;
    let k0 = select_k0(&setup, &ctx.run.k_lattice.k0_candidates)?;
    let g = &setup.key.grid;
    let approx = &setup.approx[0];
    let v = approx.v.clone();

    let kl = &ctx.run.k_lattice;
    let ser = ilg_expansion(&setup, &v, 4.0, kl.expansion_terms, &kl.expansion_js)?;
    let u = log_harmonic_for(approx)?.on_grid(g)?;
    let bu: Vec<f64> = ser.nodes.iter().map(|&i| approx.beta * u[i]).collect();
    let scale = bu.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let rows: Vec<RatioRow> = ser
        .nodes
        .iter()
        .enumerate()
        .map(|(a, &i)| {
            let c1 = ser.coefficients.get(1).map_or(f64::NAN, |c| c[a]);
            RatioRow {
                s: g.s[i],
                c0: ser.coefficients[0][a],
                c1,
                beta_u: bu[a],
                c1_over_beta_u: (bu[a].abs() >= 0.1 * scale).then(|| c1 / bu[a]),
            }
        })
        .collect();
    out.csv("resolvent_ilg.csv", &rows)?;
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.c1_over_beta_u).collect();
    let ratio_dev = ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);

    let mut oracle = Vec::new();
    for &k in &ctx.run.k_lattice.oracle_ks {
        let d = resolvent_data(&setup, k)?;
        let inv = inversion_report(&setup, &d)?.inverse_residual;
        let rv = d.apply(&v);
        let (l, r) = g.radiation(k)?;
        let direct = g.operator().solve(k * k, &v, l, r)?;
        let nodes = setup.compact_nodes(5.0);
        let sc = nodes.iter().map(|&i| direct[i].abs()).fold(0.0, f64::max);
        let err = nodes.iter().map(|&i| (rv[i] - direct[i]).abs()).fold(0.0, f64::max) / sc;
        oracle.push(OracleRow { k, inverse_residual: inv, oracle_rel_error: err });
    }
    out.csv("resolvent_oracle.csv", &oracle)?;

    let hs = hs_scaling(&setup, &js)?;
    let mut o = Outcome::new(&serde_json::json!({
        "q": q,
        "k0": k0,
        "beta": approx.beta,
        "ilg_series": { "q": ser.q, "ilg": ser.ilg, "coefficients": ser.coefficients, "residual": ser.residual, "order": ser.order },
        "c1_over_beta_u": { "nodes": ratios.len(), "max_deviation_from_one": ratio_dev },
        "oracle": oracle,
        "hs_scaling": hs,
    }))?;
    o.summary.push(format!(
        "k0 = {k0}; c1 / (beta U) within {ratio_dev:.1e} of 1 on {} nodes; residual order {:.2}; HS slope of E'' {:.3}",
        ratios.len(),
        ser.order,
        hs.slope
    ));
    for r in &oracle {
        o.summary.push(format!("k = {:e}: (I+E)(I+S) - I {:.1e}, R(k)v vs direct solve {:.1e}", r.k, r.inverse_residual, r.oracle_rel_error));
    }
    if hs.slope <= 0.05 {
        o.warnings.push(format!(
            "HS norm of E'' does not decay in ilg k (slope {:.3} with q = {q}); the parametrix error is not small, use q > 1",
            hs.slope
        ));
    }
    Ok(o)
}
