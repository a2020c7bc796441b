use serde::Serialize;

use neckriesz::model::{AxisGrid, Region, Side};
use neckriesz::Result;

use super::{Ctx, Outcome};
use crate::report::Writer;

#[derive(Serialize)]
struct GridRow {
    s: f64,
    r: f64,
    region: Region,
    weight: f64,
    mass: f64,
}

#[derive(Serialize)]
struct GridSummary {
    nodes: usize,
    compact: (usize, usize),
    #[serde(rename = "R_max_minus")]
    r_max_minus: f64,
    #[serde(rename = "R_max_plus")]
    r_max_plus: f64,
    ds: f64,
    dt_max: f64,
}

pub fn run(ctx: &Ctx, out: &mut Writer) -> Result<Outcome> {
    let m = &ctx.model;
    let sp = ctx.run.grid_spec(&ctx.geom, ctx.geom.r_max_minus(), ctx.geom.r_max_plus());
    let g = AxisGrid::new(m, sp)?;
    let rows: Vec<GridRow> = (0..g.len())
        .map(|i| GridRow { s: g.s[i], r: g.r[i], region: g.region[i], weight: g.v[i], mass: g.mass[i] })
        .collect();
    out.csv("model_grid.csv", &rows)?;
    let summary = GridSummary {
        nodes: g.len(),
        compact: g.compact,
        r_max_minus: g.r_max_minus(),
        r_max_plus: g.r_max_plus(),
        ds: sp.ds,
        dt_max: sp.dt_max,
    };
    let mut o = Outcome::new(&serde_json::json!({
        "dimension": m.dim(),
        "gluing_radius": m.gluing_radius(),
        "minus": m.end(Side::Minus),
        "plus": m.end(Side::Plus),
        "neck": { "s_minus": m.neck.s_minus, "s_plus": m.neck.s_plus, "coeffs": m.neck.coeffs, "smoothness": m.neck.smoothness },
        "basepoints": { "minus": m.basepoint_minus, "plus": m.basepoint_plus },
        "grid": summary,
    }))?;
    o.summary.push(format!(
        "dimension {}, ends R^2 x M_- ({}-dim) and R^{} x M_+, {} axis nodes (compact {}..={})",
        m.dim(),
        m.minus.cross_section.dim,
        m.plus.euclidean_dim,
        g.len(),
        g.compact.0,
        g.compact.1
    ));
    Ok(o)
}
