//! Harmonic extension of boundary data into one end.

use serde::Serialize;

use neckriesz::harmonic_ext::{channel_ode_residual, dtn_symbol_check, extend, BoundaryData};
use neckriesz::model::Side;
use neckriesz::{Error, Result};

use super::{Ctx, Outcome};
use crate::report::Writer;

/// (m, j, l, coefficient) from "m,j,l,c".
pub fn parse_mode(s: &str) -> std::result::Result<(u32, u32, usize, f64), String> {
    let p: Vec<&str> = s.split(',').map(str::trim).collect();
    if p.len() != 4 {
        return Err(format!("mode {s:?} is not m,j,l,c"));
    }
    let bad = |what: &str| format!("mode {s:?}: bad {what}");
    Ok((
        p[0].parse().map_err(|_| bad("m"))?,
        p[1].parse().map_err(|_| bad("j"))?,
        p[2].parse().map_err(|_| bad("l"))?,
        p[3].parse().map_err(|_| bad("coefficient"))?,
    ))
}

#[derive(Serialize)]
struct ProfileRow {
    m: u32,
    j: u32,
    l: usize,
    r: f64,
    value: f64,
    derivative: f64,
}

#[derive(Serialize)]
struct ChannelSummary {
    m: u32,
    j: u32,
    l: usize,
    coefficient: f64,
    dtn: f64,
    ode_residual: f64,
}

pub fn run(ctx: &Ctx, out: &mut Writer, side: Side, modes: &[(u32, u32, usize, f64)], points: usize) -> Result<Outcome> {
    if points < 2 {
        return Err(Error::Config("need at least two radii".into()));
    }
    let spec = ctx.model.end(side).clone();
    let radius = spec.gluing_radius;
    let default: Vec<(u32, u32, usize, f64)> = (0..4).map(|m| (m, 0, 0, 1.0 / (1 + m) as f64)).collect();
    let modes = if modes.is_empty() { &default[..] } else { modes };
    let mut f = BoundaryData::new(side, radius);
    for &(m, j, l, c) in modes {
        f = f.with(m, j, l, c);
    }
    let ext = extend(&spec, &f)?;
    let rs: Vec<f64> = (0..points).map(|i| radius * 1.1f64.powi(i as i32)).collect();
    let mut rows = Vec::new();
    let mut chans = Vec::new();
    for p in &ext.profiles {
        let ch = &p.channel;
        for &r in &rs {
            let (value, derivative) = p.value(r);
            rows.push(ProfileRow { m: ch.m, j: ch.j, l: ch.l, r, value, derivative });
        }
        chans.push(ChannelSummary {
            m: ch.m,
            j: ch.j,
            l: ch.l,
            coefficient: p.coefficient,
            dtn: p.dtn(),
            ode_residual: channel_ode_residual(p, &rs)?,
        });
    }
    out.csv("extend_profiles.csv", &rows)?;
    let symbols = dtn_symbol_check(&spec, 20, radius)?;
    let worst = chans.iter().map(|c| c.ode_residual).fold(0.0, f64::max);
    let mut o = Outcome::new(&serde_json::json!({
        "end": side,
        "radius": radius,
        "channels": chans,
        "tail_rate": ext.tail_rate,
        "symbol_check": symbols,
    }))?;
    o.summary.push(format!(
        "{} channels on the {:?} end; max ODE residual {worst:.2e}; DtN fibre deviation at mu R = 50: {:.3}",
        chans.len(),
        side,
        symbols.fibre_deviation_at_50
    ));
    Ok(o)
}
