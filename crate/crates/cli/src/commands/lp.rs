//! Power-kernel lemmas: random predicate/trend agreement and the named ranges.

use serde::Serialize;

use neckriesz::lp_estimator::{check_named_ranges, random_suite, Domain, Trend, TrendConfig};
use neckriesz::Result;

use super::{Ctx, Outcome};
use crate::report::Writer;

#[derive(Serialize)]
struct Row {
    domain: Domain,
    d1: f64,
    d2: f64,
    a: f64,
    b: f64,
    a2: f64,
    b2: f64,
    p: f64,
    predicate: Option<bool>,
    trend: Trend,
    exponent: f64,
    agrees: Option<bool>,
}

pub fn run(ctx: &Ctx, out: &mut Writer, per_lemma: usize, min_gap: f64) -> Result<Outcome> {
    let suite = random_suite(ctx.run.seed, per_lemma, min_gap, &TrendConfig::default())?;
    let rows: Vec<Row> = suite
        .instances
        .iter()
        .map(|i| {
            let k = &i.kernel;
            Row {
                domain: k.domain,
                d1: k.d1,
                d2: k.d2,
                a: k.a,
                b: k.b,
                a2: k.a2,
                b2: k.b2,
                p: i.p,
                predicate: i.verdict.predicate,
                trend: i.verdict.trend,
                exponent: i.verdict.exponent,
                agrees: i.verdict.agrees(),
            }
        })
        .collect();
    out.csv("lp_instances.csv", &rows)?;
    let n = ctx.model.plus.euclidean_dim as f64;
    let named = check_named_ranges(n, 40)?;
    let wrong: Vec<_> = named.iter().filter(|c| c.predicate != Some(c.expected)).collect();
    let total = suite.instances.len();
    let mut o = Outcome::new(&serde_json::json!({
        "seed": suite.seed,
        "per_lemma": per_lemma,
        "min_gap": min_gap,
        "instances": total,
        "agreements": suite.agreements,
        "bounded": suite.bounded,
        "named_ranges": named,
    }))?;
    o.summary.push(format!(
        "predicate/trend agreement {}/{total} ({} bounded); named ranges: {} of {} misclassified",
        suite.agreements,
        suite.bounded,
        wrong.len(),
        named.len()
    ));
    if suite.agreements != total {
        o.failures.push(format!("{} of {total} random instances disagree", total - suite.agreements));
    }
    for c in wrong {
        o.failures.push(format!("{} at p = {:.4}: predicate {:?}, expected {}", c.name, c.p, c.predicate, c.expected));
    }
    Ok(o)
}
