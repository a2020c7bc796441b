//! One-dimensional power-weight kernels on a half line: the exact
//! boundedness predicates and a numerical norm trend to check them against.
//!
//! A kernel is x^{-a} y^{-b} for x <= y and x^{-a'} y^{-b'} for y < x, acting
//! from L^p(y^{d2-1} dy) to L^p(x^{d1-1} dx), either on [1, inf) or, in the
//! homogeneous case a + b = d = a' + b', on (0, inf).

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit;
use crate::linalg;
use crate::quad;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// [1, inf) with separate left and right dimensions.
    FromOne,
    /// (0, inf), a + b = a' + b' = d1 = d2.
    Homogeneous,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerKernel {
    pub a: f64,
    pub b: f64,
    pub a2: f64,
    pub b2: f64,
    pub d1: f64,
    pub d2: f64,
    pub domain: Domain,
}

impl PowerKernel {
    pub fn on_half_line(d1: f64, d2: f64, a: f64, b: f64, a2: f64, b2: f64) -> Result<Self> {
        let k = Self { a, b, a2, b2, d1, d2, domain: Domain::FromOne };
        k.validate()?;
        Ok(k)
    }

    /// Homogeneous kernel of degree -d: b = d - a, b' = d - a'.
    pub fn homogeneous(d: f64, a: f64, a2: f64) -> Result<Self> {
        let k = Self { a, b: d - a, a2, b2: d - a2, d1: d, d2: d, domain: Domain::Homogeneous };
        k.validate()?;
        Ok(k)
    }

    fn validate(&self) -> Result<()> {
        let all = [self.a, self.b, self.a2, self.b2, self.d1, self.d2];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("kernel exponents must be finite".into()));
        }
        if self.d1 < 1.0 || self.d2 < 1.0 {
            return Err(Error::Domain("dimensions must be at least 1".into()));
        }
        if self.domain == Domain::Homogeneous {
            let d = self.d1;
            let tol = 1e-12 * d;
            if (self.d2 - d).abs() > tol || (self.a + self.b - d).abs() > tol || (self.a2 + self.b2 - d).abs() > tol {
                return Err(Error::Domain("homogeneous kernel needs a + b = a' + b' = d".into()));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        if x <= y {
            x.powf(-self.a) * y.powf(-self.b)
        } else {
            x.powf(-self.a2) * y.powf(-self.b2)
        }
    }

    /// Kernel of the adjoint K(y, x), acting between the swapped measures.
    pub fn transpose(&self) -> Self {
        Self { a: self.b2, b: self.a2, a2: self.b, b2: self.a, d1: self.d2, d2: self.d1, domain: self.domain }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub name: &'static str,
    /// Positive when the inequality holds.
    pub value: f64,
}

/// The lemma inequalities written as differences, so that each one holds
/// iff its margin is positive.  Divisions by min/max are multiplied out,
/// which is equivalent for p > 1.
pub fn lemma_margins(k: &PowerKernel, p: f64) -> Result<Vec<Margin>> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("p = {p} must exceed 1")));
    }
    Ok(match k.domain {
        Domain::FromOne => vec![
            Margin { name: "p(a+b-d2) > d1-d2", value: p * (k.a + k.b - k.d2) - (k.d1 - k.d2) },
            Margin { name: "p(a'+b'-d2) > d1-d2", value: p * (k.a2 + k.b2 - k.d2) - (k.d1 - k.d2) },
            Margin { name: "p > d1/min(d1,a')", value: p * k.a2 - k.d1 },
            Margin { name: "p < d2/max(0,d2-b)", value: k.d2 - p * (k.d2 - k.b) },
        ],
        Domain::Homogeneous => vec![
            Margin { name: "p < d/a", value: k.d1 - p * k.a },
            Margin { name: "p > d/a'", value: p * k.a2 - k.d1 },
        ],
    })
}

/// Exact predicate of the applicable lemma.  Equality in any inequality is
/// reported as a boundary case: the lemmas say nothing there.
pub fn lemma_predicate(k: &PowerKernel, p: f64) -> Result<bool> {
    let m = lemma_margins(k, p)?;
    let scale = 1e-12 * (1.0 + p + k.d1 + k.d2);
    if let Some(b) = m.iter().find(|m| m.value.abs() <= scale) {
        return Err(Error::BoundaryCase(b.name.into()));
    }
    Ok(m.iter().all(|m| m.value > 0.0))
}

/// Smallest |margin| / p, used to keep random draws away from the boundary.
pub fn boundary_distance(k: &PowerKernel, p: f64) -> Result<f64> {
    Ok(lemma_margins(k, p)?.iter().map(|m| m.value.abs() / p).fold(f64::INFINITY, f64::min))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendConfig {
    /// Spacing in log x.
    pub h: f64,
    /// Truncation radii are 2^j for these j.
    pub log2_radii: [u32; 6],
    /// Growth exponent (d log norm / d log R) above which the trend is divergent.
    pub slope_threshold: f64,
    pub max_iter: usize,
}

impl Default for TrendConfig {
    fn default() -> Self {
        Self { h: 0.15, log2_radii: [6, 12, 18, 24, 30, 36], slope_threshold: 0.05, max_iter: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Stable,
    Divergent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSample {
    pub r_max: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundednessVerdict {
    pub p: f64,
    /// None on a boundary case.
    pub predicate: Option<bool>,
    pub trend: Trend,
    /// Fitted growth exponent of the lower bound against R over the last
    /// three radii.
    pub exponent: f64,
    pub samples: Vec<NormSample>,
}

impl BoundednessVerdict {
    pub fn agrees(&self) -> Option<bool> {
        self.predicate.map(|b| b == (self.trend == Trend::Stable))
    }
}

/// Matrix of the kernel conjugated to L^p(dt) on a uniform grid in t = log x.
/// Cells are [ih, (i+1)h] (shifted by -log R in the homogeneous case) and
/// the kernel is sampled at cell midpoints.
pub fn discretize(k: &PowerKernel, p: f64, r_max: f64, h: f64) -> Result<DMatrix<f64>> {
    if !(r_max > 1.0) || !(h > 0.0) {
        return Err(Error::Domain("need R_max > 1 and h > 0".into()));
    }
    let len = r_max.ln();
    let (t0, n) = match k.domain {
        Domain::FromOne => (0.0, (len / h).ceil() as usize),
        Domain::Homogeneous => (-len, (2.0 * len / h).ceil() as usize),
    };
    let t: Vec<f64> = (0..n).map(|i| t0 + (i as f64 + 0.5) * h).collect();
    let q = 1.0 - 1.0 / p;
    if k.domain == Domain::Homogeneous {
        // a function of t_i - t_j: evaluate the profile directly to avoid
        // overflow of the separate powers
        let d = k.d1;
        return Ok(DMatrix::from_fn(n, n, |i, j| {
            let s = t[i] - t[j];
            let e = if s <= 0.0 { d / p - k.a } else { d / p - k.a2 };
            h * (e * s).exp()
        }));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let e = if t[i] <= t[j] {
            (k.d1 / p - k.a) * t[i] + (k.d2 * q - k.b) * t[j]
        } else {
            (k.d1 / p - k.a2) * t[i] + (k.d2 * q - k.b2) * t[j]
        };
        h * e.exp()
    }))
}

/// p -> p norm of the truncated kernel over a sweep of R, with a verdict
/// from the growth of the lower bound.
pub fn empirical_norm_trend(k: &PowerKernel, p: f64, cfg: &TrendConfig) -> Result<BoundednessVerdict> {
    let predicate = match lemma_predicate(k, p) {
        Ok(b) => Some(b),
        Err(Error::BoundaryCase(_)) => None,
        Err(e) => return Err(e),
    };
    let mut samples = Vec::new();
    for &j in &cfg.log2_radii {
        let r = 2f64.powi(j as i32);
        let a = discretize(k, p, r, cfg.h)?;
        let est = linalg::p_norm_bounds(&a, p, cfg.max_iter);
        if !est.lower.is_finite() {
            return Err(Error::Overflow(format!("norm estimate overflowed at R = 2^{j}")));
        }
        samples.push(NormSample { r_max: r, lower: est.lower, upper: est.upper });
    }
    let tail = &samples[samples.len() - 3..];
    let xs: Vec<f64> = tail.iter().map(|s| s.r_max).collect();
    let ys: Vec<f64> = tail.iter().map(|s| s.lower).collect();
    let exponent = fit::loglog_slope(&xs, &ys)?.slope;
    let trend = if exponent > cfg.slope_threshold { Trend::Divergent } else { Trend::Stable };
    Ok(BoundednessVerdict { p, predicate, trend, exponent, samples })
}

/// ||u||_{L^1} of the log-substituted convolution profile, in closed form.
/// Infinite when the profile does not decay on both sides.
pub fn profile_l1(k: &PowerKernel, p: f64) -> Result<f64> {
    if k.domain != Domain::Homogeneous {
        return Err(Error::Unsupported("the convolution profile needs a homogeneous kernel".into()));
    }
    let left = k.d1 / p - k.a;
    let right = k.a2 - k.d1 / p;
    if left <= 0.0 || right <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / left + 1.0 / right)
}

/// The same norm from the original variables: the integral over y of
/// K~(1, y) dy / y with K~(x, y) = x^{d/p} K(x, y) y^{d - d/p}.
pub fn profile_l1_direct(k: &PowerKernel, p: f64) -> Result<f64> {
    if k.domain != Domain::Homogeneous {
        return Err(Error::Unsupported("the convolution profile needs a homogeneous kernel".into()));
    }
    let d = k.d1;
    let f = |y: f64| k.eval(1.0, y) * y.powf(d - d / p - 1.0);
    // y < 1 is the branch y < x, y > 1 the branch x <= y; both decay
    // exponentially in log y
    let g = |t: f64| f(t.exp()) * t.exp();
    let lo = quad::integrate(g, -60.0 / (k.a2 - d / p).max(1e-3), 0.0, 0.0, 1e-12)?;
    let hi = quad::integrate(g, 0.0, 60.0 / (d / p - k.a).max(1e-3), 0.0, 1e-12)?;
    Ok(lo.value + hi.value)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomInstance {
    pub kernel: PowerKernel,
    pub p: f64,
    pub verdict: BoundednessVerdict,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    /// Instances drawn per lemma.
    pub per_lemma: usize,
    pub instances: Vec<RandomInstance>,
    pub agreements: usize,
    pub bounded: usize,
}

/// Random non-boundary instances of both lemmas (|margin| / p >= min_gap
/// for every inequality), with predicate/trend agreement counted.
pub fn random_suite(seed: u64, per_lemma: usize, min_gap: f64, cfg: &TrendConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(2 * per_lemma);
    for homogeneous in [false, true] {
        let mut drawn = 0;
        let mut attempts = 0;
        while drawn < per_lemma {
            attempts += 1;
            if attempts > 10_000 * per_lemma.max(1) {
                return Err(Error::NonConvergence("could not draw enough non-boundary instances".into()));
            }
            let p = rng.gen_range(1.1..4.0);
            let kernel = if homogeneous {
                let d = rng.gen_range(1.0..4.0);
                PowerKernel::homogeneous(d, rng.gen_range(0.0..d), rng.gen_range(0.0..1.5 * d))?
            } else {
                let d1 = rng.gen_range(1.0..4.0);
                let d2 = rng.gen_range(1.0..4.0);
                PowerKernel::on_half_line(
                    d1,
                    d2,
                    rng.gen_range(0.0..4.0),
                    rng.gen_range(0.0..4.0),
                    rng.gen_range(0.0..4.0),
                    rng.gen_range(-1.0..3.0),
                )?
            };
            if boundary_distance(&kernel, p)? < min_gap {
                continue;
            }
            let verdict = empirical_norm_trend(&kernel, p, cfg)?;
            instances.push(RandomInstance { kernel, p, verdict });
            drawn += 1;
        }
    }
    let agreements = instances.iter().filter(|i| i.verdict.agrees() == Some(true)).count();
    let bounded = instances.iter().filter(|i| i.verdict.predicate == Some(true)).count();
    Ok(SuiteReport { seed, per_lemma, instances, agreements, bounded })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamedInstance {
    pub name: String,
    pub kernel: PowerKernel,
    /// Stated range: bounded for lo < p < hi.
    pub p_range: (f64, f64),
}

/// Kernels arising in the boundedness argument for the low-energy Riesz
/// transform with plus-end dimension n.
pub fn named_instances(n: f64) -> Result<Vec<NamedInstance>> {
    Ok(vec![
        NamedInstance {
            name: "E+ to E-".into(),
            kernel: PowerKernel::on_half_line(n, 2.0, n - 1.0, 1.0, n, 0.0)?,
            p_range: (1.0, 2.0),
        },
        NamedInstance {
            name: "E- to E+".into(),
            kernel: PowerKernel::on_half_line(2.0, n, 1.0, n - 1.0, 2.0, n - 2.0)?,
            p_range: (1.0, n),
        },
        NamedInstance {
            name: "E+ to E+".into(),
            kernel: PowerKernel::on_half_line(n, n, n - 1.0, 2.0, n, 1.0)?,
            p_range: (1.0, n),
        },
        NamedInstance {
            name: "E- to E- (homogeneous)".into(),
            kernel: PowerKernel::homogeneous(2.0, 1.0, 2.0)?,
            p_range: (1.0, 2.0),
        },
    ])
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RangeCheck {
    pub name: String,
    pub p: f64,
    pub expected: bool,
    pub predicate: Option<bool>,
}

/// Predicate on a p-sweep through and beyond the stated range.  Points on
/// the range ends are boundary cases and skipped.
pub fn check_named_ranges(n: f64, per_instance: usize) -> Result<Vec<RangeCheck>> {
    let mut out = Vec::new();
    for inst in named_instances(n)? {
        let (lo, hi) = inst.p_range;
        let top = hi.max(lo) + 2.0;
        for i in 1..=per_instance {
            let p = lo + (top - lo) * i as f64 / (per_instance as f64 + 1.0);
            if (p - hi).abs() < 1e-9 {
                continue;
            }
            let predicate = match lemma_predicate(&inst.kernel, p) {
                Ok(b) => Some(b),
                Err(Error::BoundaryCase(_)) => None,
                Err(e) => return Err(e),
            };
            out.push(RangeCheck { name: inst.name.clone(), p, expected: p > lo && p < hi, predicate });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn predicate_examples() {
        let k = PowerKernel::on_half_line(3.0, 2.0, 2.0, 1.0, 3.0, 0.0).unwrap();
        assert_eq!(lemma_predicate(&k, 1.5), Ok(true));
        let h = PowerKernel::homogeneous(2.0, 1.0, 2.0).unwrap();
        assert_eq!(lemma_predicate(&h, 1.5), Ok(true));
        assert!(matches!(lemma_predicate(&h, 2.0), Err(Error::BoundaryCase(_))));
        assert_eq!(lemma_predicate(&h, 3.0), Ok(false));
        assert!(lemma_predicate(&h, 1.0).is_err());
        assert!(PowerKernel::homogeneous(2.0, 1.0, 2.0).is_ok());
        assert!(PowerKernel::on_half_line(0.5, 2.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn named_ranges_are_exact() {
        for c in check_named_ranges(3.0, 40).unwrap() {
            match c.predicate {
                Some(b) => assert_eq!(b, c.expected, "{c:?}"),
                None => panic!("unexpected boundary case {c:?}"),
            }
        }
    }

    #[test]
    fn mellin_profile_two_ways() {
        for (d, a, a2, p) in [(2.0, 1.0, 2.0, 1.5), (3.0, 0.5, 2.5, 2.0), (1.5, 0.2, 1.4, 3.0)] {
            let k = PowerKernel::homogeneous(d, a, a2).unwrap();
            let exact = profile_l1(&k, p).unwrap();
            let direct = profile_l1_direct(&k, p).unwrap();
            assert!((exact - direct).abs() < 1e-8 * exact, "{exact} {direct}");
        }
    }

    #[test]
    fn mellin_bound_is_nearly_attained() {
        let k = PowerKernel::homogeneous(2.0, 1.0, 2.0).unwrap();
        let p = 1.5;
        let a = discretize(&k, p, 2f64.powi(36), 0.15).unwrap();
        let est = linalg::p_norm_bounds(&a, p, 300);
        // discrete profile sum; the midpoint rule differs from the integral by O(h^2)
        let sum: f64 = (-400..=400)
            .map(|i| {
                let s = i as f64 * 0.15;
                let e = if s <= 0.0 { 2.0 / p - 1.0 } else { 2.0 / p - 2.0 };
                0.15 * (e * s).exp()
            })
            .sum();
        let l1 = profile_l1(&k, p).unwrap();
        assert!(est.lower <= sum * (1.0 + 1e-9));
        assert!((sum - l1).abs() < 0.02 * l1);
        assert!(est.lower > 0.9 * l1, "{} {}", est.lower, l1);
    }

    #[test]
    fn trends_match_on_clear_cases() {
        let cfg = TrendConfig::default();
        let v = empirical_norm_trend(&PowerKernel::homogeneous(2.0, 1.0, 1.0).unwrap(), 1.5, &cfg).unwrap();
        assert_eq!(v.trend, Trend::Divergent);
        assert_eq!(v.agrees(), Some(true));
        let k = PowerKernel::on_half_line(3.0, 2.0, 2.0, 1.0, 3.0, 0.0).unwrap();
        let v = empirical_norm_trend(&k, 1.5, &cfg).unwrap();
        assert_eq!(v.trend, Trend::Stable, "{v:?}");
        let v = empirical_norm_trend(&k, 3.0, &cfg).unwrap();
        assert_eq!(v.trend, Trend::Divergent, "{v:?}");
    }

    #[test]
    fn random_suite_agrees() {
        let r = random_suite(7, 30, 0.15, &TrendConfig::default()).unwrap();
        let bad: Vec<_> = r.instances.iter().filter(|i| i.verdict.agrees() != Some(true)).collect();
        assert!(bad.is_empty(), "{:#?}", bad.first());
        assert!(r.bounded > 5 && r.bounded < 55, "{}", r.bounded);
    }

    proptest! {
        #[test]
        fn duality_swaps_p(d1 in 1.0f64..4.0, d2 in 1.0f64..4.0, a in 0.0f64..4.0, b in 0.0f64..4.0,
                           a2 in 0.0f64..4.0, b2 in -1.0f64..3.0, p in 1.1f64..5.0) {
            let k = PowerKernel::on_half_line(d1, d2, a, b, a2, b2).unwrap();
            let q = p / (p - 1.0);
            let t = k.transpose();
            prop_assert_eq!(t.transpose(), k);
            if let (Ok(x), Ok(y)) = (lemma_predicate(&k, p), lemma_predicate(&t, q)) {
                prop_assert_eq!(x, y);
            }
        }

        #[test]
        fn homogeneous_duality(d in 1.0f64..4.0, fa in 0.0f64..1.0, fa2 in 0.0f64..1.5, p in 1.1f64..5.0) {
            let k = PowerKernel::homogeneous(d, fa * d, fa2 * d).unwrap();
            let q = p / (p - 1.0);
            if let (Ok(x), Ok(y)) = (lemma_predicate(&k, p), lemma_predicate(&k.transpose(), q)) {
                prop_assert_eq!(x, y);
            }
        }

        #[test]
        fn min_max_form_agrees(d1 in 1.0f64..4.0, d2 in 1.0f64..4.0, a in 0.0f64..4.0, b in 0.0f64..4.0,
                               a2 in 0.0f64..4.0, b2 in -1.0f64..3.0, p in 1.1f64..5.0) {
            let k = PowerKernel::on_half_line(d1, d2, a, b, a2, b2).unwrap();
            if let Ok(x) = lemma_predicate(&k, p) {
                let lo = d1 / d1.min(a2);
                let hi = if d2 - b > 0.0 { d2 / (d2 - b) } else { f64::INFINITY };
                let y = p * (a + b - d2) > d1 - d2 && p * (a2 + b2 - d2) > d1 - d2 && lo < p && p < hi;
                prop_assert_eq!(x, y);
            }
        }
    }
}
