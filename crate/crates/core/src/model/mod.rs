//! Model connected sum: two product ends joined through a rotationally
//! symmetric neck, reduced per mode to weighted 1-D problems.
//!
//! The axis coordinate `s` is arclength.  For `s <= -S_minus` we are on the
//! minus end with radius `r = -s`; for `s >= S_plus` on the plus end with
//! `r = s`.  The volume density of the zero channel is `v(s)`, equal to
//! `c_minus r` and `c_plus r^{n_plus-1}` on the ends, and a quintic Hermite
//! interpolant of `log v` across the neck (C^2 at both junctions).

pub mod config;
pub mod cutoff;
pub mod grid;

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, OdeOptions};
use crate::specfun;

pub use config::{content_hash, CrossSectionConfig, GeometryConfig, GridConfig};
pub use cutoff::{Cutoff, CutoffSet, Shape};
pub use grid::{radial_laplacian, AxisGrid, Boundary, GridSpec, RadialOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Minus => -1.0,
            Side::Plus => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Minus,
    Neck,
    Plus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CrossSectionKind {
    Point,
    Circle { length: f64 },
    General,
}

/// Compact cross-section M: dimension, volume and a truncated spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub dim: usize,
    pub volume: f64,
    /// Eigenvalues mu_l^2, ascending, repeated by multiplicity, starting at 0.
    pub eigenvalues: Vec<f64>,
    pub kind: CrossSectionKind,
}

impl CrossSection {
    pub fn point() -> Self {
        Self { dim: 0, volume: 1.0, eigenvalues: vec![0.0], kind: CrossSectionKind::Point }
    }

    /// Circle of the given length with Fourier modes |j| <= modes.
    pub fn circle(length: f64, modes: usize) -> Self {
        let w = 2.0 * std::f64::consts::PI / length;
        let mut ev = vec![0.0];
        for j in 1..=modes {
            let e = (w * j as f64).powi(2);
            ev.push(e);
            ev.push(e);
        }
        Self { dim: 1, volume: length, eigenvalues: ev, kind: CrossSectionKind::Circle { length } }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.volume > 0.0) {
            return Err(Error::Config(format!("cross-section volume must be positive, got {}", self.volume)));
        }
        match self.eigenvalues.first() {
            Some(&e) if e == 0.0 => {}
            _ => return Err(Error::NonAscendingSpectrum("spectrum must start at 0".into())),
        }
        for w in self.eigenvalues.windows(2) {
            if !(w[1] >= w[0]) {
                return Err(Error::NonAscendingSpectrum(format!("{} follows {}", w[1], w[0])));
            }
        }
        if self.eigenvalues.iter().skip(1).any(|e| !(*e > 0.0)) {
            return Err(Error::NonAscendingSpectrum("only the first eigenvalue may vanish".into()));
        }
        Ok(())
    }

    /// Distinct eigenvalues with multiplicities.
    pub fn distinct(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &e in &self.eigenvalues {
            match out.last_mut() {
                Some((v, m)) if (*v - e).abs() <= 1e-12 * e.max(1.0) => *m += 1,
                _ => out.push((e, 1)),
            }
        }
        out
    }
}

/// One end R^n x M of the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndSpec {
    pub side: Side,
    pub euclidean_dim: usize,
    pub cross_section: CrossSection,
    /// Boundary radius of the compact part K.
    pub gluing_radius: f64,
    /// Smallest radius at which the end is exactly a product.
    pub junction: f64,
}

impl EndSpec {
    /// c with v = c r^{n-1} on the end: |S^{n-1}| vol(M).
    pub fn weight_constant(&self) -> f64 {
        specfun::sphere_area(self.euclidean_dim) * self.cross_section.volume
    }

    pub fn total_dim(&self) -> usize {
        self.euclidean_dim + self.cross_section.dim
    }

    /// Exact product weight at radius r.
    pub fn weight(&self, r: f64) -> f64 {
        self.weight_constant() * r.powi(self.euclidean_dim as i32 - 1)
    }
}

/// Quintic Hermite interpolant of log v on [-S_minus, S_plus].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeckProfile {
    pub s_minus: f64,
    pub s_plus: f64,
    /// Monomial coefficients in t = (s + S_minus) / (S_minus + S_plus).
    pub coeffs: [f64; 6],
    /// Sample grid over the neck and the weight there.
    pub grid: Vec<f64>,
    pub weight: Vec<f64>,
    pub smoothness: usize,
}

impl NeckProfile {
    fn new(minus: &EndSpec, plus: &EndSpec) -> Result<Self> {
        let a = -minus.junction;
        let b = plus.junction;
        let h = b - a;
        let n = plus.euclidean_dim as f64;
        let sm = minus.junction;
        let sp = plus.junction;
        // derivatives of log v in s; on the minus side d/ds = -d/dr
        let la = [minus.weight_constant().ln() + sm.ln(), -1.0 / sm, -1.0 / (sm * sm)];
        let lb = [plus.weight_constant().ln() + (n - 1.0) * sp.ln(), (n - 1.0) / sp, -(n - 1.0) / (sp * sp)];
        // in t: d/dt = h d/ds
        let ta = [la[0], la[1] * h, la[2] * h * h];
        let tb = [lb[0], lb[1] * h, lb[2] * h * h];
        let mut m = Matrix6::zeros();
        let mut rhs = Vector6::zeros();
        for (row, t, order, val) in [
            (0, 0.0, 0, ta[0]),
            (1, 0.0, 1, ta[1]),
            (2, 0.0, 2, ta[2]),
            (3, 1.0, 0, tb[0]),
            (4, 1.0, 1, tb[1]),
            (5, 1.0, 2, tb[2]),
        ] {
            for j in 0..6 {
                m[(row, j)] = mono_deriv(j, order, t);
            }
            rhs[row] = val;
        }
        let c = m.lu().solve(&rhs).ok_or_else(|| Error::Singular("neck interpolation".into()))?;
        let mut coeffs = [0.0; 6];
        coeffs.copy_from_slice(c.as_slice());
        let mut prof = Self { s_minus: sm, s_plus: sp, coeffs, grid: vec![], weight: vec![], smoothness: 2 };
        let ns = 201;
        prof.grid = (0..ns).map(|i| a + h * i as f64 / (ns - 1) as f64).collect();
        prof.weight = prof.grid.iter().map(|&s| prof.log_weight(s)[0].exp()).collect();
        Ok(prof)
    }

    /// (log v, d/ds log v, d^2/ds^2 log v) inside the neck.
    pub fn log_weight(&self, s: f64) -> [f64; 3] {
        let h = self.s_minus + self.s_plus;
        let t = (s + self.s_minus) / h;
        let mut out = [0.0; 3];
        for (order, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..6 {
                acc += self.coeffs[j] * mono_deriv(j, order, t);
            }
            *o = acc / h.powi(order as i32);
        }
        out
    }
}

fn mono_deriv(j: usize, order: usize, t: f64) -> f64 {
    if order > j {
        return 0.0;
    }
    let mut c = 1.0;
    for i in 0..order {
        c *= (j - i) as f64;
    }
    c * t.powi((j - order) as i32)
}

/// Angular / cross-section channel on one end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeChannel {
    pub end: Side,
    /// Fourier index on the minus end, spherical-harmonic degree on the plus end.
    pub m: u32,
    /// Multiplicity index among degree-m harmonics (0 is the zonal one).
    pub j: u32,
    /// Index into the cross-section spectrum.
    pub l: usize,
}

impl ModeChannel {
    pub fn zero(end: Side) -> Self {
        Self { end, m: 0, j: 0, l: 0 }
    }

    pub fn is_zero(&self) -> bool {
        self.m == 0 && self.l == 0
    }
}

/// Values on a grid together with the quadrature weights of the measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub measure_weights: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, measure_weights: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() || grid.len() != measure_weights.len() {
            return Err(Error::InvalidDimension("grid function lengths differ".into()));
        }
        if measure_weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Domain("measure weights must be positive".into()));
        }
        Ok(Self { grid, values, measure_weights })
    }

    pub fn inner(&self, other: &GridFunction) -> f64 {
        self.values.iter().zip(&other.values).zip(&self.measure_weights).map(|((a, b), w)| a * b * w).sum()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelManifold {
    pub minus: EndSpec,
    pub plus: EndSpec,
    pub neck: NeckProfile,
    /// Radii of the basepoints z_minus, z_plus (each on its own end).
    pub basepoint_minus: f64,
    pub basepoint_plus: f64,
    pub cutoffs: CutoffSet,
}

impl ModelManifold {
    pub fn end(&self, side: Side) -> &EndSpec {
        match side {
            Side::Minus => &self.minus,
            Side::Plus => &self.plus,
        }
    }

    /// Total dimension N.
    pub fn dim(&self) -> usize {
        self.minus.total_dim()
    }

    pub fn gluing_radius(&self) -> f64 {
        self.minus.gluing_radius
    }

    pub fn region(&self, s: f64) -> Region {
        if s <= -self.minus.junction {
            Region::Minus
        } else if s >= self.plus.junction {
            Region::Plus
        } else {
            Region::Neck
        }
    }

    /// Volume density of the zero channel.
    pub fn weight(&self, s: f64) -> f64 {
        match self.region(s) {
            Region::Minus => self.minus.weight(-s),
            Region::Plus => self.plus.weight(s),
            Region::Neck => self.neck.log_weight(s)[0].exp(),
        }
    }

    /// d/ds log v.
    pub fn log_weight_slope(&self, s: f64) -> f64 {
        match self.region(s) {
            Region::Minus => 1.0 / s,
            Region::Plus => (self.plus.euclidean_dim as f64 - 1.0) / s,
            Region::Neck => self.neck.log_weight(s)[1],
        }
    }

    /// Global radial function: |x| on the ends, clamped interpolation in the neck.
    pub fn distance_weighting(&self, s: f64) -> f64 {
        match self.region(s) {
            Region::Minus => -s,
            Region::Plus => s,
            Region::Neck => {
                let (a, b) = (-self.minus.junction, self.plus.junction);
                let t = (s - a) / (b - a);
                ((1.0 - t) * self.minus.junction + t * self.plus.junction).max(1.0)
            }
        }
    }

    /// Axis coordinate of radius r on an end.
    pub fn axis_coordinate(&self, side: Side, r: f64) -> f64 {
        side.sign() * r
    }

    /// Signed radius relative to an end: r on that end, negative elsewhere
    /// (used by cutoffs living on one end only).
    pub fn end_radius(&self, side: Side, s: f64) -> Option<f64> {
        match (side, self.region(s)) {
            (Side::Minus, Region::Minus) => Some(-s),
            (Side::Plus, Region::Plus) => Some(s),
            _ => None,
        }
    }
}

pub fn build_model(cfg: &GeometryConfig) -> Result<ModelManifold> {
    cfg.validate()?;
    let (minus_cs, plus_cs) = cfg.cross_sections()?;
    minus_cs.validate()?;
    plus_cs.validate()?;
    if cfg.n_plus < 3 {
        return Err(Error::InvalidDimension(format!("n_plus must be at least 3, got {}", cfg.n_plus)));
    }
    let minus = EndSpec {
        side: Side::Minus,
        euclidean_dim: 2,
        cross_section: minus_cs,
        gluing_radius: cfg.r_glue,
        junction: cfg.s_minus,
    };
    let plus = EndSpec {
        side: Side::Plus,
        euclidean_dim: cfg.n_plus,
        cross_section: plus_cs,
        gluing_radius: cfg.r_glue,
        junction: cfg.s_plus,
    };
    if minus.total_dim() != plus.total_dim() {
        return Err(Error::InvalidDimension(format!(
            "total dimension differs between ends: 2 + {} != {} + {}",
            minus.cross_section.dim, plus.euclidean_dim, plus.cross_section.dim
        )));
    }
    let neck = NeckProfile::new(&minus, &plus)?;
    let cutoffs = cfg.cutoffs.clone();
    cutoffs.validate(cfg)?;
    let m = ModelManifold {
        minus,
        plus,
        neck,
        basepoint_minus: cfg.basepoints.minus,
        basepoint_plus: cfg.basepoints.plus,
        cutoffs,
    };
    for (side, r0) in [(Side::Minus, m.basepoint_minus), (Side::Plus, m.basepoint_plus)] {
        let phi = m.cutoffs.phi(side);
        if r0 < m.end(side).junction || r0 >= phi.a {
            return Err(Error::Config(format!(
                "basepoint radius {r0} on {side:?} end must lie in the product region and outside supp phi"
            )));
        }
    }
    Ok(m)
}

/// Rate tau in the Robin condition d_n u + tau u = 0 satisfied by the
/// decaying solution of channel (m, kappa) on an end of Euclidean dimension
/// n at radius r: the profile r^{-(n-2)/2} K_nu(kappa r), nu = (n-2)/2 + m,
/// with the kappa -> 0 limit r^{-(n-2)-m} (or a constant when n = 2, m = 0).
pub fn decay_rate(n: usize, m: u32, kappa: f64, r: f64) -> Result<f64> {
    let half = 0.5 * (n as f64 - 2.0);
    let nu = half + m as f64;
    if kappa == 0.0 {
        return Ok((half + nu) / r);
    }
    let x = kappa * r;
    Ok((half - specfun::bessel_k_log_derivative(nu, x)?) / r)
}

/// Decaying solution of the channel ODE on an end, integrated inward from
/// far out with WKB initial data.  Returns (values, derivatives) at `rs`
/// (which must be decreasing).
pub fn decaying_solution(n: usize, m: u32, mu: f64, rs: &[f64]) -> Result<Vec<[f64; 2]>> {
    if !(mu > 0.0) {
        return Err(Error::Domain("decaying solution needs mu > 0".into()));
    }
    let Some(&r_top) = rs.first() else { return Ok(vec![]) };
    let lam = m as f64 * (n as f64 - 2.0 + m as f64);
    // start far enough that the growing mode has been suppressed by e^{-2 mu L} ~ 1e-30
    let r0 = r_top + 35.0 / mu;
    // WKB profile r^{-(n-1)/2} e^{-mu r}; work with y = log-scaled amplitude
    // to avoid underflow: u = exp(-mu (r - r0)) w.
    let a = 0.5 * (n as f64 - 1.0);
    let w0 = r0.powf(-a);
    let dw0 = -a / r0 * w0;
    // ODE for w: u'' + (n-1)/r u' - (lam/r^2 + mu^2) u = 0 with u = e^{-mu (r - r0)} w
    let f = |r: f64, y: &[f64; 2]| {
        let w = y[0];
        let wp = y[1];
        let p = (n as f64 - 1.0) / r;
        // u' = e(-mu w + w'), u'' = e(mu^2 w - 2 mu w' + w'')
        let wpp = -(mu * mu * w - 2.0 * mu * wp) - p * (-mu * w + wp) + (lam / (r * r) + mu * mu) * w;
        [wp, wpp]
    };
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-300, ..Default::default() };
    let sol = ode::solve(f, r0, [w0, dw0 - 0.0], rs, opts)?;
    Ok(sol
        .iter()
        .zip(rs)
        .map(|(y, &r)| {
            let e = (-mu * (r - r0)).exp();
            [e * y[0], e * (-mu * y[0] + y[1])]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ModelManifold {
        build_model(&GeometryConfig::default()).unwrap()
    }

    #[test]
    fn default_model_is_valid() {
        let m = model();
        assert_eq!(m.dim(), 3);
        assert_eq!(m.plus.euclidean_dim, 3);
        assert!(m.neck.weight.iter().all(|w| *w > 0.0));
    }

    #[test]
    fn dimension_errors() {
        let mut c = GeometryConfig::default();
        c.n_plus = 2;
        assert!(matches!(build_model(&c), Err(Error::InvalidDimension(_))));
        let mut c = GeometryConfig::default();
        c.spectra.plus = CrossSectionConfig::Circle { length: 1.0, modes: 3 };
        assert!(matches!(build_model(&c), Err(Error::InvalidDimension(_))));
        let mut c = GeometryConfig::default();
        c.spectra.minus = CrossSectionConfig::Explicit { dim: 1, volume: 1.0, eigenvalues: vec![0.0, 2.0, 1.0] };
        assert!(matches!(build_model(&c), Err(Error::NonAscendingSpectrum(_))));
    }

    #[test]
    fn weight_is_c2_at_junctions() {
        let m = model();
        let sm = m.minus.junction;
        let sp = m.plus.junction;
        let n = m.plus.euclidean_dim as f64;
        let left = m.neck.log_weight(-sm);
        let want_l = [m.minus.weight_constant().ln() + sm.ln(), -1.0 / sm, -1.0 / (sm * sm)];
        let right = m.neck.log_weight(sp);
        let want_r = [m.plus.weight_constant().ln() + (n - 1.0) * sp.ln(), (n - 1.0) / sp, -(n - 1.0) / (sp * sp)];
        for i in 0..3 {
            assert!((left[i] - want_l[i]).abs() < 1e-10, "minus order {i}");
            assert!((right[i] - want_r[i]).abs() < 1e-10, "plus order {i}");
        }
        // the global weight is continuous across each junction
        let e = 1e-9;
        assert!((m.weight(-sm - e) / m.weight(-sm + e) - 1.0).abs() < 1e-7);
        assert!((m.weight(sp - e) / m.weight(sp + e) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn exact_product_weights_outside_neck() {
        let m = model();
        let c_minus = 2.0 * std::f64::consts::PI * 2.0 * std::f64::consts::PI;
        assert!((m.weight(-7.0) - c_minus * 7.0).abs() < 1e-12 * c_minus * 7.0);
        let c_plus = 4.0 * std::f64::consts::PI;
        assert!((m.weight(7.0) - c_plus * 49.0).abs() < 1e-12 * c_plus * 49.0);
    }

    #[test]
    fn radial_function() {
        let m = model();
        assert_eq!(m.distance_weighting(7.0), 7.0);
        assert_eq!(m.distance_weighting(-7.0), 7.0);
        let mut last = 0.0;
        for i in 0..100 {
            let s = -0.999 + 0.02 * i as f64;
            let r = m.distance_weighting(s);
            assert!((1.0..=m.gluing_radius()).contains(&r));
            let s2 = 1.0 + i as f64 * 0.3;
            let r2 = m.distance_weighting(s2);
            assert!(r2 >= last);
            last = r2;
        }
    }

    #[test]
    fn decaying_solution_is_bessel() {
        for (n, m, mu) in [(2usize, 0u32, 1.0), (2, 3, 2.0), (3, 1, 1.5), (3, 0, 0.7), (4, 2, 1.0)] {
            let rs: Vec<f64> = (0..20).map(|i| 12.0 - 0.5 * i as f64).collect();
            let sol = decaying_solution(n, m, mu, &rs).unwrap();
            let half = 0.5 * (n as f64 - 2.0);
            let nu = half + m as f64;
            let ratios: Vec<f64> = sol
                .iter()
                .zip(&rs)
                .map(|(y, &r)| y[0] / (r.powf(-half) * specfun::bessel_k(nu, mu * r).unwrap()))
                .collect();
            let c = ratios[0];
            for q in &ratios {
                assert!((q / c - 1.0).abs() < 1e-6, "n={n} m={m} mu={mu}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn decay_rates() {
        // minus end zero channel: Neumann at k = 0
        assert_eq!(decay_rate(2, 0, 0.0, 5.0).unwrap(), 0.0);
        assert!((decay_rate(3, 0, 0.0, 5.0).unwrap() - 0.2).abs() < 1e-15);
        // k K_1 / K_0 for the minus zero channel
        let t = decay_rate(2, 0, 0.3, 5.0).unwrap();
        let want = 0.3 * specfun::bessel_k(1.0, 1.5).unwrap() / specfun::bessel_k(0.0, 1.5).unwrap();
        assert!((t - want).abs() < 1e-14);
    }
}
