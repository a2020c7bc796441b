//! Harmonic extension into the ends by separation of variables, and the
//! exterior Dirichlet-to-Neumann multipliers.
//!
//! Channel (m, j, l) on an end of Euclidean dimension n carries the angular
//! function of degree m (Fourier mode on the circle when n = 2, spherical
//! harmonic otherwise), multiplicity index j, and cross-section eigenfunction
//! l.  Its harmonic profile, normalised to 1 at the boundary radius R, is a
//! power of r/R when mu_l = 0 and r^{-(n-2)/2} K_nu(mu_l r) with
//! nu = (n-2)/2 + m otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit;
use crate::model::{decay_rate, CrossSection, CrossSectionKind, EndSpec, ModeChannel, Side};
use crate::ode::{self, OdeOptions};
use crate::specfun;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub end: Side,
    /// Radius of the boundary sphere.
    pub radius: f64,
    pub coefficients: Vec<(ModeChannel, f64)>,
}

impl BoundaryData {
    pub fn new(end: Side, radius: f64) -> Self {
        Self { end, radius, coefficients: Vec::new() }
    }

    pub fn with(mut self, m: u32, j: u32, l: usize, c: f64) -> Self {
        self.coefficients.push((ModeChannel { end: self.end, m, j, l }, c));
        self
    }

    /// Fails when the highest-order retained channels still carry more than
    /// `tol` relative weight at the first evaluation radius `r_eval`.
    pub fn truncation_check(&self, spec: &EndSpec, r_eval: f64, tol: f64) -> Result<()> {
        let ext = extend(spec, self)?;
        let sizes: Vec<(f64, f64)> = ext
            .profiles
            .iter()
            .map(|p| (channel_order(&p.channel, &spec.cross_section), (p.coefficient * p.value(r_eval).0).abs()))
            .collect();
        let total: f64 = sizes.iter().map(|s| s.1).sum();
        let top = sizes.iter().map(|s| s.0).fold(0.0, f64::max);
        let at_top: f64 = sizes.iter().filter(|s| s.0 == top).map(|s| s.1).sum();
        if top > 0.0 && at_top > tol * total {
            return Err(Error::Truncation(format!(
                "highest retained channels carry {:.3e} of {:.3e} at r = {r_eval}",
                at_top, total
            )));
        }
        Ok(())
    }
}

/// Rough frequency of a channel, used to sort channels for truncation checks.
fn channel_order(ch: &ModeChannel, cs: &CrossSection) -> f64 {
    ch.m as f64 + cs.eigenvalues.get(ch.l).map_or(f64::INFINITY, |e| e.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProfileKind {
    /// (r/R)^{-exponent}; exponent 0 is the constant channel.
    Power { exponent: f64 },
    /// (r/R)^{-shift} K_nu(mu r) / K_nu(mu R).
    Bessel { nu: f64, mu: f64, shift: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub channel: ModeChannel,
    pub coefficient: f64,
    pub radius: f64,
    pub kind: ProfileKind,
    /// m(n - 2 + m) and mu^2: the potential of the channel ODE.
    pub angular: f64,
    pub mu2: f64,
    pub n: usize,
}

impl ChannelProfile {
    /// Profile and its r-derivative at r (normalised to 1 at R).
    pub fn value(&self, r: f64) -> (f64, f64) {
        let big_r = self.radius;
        match self.kind {
            ProfileKind::Power { exponent } => {
                let v = (r / big_r).powf(-exponent);
                (v, -exponent * v / r)
            }
            ProfileKind::Bessel { nu, mu, shift } => {
                let a = specfun::bessel_ik_scaled(nu, mu * r).expect("positive argument");
                let b = specfun::bessel_ik_scaled(nu, mu * big_r).expect("positive argument");
                let v = (r / big_r).powf(-shift) * (-mu * (r - big_r)).exp() * a.k / b.k;
                let logd = -shift / r + mu * a.kp / a.k;
                (v, v * logd)
            }
        }
    }

    /// -d/dr of the profile at R: the DtN multiplier of the channel.
    pub fn dtn(&self) -> f64 {
        -self.value(self.radius).1
    }
}

pub fn profile_for(spec: &EndSpec, ch: &ModeChannel, radius: f64) -> Result<ChannelProfile> {
    if ch.end != spec.side {
        return Err(Error::Domain("channel belongs to the other end".into()));
    }
    let n = spec.euclidean_dim;
    let mu2 = *spec
        .cross_section
        .eigenvalues
        .get(ch.l)
        .ok_or_else(|| Error::Truncation(format!("cross-section index {} beyond the spectrum", ch.l)))?;
    if n == 2 && ch.j > 1 {
        return Err(Error::Domain("circle modes have multiplicity index 0 (cos) or 1 (sin)".into()));
    }
    if n == 2 && ch.m == 0 && ch.j != 0 {
        return Err(Error::Domain("the m = 0 Fourier mode has only j = 0".into()));
    }
    let half = 0.5 * (n as f64 - 2.0);
    let m = ch.m as f64;
    let kind = if mu2 == 0.0 {
        ProfileKind::Power { exponent: 2.0 * half + m }
    } else {
        ProfileKind::Bessel { nu: half + m, mu: mu2.sqrt(), shift: half }
    };
    Ok(ChannelProfile { channel: *ch, coefficient: 0.0, radius, kind, angular: m * (n as f64 - 2.0 + m), mu2, n })
}

/// Sum of channel profiles on one end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicExtension {
    pub end: Side,
    pub n: usize,
    pub radius: f64,
    pub profiles: Vec<ChannelProfile>,
    /// Smallest mu over the l >= 1 channels present (rate of exponential decay).
    pub tail_rate: Option<f64>,
    pub(crate) cross_section: CrossSection,
}

pub fn extend(spec: &EndSpec, f: &BoundaryData) -> Result<HarmonicExtension> {
    if f.end != spec.side {
        return Err(Error::Domain("boundary data on the wrong end".into()));
    }
    if spec.side == Side::Minus && spec.euclidean_dim != 2 {
        return Err(Error::InvalidDimension("the minus end is two-dimensional".into()));
    }
    let mut profiles = Vec::with_capacity(f.coefficients.len());
    let mut tail_rate: Option<f64> = None;
    for (ch, c) in &f.coefficients {
        let mut p = profile_for(spec, ch, f.radius)?;
        p.coefficient = *c;
        if p.mu2 > 0.0 {
            let mu = p.mu2.sqrt();
            tail_rate = Some(tail_rate.map_or(mu, |t: f64| t.min(mu)));
        }
        profiles.push(p);
    }
    Ok(HarmonicExtension {
        end: spec.side,
        n: spec.euclidean_dim,
        radius: f.radius,
        profiles,
        tail_rate,
        cross_section: spec.cross_section.clone(),
    })
}

pub fn extend_minus(spec: &EndSpec, f: &BoundaryData) -> Result<HarmonicExtension> {
    if spec.side != Side::Minus {
        return Err(Error::Domain("extend_minus on the plus end".into()));
    }
    extend(spec, f)
}

pub fn extend_plus(spec: &EndSpec, f: &BoundaryData) -> Result<HarmonicExtension> {
    if spec.side != Side::Plus {
        return Err(Error::Domain("extend_plus on the minus end".into()));
    }
    extend(spec, f)
}

/// Angular function of degree m, index j at angles (theta on the circle;
/// polar angle and azimuth on S^2; polar angle only, zonal, on S^{n-1}, n > 3).
pub fn angular_function(n: usize, m: u32, j: u32, angles: &[f64]) -> Result<f64> {
    match n {
        2 => {
            let t = angles.first().copied().unwrap_or(0.0);
            Ok(if j == 0 { (m as f64 * t).cos() } else { (m as f64 * t).sin() })
        }
        3 => {
            let th = angles.first().copied().unwrap_or(0.0);
            let ph = angles.get(1).copied().unwrap_or(0.0);
            if j > 2 * m {
                return Err(Error::Domain(format!("degree {m} has {} harmonics", 2 * m + 1)));
            }
            let order = (j + 1) / 2;
            let p = assoc_legendre(m, order, th.cos());
            Ok(if j == 0 {
                p
            } else if j % 2 == 1 {
                p * (order as f64 * ph).cos()
            } else {
                p * (order as f64 * ph).sin()
            })
        }
        _ => {
            if j != 0 {
                return Err(Error::Unsupported("only zonal harmonics are evaluated for n > 3".into()));
            }
            let th = angles.first().copied().unwrap_or(0.0);
            Ok(gegenbauer(m, 0.5 * (n as f64 - 2.0), th.cos()) / gegenbauer(m, 0.5 * (n as f64 - 2.0), 1.0))
        }
    }
}

/// Associated Legendre P_l^m(x) without the Condon-Shortley phase.
fn assoc_legendre(l: u32, m: u32, x: f64) -> f64 {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for i in 0..m {
        pmm *= (2 * i + 1) as f64 * s;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut p = 0.0;
    for ll in (m + 2)..=l {
        p = (x * (2 * ll - 1) as f64 * pm1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pm1;
        pm1 = p;
    }
    p
}

fn gegenbauer(m: u32, alpha: f64, x: f64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let mut c0 = 1.0;
    let mut c1 = 2.0 * alpha * x;
    for k in 2..=m {
        let kf = k as f64;
        let c2 = (2.0 * x * (kf + alpha - 1.0) * c1 - (kf + 2.0 * alpha - 2.0) * c0) / kf;
        c0 = c1;
        c1 = c2;
    }
    c1
}

/// Real eigenfunction l of the cross-section at fibre coordinate y
/// (unnormalised: 1, cos, sin on a circle).
pub fn cross_section_function(cs: &CrossSection, l: usize, y: f64) -> Result<f64> {
    if l == 0 {
        return Ok(1.0);
    }
    match cs.kind {
        CrossSectionKind::Circle { length } => {
            let i = (l + 1) / 2;
            let w = 2.0 * std::f64::consts::PI / length * i as f64;
            Ok(if l % 2 == 1 { (w * y).cos() } else { (w * y).sin() })
        }
        _ => Err(Error::Unsupported("cross-section eigenfunctions are only known on circles".into())),
    }
}

impl HarmonicExtension {
    /// u and d_r u at (r, angles, y).
    pub fn eval(&self, r: f64, angles: &[f64], y: f64) -> Result<(f64, f64)> {
        let mut u = 0.0;
        let mut du = 0.0;
        for p in &self.profiles {
            let w = p.coefficient
                * angular_function(self.n, p.channel.m, p.channel.j, angles)?
                * cross_section_function(&self.cross_section, p.channel.l, y)?;
            let (b, db) = p.value(r);
            u += w * b;
            du += w * db;
        }
        Ok((u, du))
    }

    /// Coefficients of the power expansion of the mu = 0 channels:
    /// entry M is the sum of coefficient * R^{M} over channels with
    /// exponent M (angular factors left generic; one entry per channel).
    pub fn expansion_terms(&self) -> Vec<(f64, ChannelProfile)> {
        self.profiles
            .iter()
            .filter_map(|p| match p.kind {
                ProfileKind::Power { exponent } => Some((exponent, p.clone())),
                _ => None,
            })
            .collect()
    }

    /// |u - partial sum through r^{-M}| at (r, angles, y).
    pub fn expansion_remainder(&self, order: u32, r: f64, angles: &[f64], y: f64) -> Result<f64> {
        let (u, _) = self.eval(r, angles, y)?;
        let mut s = 0.0;
        for (e, p) in self.expansion_terms() {
            if e <= order as f64 + 1e-12 {
                let w = p.coefficient
                    * angular_function(self.n, p.channel.m, p.channel.j, angles)?
                    * cross_section_function(&self.cross_section, p.channel.l, y)?;
                s += w * p.value(r).0;
            }
        }
        Ok((u - s).abs())
    }

    /// Aggregate of the mu > 0 channels (absolute values summed).
    pub fn exponential_part(&self, r: f64) -> f64 {
        self.profiles
            .iter()
            .filter(|p| p.mu2 > 0.0)
            .map(|p| (p.coefficient * p.value(r).0).abs())
            .sum()
    }

    /// Boundary data of this function on the sphere of radius r.
    pub fn restrict(&self, r: f64) -> BoundaryData {
        BoundaryData {
            end: self.end,
            radius: r,
            coefficients: self.profiles.iter().map(|p| (p.channel, p.coefficient * p.value(r).0)).collect(),
        }
    }
}

/// Exterior DtN multipliers lambda_{ml}: -d_r of the normalised profile at R.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtNOperator {
    pub end: Side,
    pub radius: f64,
    pub multipliers: Vec<(ModeChannel, f64)>,
}

pub fn dtn_multiplier(spec: &EndSpec, ch: &ModeChannel, radius: f64) -> Result<f64> {
    let mu2 = *spec
        .cross_section
        .eigenvalues
        .get(ch.l)
        .ok_or_else(|| Error::Truncation(format!("cross-section index {} beyond the spectrum", ch.l)))?;
    decay_rate(spec.euclidean_dim, ch.m, mu2.sqrt(), radius)
}

pub fn dtn_operator(spec: &EndSpec, channels: &[ModeChannel], radius: f64) -> Result<DtNOperator> {
    let multipliers =
        channels.iter().map(|ch| Ok((*ch, dtn_multiplier(spec, ch, radius)?))).collect::<Result<Vec<_>>>()?;
    Ok(DtNOperator { end: spec.side, radius, multipliers })
}

/// Lambda_ext f, channel by channel.
pub fn dtn(spec: &EndSpec, f: &BoundaryData) -> Result<BoundaryData> {
    let coefficients = f
        .coefficients
        .iter()
        .map(|(ch, c)| Ok((*ch, c * dtn_multiplier(spec, ch, f.radius)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundaryData { end: f.end, radius: f.radius, coefficients })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolReport {
    pub end: Side,
    pub radius: f64,
    /// (m, lambda_{m0} R / m) for m = 1..=m_max.
    pub angular_ratios: Vec<(u32, f64)>,
    /// (mu R, lambda_{0l} / mu) over a sweep of frequencies.
    pub fibre_ratios: Vec<(f64, f64)>,
    pub max_angular_deviation_tail: f64,
    pub fibre_deviation_at_50: f64,
}

/// Principal-symbol check: lambda ~ |zeta| for large angular degree and
/// large fibre frequency.  Fibre frequencies are swept continuously in
/// mu R (the spectral value enters only through the Bessel quotient).
pub fn dtn_symbol_check(spec: &EndSpec, m_max: u32, radius: f64) -> Result<SymbolReport> {
    if m_max < 10 {
        return Err(Error::Config("m_max must be at least 10".into()));
    }
    let n = spec.euclidean_dim;
    let angular_ratios: Vec<(u32, f64)> =
        (1..=m_max).map(|m| Ok((m, decay_rate(n, m, 0.0, radius)? * radius / m as f64))).collect::<Result<_>>()?;
    let mut fibre_ratios = Vec::new();
    for i in 0..=20 {
        let x = 0.5 * 200f64.powf(i as f64 / 20.0);
        fibre_ratios.push((x, decay_rate(n, 0, x / radius, radius)? * radius / x));
    }
    let tail = angular_ratios.iter().rev().take(3).map(|(_, r)| (r - 1.0).abs()).fold(0.0, f64::max);
    let at50 = decay_rate(n, 0, 50.0 / radius, radius)? * radius / 50.0;
    Ok(SymbolReport {
        end: spec.side,
        radius,
        angular_ratios,
        fibre_ratios,
        max_angular_deviation_tail: tail,
        fibre_deviation_at_50: (at50 - 1.0).abs(),
    })
}

/// Oracle for one channel: integrate the radial ODE
/// b'' + (n-1)/r b' - (m(n-2+m)/r^2 + mu^2) b = 0 inward from well beyond
/// the sweep with the profile's own data there, and report the largest
/// relative deviation from the closed form on `rs`.
pub fn channel_ode_residual(p: &ChannelProfile, rs: &[f64]) -> Result<f64> {
    let mut pts: Vec<f64> = rs.to_vec();
    pts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let top = pts[0];
    let start = match p.kind {
        ProfileKind::Bessel { mu, .. } => top + 5.0 / mu,
        ProfileKind::Power { .. } => top * 1.5,
    };
    let (b0, db0) = p.value(start);
    // integrate w = b / b(start) to keep magnitudes moderate
    let nm1 = p.n as f64 - 1.0;
    let (ang, mu2) = (p.angular, p.mu2);
    let f = |r: f64, y: &[f64; 2]| [y[1], -nm1 / r * y[1] + (ang / (r * r) + mu2) * y[0]];
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-300, ..Default::default() };
    let sol = ode::solve(f, start, [1.0, db0 / b0], &pts, opts)?;
    let mut worst: f64 = 0.0;
    for (y, &r) in sol.iter().zip(&pts) {
        let (b, db) = p.value(r);
        let rel_v = (y[0] * b0 - b).abs() / b.abs();
        let rel_d = if db != 0.0 { (y[1] * b0 - db).abs() / db.abs() } else { (y[1] * b0).abs() };
        worst = worst.max(rel_v).max(rel_d);
    }
    Ok(worst)
}

/// Fitted exponential rate of the mu > 0 aggregate over r in [r0, r1].
pub fn exponential_tail_rate(ext: &HarmonicExtension, r0: f64, r1: f64) -> Result<f64> {
    let rs: Vec<f64> = (0..=20).map(|i| r0 + (r1 - r0) * i as f64 / 20.0).collect();
    let ys: Vec<f64> = rs.iter().map(|&r| ext.exponential_part(r).ln()).collect();
    Ok(-fit::line_fit(&rs, &ys)?.slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minus(radius: f64) -> EndSpec {
        EndSpec {
            side: Side::Minus,
            euclidean_dim: 2,
            cross_section: CrossSection::circle(2.0 * std::f64::consts::PI, 8),
            gluing_radius: radius,
            junction: 1.0,
        }
    }

    fn plus(n: usize, radius: f64) -> EndSpec {
        EndSpec { side: Side::Plus, euclidean_dim: n, cross_section: CrossSection::point(), gluing_radius: radius, junction: 1.0 }
    }

    fn plus_circle(n: usize, radius: f64) -> EndSpec {
        EndSpec {
            side: Side::Plus,
            euclidean_dim: n,
            cross_section: CrossSection::circle(2.0 * std::f64::consts::PI, 8),
            gluing_radius: radius,
            junction: 1.0,
        }
    }

    #[test]
    fn constant_extends_to_constant() {
        let e = minus(2.0);
        let u = extend_minus(&e, &BoundaryData::new(Side::Minus, 2.0).with(0, 0, 0, 1.0)).unwrap();
        for r in [2.0, 5.0, 1e3] {
            assert_eq!(u.eval(r, &[0.3], 0.1).unwrap(), (1.0, 0.0));
        }
    }

    #[test]
    fn first_fourier_mode_decays_like_one_over_r() {
        let e = minus(2.0);
        let u = extend_minus(&e, &BoundaryData::new(Side::Minus, 2.0).with(1, 0, 0, 1.0)).unwrap();
        for r in [2.0, 3.0, 50.0] {
            let th = 0.7;
            let (v, _) = u.eval(r, &[th], 0.0).unwrap();
            assert!((v - 2.0 / r * th.cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn fibre_channel_is_bessel_quotient() {
        let e = minus(1.5);
        let u = extend_minus(&e, &BoundaryData::new(Side::Minus, 1.5).with(0, 0, 1, 1.0)).unwrap();
        let mu = 1.0;
        for r in [1.5, 2.0, 6.0] {
            let exact = specfun::bessel_k(0.0, mu * r).unwrap() / specfun::bessel_k(0.0, mu * 1.5).unwrap();
            assert!((u.eval(r, &[0.0], 0.0).unwrap().0 - exact).abs() < 1e-13 * exact);
        }
        let rs: Vec<f64> = (0..30).map(|i| 1.5 * 1.1f64.powi(i)).collect();
        assert!(channel_ode_residual(&u.profiles[0], &rs).unwrap() < 1e-8);
    }

    #[test]
    fn plus_end_examples() {
        let e = plus(3, 2.0);
        let u = extend_plus(&e, &BoundaryData::new(Side::Plus, 2.0).with(0, 0, 0, 1.0)).unwrap();
        assert!((u.eval(7.0, &[], 0.0).unwrap().0 - 2.0 / 7.0).abs() < 1e-15);
        let e1 = plus(3, 1.0);
        let u1 = extend_plus(&e1, &BoundaryData::new(Side::Plus, 1.0).with(1, 0, 0, 1.0)).unwrap();
        let th = 0.4;
        assert!((u1.eval(3.0, &[th, 0.0], 0.0).unwrap().0 - th.cos() / 9.0).abs() < 1e-15);
    }

    #[test]
    fn maximum_principle_on_far_spheres() {
        let e = plus(3, 1.0);
        let f = BoundaryData::new(Side::Plus, 1.0).with(0, 0, 0, 0.7).with(1, 1, 0, 0.2).with(2, 0, 0, -0.1).with(3, 4, 0, 0.05);
        let u = extend_plus(&e, &f).unwrap();
        let sphere = |r: f64| {
            let mut s: f64 = 0.0;
            for i in 0..=40 {
                for j in 0..80 {
                    let th = std::f64::consts::PI * i as f64 / 40.0;
                    let ph = 2.0 * std::f64::consts::PI * j as f64 / 80.0;
                    s = s.max(u.eval(r, &[th, ph], 0.0).unwrap().0.abs());
                }
            }
            s
        };
        assert!(sphere(10.0) <= 0.1 * sphere(1.0) * 1.01);
    }

    #[test]
    fn dtn_examples() {
        let e = minus(1.0);
        for m in 0..6 {
            let f = BoundaryData::new(Side::Minus, 1.0).with(m, 0, 0, 1.0);
            assert_eq!(dtn(&e, &f).unwrap().coefficients[0].1, m as f64);
        }
        let p = plus(3, 2.0);
        let g = dtn(&p, &BoundaryData::new(Side::Plus, 2.0).with(0, 0, 0, 1.0)).unwrap();
        assert!((g.coefficients[0].1 - 0.5).abs() < 1e-15);
        // multipliers agree with minus the derivative of the extension
        let f = BoundaryData::new(Side::Minus, 1.0).with(2, 1, 3, 1.0);
        let u = extend_minus(&e, &f).unwrap();
        let lam = dtn(&e, &f).unwrap().coefficients[0].1;
        assert!((lam + u.profiles[0].value(1.0).1).abs() < 1e-14);
        assert!(lam > 0.0);
    }

    #[test]
    fn dtn_symbol() {
        let rm = dtn_symbol_check(&minus(1.0), 20, 1.0).unwrap();
        assert!(rm.angular_ratios.iter().all(|(_, r)| (r - 1.0).abs() < 1e-15));
        assert!(rm.fibre_deviation_at_50 < 0.03);
        let rp = dtn_symbol_check(&plus(3, 1.0), 20, 1.0).unwrap();
        assert!(rp.fibre_deviation_at_50 < 0.05);
        assert!(rp.angular_ratios.last().unwrap().1 - 1.0 < 0.06);
        assert!(dtn_symbol_check(&minus(1.0), 5, 1.0).is_err());
    }

    #[test]
    fn expansion_remainders_are_bounded() {
        let e = minus(2.0);
        let mut f = BoundaryData::new(Side::Minus, 2.0);
        for m in 0..7 {
            f = f.with(m, 0, 0, 1.0 / (1 + m) as f64);
        }
        f = f.with(1, 1, 2, 0.5);
        let u = extend_minus(&e, &f).unwrap();
        for order in 0..=4u32 {
            // r^{M+1} eps must stay small, so the sweep stops at r = 128
            let scaled: Vec<f64> = (0..6)
                .map(|i| {
                    let r = 4.0 * 2f64.powi(i);
                    u.expansion_remainder(order, r, &[0.3], 0.2).unwrap() * r.powi(order as i32 + 1)
                })
                .collect();
            let hi = scaled.iter().cloned().fold(0.0, f64::max);
            let tail = scaled[scaled.len() - 1];
            assert!(tail.is_finite() && tail <= hi);
            // the scaled remainder converges to c_{M+1} R^{M+1} |cos((M+1) theta)|
            let lim = 2f64.powi(order as i32 + 1) / (order + 2) as f64 * ((order + 1) as f64 * 0.3).cos().abs();
            assert!((tail - lim).abs() < 0.05 * lim.max(1e-3), "{order}: {tail} vs {lim}");
        }
    }

    #[test]
    fn fibre_channels_decay_exponentially() {
        let e = plus_circle(3, 2.0);
        let f = BoundaryData::new(Side::Plus, 2.0).with(0, 0, 1, 1.0).with(1, 0, 3, 1.0).with(0, 0, 0, 1.0);
        let u = extend_plus(&e, &f).unwrap();
        let rate = exponential_tail_rate(&u, 4.0, 40.0).unwrap();
        assert!(rate > 0.9 && rate < 1.1, "{rate}");
        for r in [3.0, 8.0, 20.0] {
            assert!(u.exponential_part(r) <= 2.0 * (-0.99 * (r - 2.0)).exp());
        }
    }

    #[test]
    fn term_by_term_derivative() {
        let e = minus(1.0);
        let f = BoundaryData::new(Side::Minus, 1.0).with(1, 0, 0, 0.3).with(2, 1, 1, 0.4).with(0, 0, 4, 0.2).with(3, 0, 0, 0.1);
        let u = extend_minus(&e, &f).unwrap();
        for r in [1.2, 2.5, 7.0] {
            let h = 1e-5 * r;
            let fd = (u.eval(r + h, &[0.5], 0.3).unwrap().0 - u.eval(r - h, &[0.5], 0.3).unwrap().0) / (2.0 * h);
            let d = u.eval(r, &[0.5], 0.3).unwrap().1;
            assert!((fd - d).abs() < 1e-5 * d.abs());
        }
    }

    #[test]
    fn re_extension_is_consistent() {
        let e = plus_circle(4, 1.0);
        let f = BoundaryData::new(Side::Plus, 1.0).with(0, 0, 0, 1.0).with(2, 0, 1, 0.3).with(1, 0, 2, 0.2);
        let u = extend_plus(&e, &f).unwrap();
        let v = extend_plus(&e, &u.restrict(3.0)).unwrap();
        for r in [3.0, 5.0, 11.0] {
            let a = u.eval(r, &[0.2], 0.4).unwrap();
            let b = v.eval(r, &[0.2], 0.4).unwrap();
            assert!((a.0 - b.0).abs() < 1e-13 && (a.1 - b.1).abs() < 1e-13);
        }
    }

    #[test]
    fn truncation_warning() {
        let e = minus(1.0);
        let f = BoundaryData::new(Side::Minus, 1.0).with(0, 0, 0, 1.0).with(0, 0, 16, 1.0);
        assert!(matches!(f.truncation_check(&e, 1.0, 1e-12), Err(Error::Truncation(_))));
        assert!(f.truncation_check(&e, 6.0, 1e-12).is_ok());
    }
}
