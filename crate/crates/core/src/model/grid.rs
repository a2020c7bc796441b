//! Finite-volume discretisation of the weighted radial operators.
//!
//! Node i carries the mass m_i = integral of v over its dual cell, and the
//! link i, i+1 the flux coefficient 1 / (integral of ds / v).  On the ends
//! both integrals are done in closed form, so functions of constant flux
//! (1, log r on the minus end, r^{2-n} on the plus end) are exactly
//! discrete-harmonic.  The operator -(1/m) L with L tridiagonal is
//! symmetric with respect to diag(m).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{decay_rate, GeometryConfig, ModelManifold, Region, Side};
use crate::error::{Error, Result};
use crate::linalg::Tridiag;
use crate::quad::GaussRule;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    /// d_n u + tau u = 0 with d_n the outward derivative.
    Robin(f64),
    /// u vanishes at the ghost node beyond the end (sub-blocks only).
    Dirichlet,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub ds: f64,
    pub dt_max: f64,
    pub growth: f64,
    pub r_max_minus: f64,
    pub r_max_plus: f64,
}

impl GridSpec {
    pub fn from_config(cfg: &GeometryConfig) -> Self {
        Self {
            ds: cfg.grid.ds,
            dt_max: cfg.grid.dt_max,
            growth: cfg.grid.growth,
            r_max_minus: cfg.r_max_minus(),
            r_max_plus: cfg.r_max_plus(),
        }
    }

    pub fn with_r_max(mut self, minus: f64, plus: f64) -> Self {
        self.r_max_minus = minus;
        self.r_max_plus = plus;
        self
    }

    /// Halve every spacing.
    pub fn refined(mut self) -> Self {
        self.ds *= 0.5;
        self.dt_max *= 0.5;
        self.growth = self.growth.sqrt();
        self
    }
}

/// 1-D operator data: nodes, masses, fluxes and an optional potential.
#[derive(Clone, Debug)]
pub struct RadialOperator {
    pub x: Vec<f64>,
    pub mass: Vec<f64>,
    pub flux: Vec<f64>,
    /// Multiplies the mass on the diagonal (angular and cross-section terms).
    pub potential: Vec<f64>,
    /// Weight v at the first and last node (Robin terms).
    pub end_weight: [f64; 2],
    /// Flux to a node just outside, for Dirichlet ends.
    pub ghost_flux: [Option<f64>; 2],
}

impl RadialOperator {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Tridiagonal matrix of L + (V + k^2) M with the boundary terms.
    pub fn matrix(&self, k2: f64, left: Boundary, right: Boundary) -> Result<Tridiag> {
        let n = self.len();
        let mut diag = vec![0.0; n];
        for i in 0..n {
            diag[i] = (self.potential[i] + k2) * self.mass[i];
            if i > 0 {
                diag[i] += self.flux[i - 1];
            }
            if i + 1 < n {
                diag[i] += self.flux[i];
            }
        }
        for (idx, bc, end) in [(0usize, left, 0usize), (n - 1, right, 1usize)] {
            match bc {
                Boundary::Robin(tau) => diag[idx] += self.end_weight[end] * tau,
                Boundary::Dirichlet => {
                    diag[idx] += self.ghost_flux[end].ok_or_else(|| {
                        Error::Config("Dirichlet end needs a ghost flux (use a sub-block)".into())
                    })?
                }
            }
        }
        let off: Vec<f64> = self.flux.iter().map(|f| -f).collect();
        Ok(Tridiag { lower: off.clone(), diag, upper: off })
    }

    /// (Delta + V) u at every node.
    pub fn apply(&self, u: &[f64], left: Boundary, right: Boundary) -> Result<Vec<f64>> {
        let a = self.matrix(0.0, left, right)?;
        Ok(a.apply(u).iter().zip(&self.mass).map(|(y, m)| y / m).collect())
    }

    /// Solve (Delta + V + k^2) u = f.
    pub fn solve(&self, k2: f64, f: &[f64], left: Boundary, right: Boundary) -> Result<Vec<f64>> {
        let a = self.matrix(k2, left, right)?;
        let b: Vec<f64> = f.iter().zip(&self.mass).map(|(v, m)| v * m).collect();
        a.solve(&b)
    }

    /// Kernel of (Delta + V + k^2)^{-1} with respect to the measure diag(m).
    pub fn green_matrix(&self, k2: f64, left: Boundary, right: Boundary) -> Result<DMatrix<f64>> {
        self.matrix(k2, left, right)?.inverse()
    }

    pub fn inner(&self, u: &[f64], w: &[f64]) -> f64 {
        u.iter().zip(w).zip(&self.mass).map(|((a, b), m)| a * b * m).sum()
    }

    /// Nodes i0..=i1 with Dirichlet ghosts taken from the neighbouring links.
    pub fn sub_block(&self, i0: usize, i1: usize) -> Result<RadialOperator> {
        if !(i0 <= i1 && i1 < self.len()) {
            return Err(Error::Domain(format!("bad sub-block {i0}..={i1}")));
        }
        Ok(RadialOperator {
            x: self.x[i0..=i1].to_vec(),
            mass: self.mass[i0..=i1].to_vec(),
            flux: self.flux[i0..i1].to_vec(),
            potential: self.potential[i0..=i1].to_vec(),
            end_weight: [f64::NAN, f64::NAN],
            ghost_flux: [
                if i0 > 0 { Some(self.flux[i0 - 1]) } else { None },
                if i1 + 1 < self.len() { Some(self.flux[i1]) } else { None },
            ],
        })
    }
}

/// The discretised axis of the model: compact part plus graded ends.
#[derive(Clone, Debug)]
pub struct AxisGrid {
    pub spec: GridSpec,
    pub s: Vec<f64>,
    pub r: Vec<f64>,
    pub region: Vec<Region>,
    pub v: Vec<f64>,
    pub mass: Vec<f64>,
    pub flux: Vec<f64>,
    /// Node indices of s = -R and s = +R.
    pub compact: (usize, usize),
    pub n_plus: usize,
}

/// Radii beyond `r0` growing geometrically to `r_max` (last node exactly r_max).
pub fn graded_radii(r0: f64, first: f64, growth: f64, dt_max: f64, r_max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if r_max <= r0 * (1.0 + 1e-14) {
        return out;
    }
    let mut r = r0;
    let mut h = first;
    loop {
        h = (h * growth).min(dt_max * r).max(first.min(dt_max * r));
        let next = r + h;
        if next >= r_max * (1.0 - 1e-12) {
            out.push(r_max);
            break;
        }
        // avoid a sliver before r_max
        if r_max - next < 0.3 * h.min(dt_max * next) {
            out.push(r_max);
            break;
        }
        out.push(next);
        r = next;
    }
    out
}

impl AxisGrid {
    pub fn new(m: &ModelManifold, spec: GridSpec) -> Result<Self> {
        let big_r = m.gluing_radius();
        if spec.r_max_minus < big_r || spec.r_max_plus < big_r {
            return Err(Error::Truncation("R_max below the gluing radius".into()));
        }
        let nc = (2.0 * big_r / spec.ds).round().max(4.0) as usize;
        let h = 2.0 * big_r / nc as f64;
        let minus = graded_radii(big_r, h, spec.growth, spec.dt_max, spec.r_max_minus);
        let plus = graded_radii(big_r, h, spec.growth, spec.dt_max, spec.r_max_plus);
        let mut s: Vec<f64> = minus.iter().rev().map(|r| -r).collect();
        let i_lo = s.len();
        for i in 0..=nc {
            s.push(if i == nc { big_r } else { -big_r + h * i as f64 });
        }
        let i_hi = s.len() - 1;
        s.extend(plus.iter().copied());
        Self::from_nodes(m, spec, s, (i_lo, i_hi))
    }

    pub fn from_nodes(m: &ModelManifold, spec: GridSpec, s: Vec<f64>, compact: (usize, usize)) -> Result<Self> {
        if s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("grid nodes must increase".into()));
        }
        let n = s.len();
        let r: Vec<f64> = s.iter().map(|&x| m.distance_weighting(x)).collect();
        let region: Vec<Region> = s.iter().map(|&x| m.region(x)).collect();
        let v: Vec<f64> = s.iter().map(|&x| m.weight(x)).collect();
        let gl = GaussRule::new(12);
        let mut flux = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let w = inv_weight_integral(m, &gl, s[i], s[i + 1]);
            flux.push(1.0 / w);
        }
        let mut mass = Vec::with_capacity(n);
        for i in 0..n {
            let a = if i == 0 { s[0] } else { 0.5 * (s[i - 1] + s[i]) };
            let b = if i == n - 1 { s[n - 1] } else { 0.5 * (s[i] + s[i + 1]) };
            mass.push(weight_integral(m, &gl, a, b));
        }
        Ok(Self { spec, s, r, region, v, mass, flux, compact, n_plus: m.plus.euclidean_dim })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Zero-channel operator on the whole axis.
    pub fn operator(&self) -> RadialOperator {
        let n = self.len();
        RadialOperator {
            x: self.s.clone(),
            mass: self.mass.clone(),
            flux: self.flux.clone(),
            potential: vec![0.0; n],
            end_weight: [self.v[0], self.v[n - 1]],
            ghost_flux: [None, None],
        }
    }

    pub fn r_max_minus(&self) -> f64 {
        -self.s[0]
    }

    pub fn r_max_plus(&self) -> f64 {
        self.s[self.len() - 1]
    }

    /// Exact zero-channel radiation conditions at both ends at energy k.
    pub fn radiation(&self, k: f64) -> Result<(Boundary, Boundary)> {
        Ok((
            Boundary::Robin(decay_rate(2, 0, k, self.r_max_minus())?),
            Boundary::Robin(decay_rate(self.n_plus, 0, k, self.r_max_plus())?),
        ))
    }

    /// Index of the node closest to s.
    pub fn nearest(&self, s: f64) -> usize {
        match self.s.binary_search_by(|x| x.partial_cmp(&s).unwrap()) {
            Ok(i) => i,
            Err(i) => {
                if i == 0 {
                    0
                } else if i >= self.len() {
                    self.len() - 1
                } else if (self.s[i] - s).abs() < (s - self.s[i - 1]).abs() {
                    i
                } else {
                    i - 1
                }
            }
        }
    }

    /// Nodes with |s| <= a (a contiguous range).
    pub fn range_within(&self, a: f64) -> (usize, usize) {
        let lo = self.s.iter().position(|&x| x >= -a - 1e-12).unwrap_or(0);
        let hi = self.s.iter().rposition(|&x| x <= a + 1e-12).unwrap_or(self.len() - 1);
        (lo, hi)
    }

    pub fn side_radius(&self, side: Side, i: usize) -> Option<f64> {
        match (side, self.region[i]) {
            (Side::Minus, Region::Minus) => Some(-self.s[i]),
            (Side::Plus, Region::Plus) => Some(self.s[i]),
            _ => None,
        }
    }
}

/// Radial operator of a channel on its natural domain.  The zero channel
/// lives on the whole axis; other channels live on the product part of their
/// end (nodes with r > junction, Dirichlet at the junction node), ordered by
/// increasing r, with potential m(n-2+m)/r^2 + mu_l^2.
pub fn radial_laplacian(m: &ModelManifold, g: &AxisGrid, ch: &super::ModeChannel) -> Result<RadialOperator> {
    if ch.is_zero() {
        return Ok(g.operator());
    }
    let end = m.end(ch.end);
    let mu2 = *end
        .cross_section
        .eigenvalues
        .get(ch.l)
        .ok_or_else(|| Error::Domain(format!("channel l = {} beyond the truncated spectrum", ch.l)))?;
    if ch.end == Side::Minus && ch.j > 1 {
        return Err(Error::Domain("minus-end Fourier modes have multiplicity index 0 or 1".into()));
    }
    let n = end.euclidean_dim as f64;
    let lam = ch.m as f64 * (n - 2.0 + ch.m as f64);
    // indices of product-region nodes on this end, by increasing r
    let mut idx: Vec<usize> = (0..g.len())
        .filter(|&i| g.side_radius(ch.end, i).map_or(false, |r| r >= end.junction - 1e-12))
        .collect();
    if ch.end == Side::Minus {
        idx.reverse();
    }
    if idx.len() < 3 {
        return Err(Error::Truncation("end has too few nodes".into()));
    }
    let link = |a: usize, b: usize| g.flux[a.min(b)];
    let inner = &idx[1..];
    let x: Vec<f64> = inner.iter().map(|&i| g.r[i]).collect();
    let mass: Vec<f64> = inner.iter().map(|&i| g.mass[i]).collect();
    let flux: Vec<f64> = inner.windows(2).map(|w| link(w[0], w[1])).collect();
    let potential: Vec<f64> = x.iter().map(|r| lam / (r * r) + mu2).collect();
    let last = *inner.last().unwrap();
    Ok(RadialOperator {
        x,
        mass,
        flux,
        potential,
        end_weight: [f64::NAN, g.v[last]],
        ghost_flux: [Some(link(idx[0], idx[1])), None],
    })
}

/// Integral of 1/v over [a, b].
pub fn inv_weight_integral(m: &ModelManifold, gl: &GaussRule, a: f64, b: f64) -> f64 {
    piecewise(m, gl, a, b, |m, end, lo, hi| match end {
        Side::Minus => {
            let (rhi, rlo) = (-lo, -hi);
            (rhi / rlo).ln() / m.minus.weight_constant()
        }
        Side::Plus => {
            let n = m.plus.euclidean_dim as f64;
            (lo.powf(2.0 - n) - hi.powf(2.0 - n)) / ((n - 2.0) * m.plus.weight_constant())
        }
    }, |m, s| 1.0 / m.weight(s))
}

/// Integral of v over [a, b].
pub fn weight_integral(m: &ModelManifold, gl: &GaussRule, a: f64, b: f64) -> f64 {
    piecewise(m, gl, a, b, |m, end, lo, hi| match end {
        Side::Minus => {
            let (rhi, rlo) = (-lo, -hi);
            0.5 * (rhi - rlo) * (rhi + rlo) * m.minus.weight_constant()
        }
        Side::Plus => {
            let n = m.plus.euclidean_dim as i32;
            (hi.powi(n) - lo.powi(n)) / n as f64 * m.plus.weight_constant()
        }
    }, |m, s| m.weight(s))
}

fn piecewise<E, F>(m: &ModelManifold, gl: &GaussRule, a: f64, b: f64, exact: E, f: F) -> f64
where
    E: Fn(&ModelManifold, Side, f64, f64) -> f64,
    F: Fn(&ModelManifold, f64) -> f64,
{
    if b <= a {
        return 0.0;
    }
    let j0 = -m.minus.junction;
    let j1 = m.plus.junction;
    let mut total = 0.0;
    // minus end part
    if a < j0 {
        total += exact(m, Side::Minus, a, b.min(j0));
    }
    // neck part
    let na = a.max(j0);
    let nb = b.min(j1);
    if nb > na {
        total += gl.integrate(na, nb, |s| f(m, s));
    }
    if b > j1 {
        total += exact(m, Side::Plus, a.max(j1), b);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_model;
    use proptest::prelude::*;

    fn setup(r_max: f64) -> (ModelManifold, AxisGrid) {
        let cfg = GeometryConfig::default();
        let m = build_model(&cfg).unwrap();
        let spec = GridSpec::from_config(&cfg).with_r_max(r_max, r_max);
        let g = AxisGrid::new(&m, spec).unwrap();
        (m, g)
    }

    #[test]
    fn constants_and_end_harmonics_are_annihilated() {
        let (_, g) = setup(1e3);
        let op = g.operator();
        let n = g.len();
        let neu = Boundary::Robin(0.0);
        let one = vec![1.0; n];
        let r = op.apply(&one, neu, neu).unwrap();
        assert!(r.iter().all(|x| x.abs() < 1e-12));
        // log r on the minus end and r^{-1} on the plus end, interior nodes away from the neck
        let lg: Vec<f64> = g.r.iter().map(|r| r.ln()).collect();
        let pw: Vec<f64> = g.r.iter().map(|r| 1.0 / r).collect();
        let dl = op.apply(&lg, neu, neu).unwrap();
        let dp = op.apply(&pw, neu, neu).unwrap();
        for i in 1..n - 1 {
            if g.region[i - 1] == Region::Minus && g.region[i + 1] == Region::Minus {
                assert!(dl[i].abs() < 1e-9 * (1.0 + lg[i].abs()), "log at {}: {}", g.s[i], dl[i]);
            }
            if g.region[i - 1] == Region::Plus && g.region[i + 1] == Region::Plus {
                assert!(dp[i].abs() < 1e-9 / g.r[i].powi(2), "power at {}: {}", g.s[i], dp[i]);
            }
        }
    }

    #[test]
    fn grid_is_graded_and_hits_r_max() {
        let (_, g) = setup(1e6);
        assert!((g.r_max_minus() - 1e6).abs() < 1e-6);
        assert!((g.r_max_plus() - 1e6).abs() < 1e-6);
        assert!((g.s[g.compact.0] + 5.0).abs() < 1e-12 && (g.s[g.compact.1] - 5.0).abs() < 1e-12);
        for w in g.s.windows(3) {
            let h0 = w[1] - w[0];
            let h1 = w[2] - w[1];
            assert!(h1 / h0 < 1.2 && h0 / h1 < 1.2 || (w[2] - 1e6).abs() < 1.0 || (w[0] + 1e6).abs() < 1.0);
        }
    }

    #[test]
    fn masses_sum_to_volume() {
        let (m, g) = setup(20.0);
        let total: f64 = g.mass.iter().sum();
        let gl = GaussRule::new(12);
        let want = weight_integral(&m, &gl, -20.0, 20.0);
        assert!((total - want).abs() < 1e-10 * want);
    }

    #[test]
    fn channel_operator_resolves_bessel_profile() {
        use crate::model::{decay_rate, ModeChannel};
        use crate::specfun::bessel_k;
        let (m, g) = setup(60.0);
        // channel m = 2, l = 1 on the minus end: K_2(mu r) with mu = 1
        let ch = ModeChannel { end: Side::Minus, m: 2, j: 0, l: 1 };
        let op = radial_laplacian(&m, &g, &ch).unwrap();
        let mu = m.minus.cross_section.eigenvalues[1].sqrt();
        let tau = decay_rate(2, 2, mu, *op.x.last().unwrap()).unwrap();
        // Dirichlet at the junction with value K_2(mu), as a source on the first row
        let n = op.len();
        let mut rhs = vec![0.0; n];
        let k_junction = bessel_k(2.0, mu * m.minus.junction).unwrap();
        rhs[0] = op.ghost_flux[0].unwrap() * k_junction / op.mass[0];
        let mat_sol = op.solve(0.0, &rhs, Boundary::Dirichlet, Boundary::Robin(tau)).unwrap();
        for (u, r) in mat_sol.iter().zip(&op.x) {
            if *r < 10.0 {
                let want = bessel_k(2.0, mu * r).unwrap();
                assert!((u - want).abs() < 2e-3 * want, "r={r}: {u} vs {want}");
            }
        }
    }

    proptest! {
        #[test]
        fn discrete_symmetry(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let (_, g) = setup(50.0);
            let op = g.operator();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = g.len();
            let mut u = vec![0.0; n];
            let mut w = vec![0.0; n];
            for i in 5..n - 5 {
                u[i] = rng.gen_range(-1.0..1.0);
                w[i] = rng.gen_range(-1.0..1.0);
            }
            let bc = Boundary::Robin(0.3);
            let du = op.apply(&u, bc, bc).unwrap();
            let dw = op.apply(&w, bc, bc).unwrap();
            let a = op.inner(&du, &w);
            let b = op.inner(&u, &dw);
            prop_assert!((a - b).abs() < 1e-9 * (a.abs() + b.abs() + 1.0));
        }
    }
}
