//! Global Laplace problem on the compact part |s| <= R with exact exterior
//! DtN conditions, the limit constant beta, and the log-growing harmonic
//! function U.
//!
//! The Laplacian is the positive one, Delta_h = M^{-1} L.  For the zero
//! channel the DtN multipliers at R are 0 (minus end, where the bounded
//! extension is constant) and (n_+ - 2)/R (plus end, extension r^{2-n_+}).
//! Because the fluxes are closed-form integrals of 1/v, the discrete
//! solution of a zero-channel problem coincides with the solution on any
//! longer axis grid with the same radiation conditions.

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonic_ext::dtn_multiplier;
use crate::linalg::Tridiag;
use crate::model::grid::inv_weight_integral;
use crate::model::{radial_laplacian, AxisGrid, Boundary, GridSpec, ModeChannel, ModelManifold, RadialOperator, Region, Side};
use crate::quad::GaussRule;

/// Discretised neck problem for one channel on |s| <= R.
#[derive(Clone, Debug)]
pub struct NeckProblem {
    pub channel: ModeChannel,
    /// The compact grid (its ends are s = -R and s = +R).
    pub grid: AxisGrid,
    pub op: RadialOperator,
    pub left: Boundary,
    pub right: Boundary,
    /// Compact-grid node of each operator row.
    pub nodes: Vec<usize>,
    matrix: Tridiag,
}

impl NeckProblem {
    pub fn new(m: &ModelManifold, spec: GridSpec, channel: ModeChannel) -> Result<Self> {
        let big_r = m.gluing_radius();
        let grid = AxisGrid::new(m, spec.with_r_max(big_r, big_r))?;
        let (op, left, right, nodes) = if channel.is_zero() {
            let tau = dtn_multiplier(&m.plus, &ModeChannel::zero(Side::Plus), big_r)?;
            (grid.operator(), Boundary::Robin(0.0), Boundary::Robin(tau), (0..grid.len()).collect())
        } else {
            let op = radial_laplacian(m, &grid, &channel)?;
            let tau = dtn_multiplier(m.end(channel.end), &channel, big_r)?;
            let mut nodes: Vec<usize> = (0..grid.len())
                .filter(|&i| grid.side_radius(channel.end, i).map_or(false, |r| r > m.end(channel.end).junction + 1e-12))
                .collect();
            if channel.end == Side::Minus {
                nodes.reverse();
            }
            (op, Boundary::Dirichlet, Boundary::Robin(tau), nodes)
        };
        let matrix = op.matrix(0.0, left, right)?;
        Ok(Self { channel, grid, op, left, right, nodes, matrix })
    }

    pub fn zero_channel(m: &ModelManifold, spec: GridSpec) -> Result<Self> {
        Self::new(m, spec, ModeChannel::zero(Side::Minus))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Delta_h u including the DtN rows.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.apply(u).iter().zip(&self.op.mass).map(|(y, w)| y / w).collect()
    }

    pub fn inner(&self, u: &[f64], w: &[f64]) -> f64 {
        self.op.inner(u, w)
    }

    /// Dense matrix of Delta_h (for symmetry and conditioning checks).
    pub fn dense(&self) -> DMatrix<f64> {
        let mut a = self.matrix.to_dense();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                a[(i, j)] /= self.op.mass[i];
            }
        }
        a
    }

    fn solve_raw(&self, f: &[f64]) -> Result<Vec<f64>> {
        let b: Vec<f64> = f.iter().zip(&self.op.mass).map(|(v, w)| v * w).collect();
        self.matrix.solve(&b).map_err(|e| match e {
            Error::Singular(s) => Error::Singular(format!("neck problem has a kernel ({s}); grid or model bug")),
            other => other,
        })
    }
}

/// Solution of Delta u = F on the compact part, with its exterior continuations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalHarmonicSolution {
    pub channel: ModeChannel,
    /// Coordinates of the operator rows (s for the zero channel, r otherwise).
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    /// Limit on the minus end at infinity (the constant channel's value at R).
    pub beta: f64,
    /// Value at r = R on the end where the exterior profile decays.
    pub boundary_value: f64,
    pub radius: f64,
    /// Exterior profile exponent on the decaying end: u = b (R/r)^{exponent}.
    pub exponent: f64,
    pub n_plus: usize,
    /// Largest |Delta_h u - F| over the rows.
    pub residual: f64,
}

impl GlobalHarmonicSolution {
    /// Exterior value at radius r >= R on `side` (zero channel).
    pub fn exterior(&self, side: Side, r: f64) -> f64 {
        match side {
            Side::Minus => self.beta,
            Side::Plus => self.boundary_value * (self.radius / r).powf(self.exponent),
        }
    }

    /// Zero-channel values on any axis grid that contains the compact grid.
    pub fn on_grid(&self, g: &AxisGrid) -> Result<Vec<f64>> {
        if !self.channel.is_zero() {
            return Err(Error::Unsupported("on_grid is for the zero channel".into()));
        }
        let (i0, i1) = g.compact;
        if i1 - i0 + 1 != self.values.len() || (g.s[i0] - self.x[0]).abs() > 1e-12 {
            return Err(Error::InvalidDimension("grid compact part differs from the solve grid".into()));
        }
        Ok((0..g.len())
            .map(|i| {
                if i < i0 {
                    self.exterior(Side::Minus, g.r[i])
                } else if i > i1 {
                    self.exterior(Side::Plus, g.r[i])
                } else {
                    self.values[i - i0]
                }
            })
            .collect())
    }

    /// u times the radial flux v d_r u through the sphere of radius r; tends
    /// to zero on both ends for a bounded / decaying harmonic function.
    pub fn boundary_energy_flux(&self, m: &ModelManifold, side: Side, r: f64) -> f64 {
        match side {
            Side::Minus => 0.0,
            Side::Plus => {
                let u = self.exterior(Side::Plus, r);
                let du = -self.exponent * u / r;
                u * m.plus.weight(r) * du
            }
        }
    }
}

/// Interior Delta_h of an axis function f(s) at the compact nodes, using
/// neighbours beyond R (so functions that are discrete-harmonic outside a
/// compact set give compactly supported sources).
pub fn compact_laplacian(m: &ModelManifold, spec: GridSpec, f: &dyn Fn(f64) -> f64) -> Result<Vec<f64>> {
    let big_r = m.gluing_radius();
    let g = AxisGrid::new(m, spec.with_r_max(2.0 * big_r, 2.0 * big_r))?;
    let op = g.operator();
    let u: Vec<f64> = g.s.iter().map(|&s| f(s)).collect();
    let lu = op.matrix(0.0, Boundary::Robin(0.0), Boundary::Robin(0.0))?.apply(&u);
    let (i0, i1) = g.compact;
    Ok((i0..=i1).map(|i| lu[i] / g.mass[i]).collect())
}

/// Solve Delta u = F with the DtN rows.  F is given at the operator rows and
/// must vanish at the outer boundary row(s).
pub fn solve_laplace(p: &NeckProblem, f: &[f64]) -> Result<GlobalHarmonicSolution> {
    if f.len() != p.len() {
        return Err(Error::InvalidDimension(format!("source has {} values, problem {}", f.len(), p.len())));
    }
    let outer: &[usize] = if p.channel.is_zero() { &[0, p.len() - 1] } else { &[p.len() - 1] };
    let scale = f.iter().fold(0.0, |a: f64, b| a.max(b.abs()));
    let mut f = f.to_vec();
    for &i in outer {
        if f[i].abs() > 1e-10 * scale {
            return Err(Error::Domain("source must vanish at the DtN boundary".into()));
        }
        f[i] = 0.0;
    }
    let u = p.solve_raw(&f)?;
    let au = p.apply(&u);
    let residual = au.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let radius = p.grid.r_max_plus();
    let (beta, boundary_value, exponent) = if p.channel.is_zero() {
        (u[0], u[p.len() - 1], p.grid.n_plus as f64 - 2.0)
    } else {
        let n = if p.channel.end == Side::Minus { 2.0 } else { p.grid.n_plus as f64 };
        (0.0, u[p.len() - 1], n - 2.0 + p.channel.m as f64)
    };
    Ok(GlobalHarmonicSolution {
        channel: p.channel,
        x: p.op.x.clone(),
        values: u,
        beta,
        boundary_value,
        radius,
        exponent,
        n_plus: p.grid.n_plus,
        residual,
    })
}

/// U = chi_minus log r + w_2, harmonic, log r + c_1 on the minus end and
/// a_plus r^{2-n_+} on the plus end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHarmonic {
    pub solution: GlobalHarmonicSolution,
    pub c1: f64,
    pub plus_coefficient: f64,
    /// Largest |Delta_h U| over the compact rows.
    pub residual: f64,
}

impl LogHarmonic {
    pub fn on_grid(&self, g: &AxisGrid) -> Result<Vec<f64>> {
        let mut u = self.solution.on_grid(g)?;
        for i in 0..g.compact.0 {
            u[i] = g.r[i].ln() + self.c1;
        }
        let n = self.solution.n_plus as f64;
        for i in g.compact.1 + 1..g.len() {
            u[i] = self.plus_coefficient * g.r[i].powf(2.0 - n);
        }
        Ok(u)
    }

    pub fn exterior(&self, side: Side, r: f64) -> f64 {
        match side {
            Side::Minus => r.ln() + self.c1,
            Side::Plus => self.plus_coefficient * r.powf(2.0 - self.solution.n_plus as f64),
        }
    }
}

pub fn build_log_harmonic(m: &ModelManifold, spec: GridSpec) -> Result<LogHarmonic> {
    let p = NeckProblem::zero_channel(m, spec)?;
    let w1 = |s: f64| match m.end_radius(Side::Minus, s) {
        Some(r) => m.cutoffs.chi_minus.value(r) * r.ln(),
        None => 0.0,
    };
    let lw = compact_laplacian(m, spec, &w1)?;
    let f: Vec<f64> = lw.iter().map(|x| -x).collect();
    let w2 = solve_laplace(&p, &f)?;
    let mut sol = w2.clone();
    for (u, &s) in sol.values.iter_mut().zip(&p.op.x) {
        *u += w1(s);
    }
    let big_r = m.gluing_radius();
    let c1 = w2.beta;
    let n = m.plus.euclidean_dim as f64;
    let plus_coefficient = w2.boundary_value * big_r.powf(n - 2.0);
    sol.beta = f64::INFINITY;
    sol.boundary_value = w2.boundary_value;
    let residual = compact_laplacian(m, spec, &|s: f64| {
        if s < -big_r {
            (-s).ln() + c1
        } else if s > big_r {
            plus_coefficient * s.powf(2.0 - n)
        } else {
            let i = p.grid.nearest(s);
            sol.values[i]
        }
    })?
    .iter()
    .fold(0.0, |a: f64, b| a.max(b.abs()));
    Ok(LogHarmonic { solution: sol, c1, plus_coefficient, residual })
}

/// Continuum U(s) = c_minus * integral_s^infinity dt / v(t), the harmonic
/// zero-channel function with flux -c_minus that decays on the plus end.
pub fn continuum_log_harmonic(m: &ModelManifold, s: f64) -> f64 {
    let gl = GaussRule::new(16);
    let sp = m.plus.junction.max(s);
    let n = m.plus.euclidean_dim as f64;
    let tail = sp.powf(2.0 - n) / ((n - 2.0) * m.plus.weight_constant());
    let head = if s < sp { inv_weight_integral(m, &gl, s, sp) } else { 0.0 };
    m.minus.weight_constant() * (head + tail)
}

/// c_1 of the continuum U.
pub fn continuum_c1(m: &ModelManifold) -> f64 {
    let big_r = m.gluing_radius();
    continuum_log_harmonic(m, -big_r) - big_r.ln()
}

/// L^2_{w^{-1}} weight: |u|^2 w^2 integrated, w = 1 on K, r^{-1} on E_+,
/// (r log r)^{-1} on E_-.
pub fn dual_weight(g: &AxisGrid, i: usize, big_r: f64) -> f64 {
    let r = g.r[i];
    match g.region[i] {
        Region::Minus if r > big_r => 1.0 / (r * r.ln()),
        Region::Plus if r > big_r => 1.0 / r,
        _ => 1.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualWeightReport {
    pub r_max: Vec<f64>,
    /// Truncated ||U||^2 in L^2_{w^{-1}} per R_max.
    pub u_norm2: Vec<f64>,
    /// Slope of ||U||^2 against log R_max over the sweep.
    pub u_log_slope: f64,
    /// Truncated norms of the constant on E_- and E_+ separately.
    pub const_minus_norm2: Vec<f64>,
    pub const_plus_norm2: Vec<f64>,
    /// Smallest singular value of the harmonic space, normalised by its
    /// norm on K, at the largest R_max, one entry per grid refinement.
    pub sigma_min: Vec<f64>,
    pub nondecreasing: bool,
    pub verdict: bool,
}

/// Harmonic zero-channel functions on a truncated grid are spanned by 1 and U.
/// Their L^2_{w^{-1}} norms relative to their norms on K grow without bound
/// with R_max; the smallest singular value of that aspect ratio measures
/// how far the space is from containing an L^2_{w^{-1}} element.
pub fn dual_weight_uniqueness_probe(m: &ModelManifold, spec: GridSpec, r_max: &[f64]) -> Result<DualWeightReport> {
    let big_r = m.gluing_radius();
    let gram = |g: &AxisGrid, cut: f64, basis: &[Vec<f64>], region: Option<Region>| {
        let mut gm = DMatrix::<f64>::zeros(basis.len(), basis.len());
        for i in 0..g.len() {
            if g.r[i] > cut || region.map_or(false, |rg| g.region[i] != rg || g.r[i] <= big_r) {
                continue;
            }
            let w2 = dual_weight(g, i, big_r).powi(2) * g.mass[i];
            for a in 0..basis.len() {
                for b in 0..basis.len() {
                    gm[(a, b)] += basis[a][i] * basis[b][i] * w2;
                }
            }
        }
        gm
    };
    let top = r_max.iter().cloned().fold(big_r, f64::max);
    let mut sigma_min = Vec::new();
    let mut out = None;
    let mut level_spec = spec;
    for level in 0..3 {
        let g = AxisGrid::new(m, level_spec.with_r_max(top, top))?;
        let lh = build_log_harmonic(m, level_spec)?;
        let u = lh.on_grid(&g)?;
        let one = vec![1.0; g.len()];
        let basis = vec![one.clone(), u.clone()];
        let gk = gram(&g, big_r, &basis, None);
        let gt = gram(&g, top, &basis, None);
        sigma_min.push(generalized_min(&gt, &gk)?.sqrt());
        if level == 0 {
            let mut u_norm2 = Vec::new();
            let mut cm = Vec::new();
            let mut cp = Vec::new();
            for &rm in r_max {
                u_norm2.push(gram(&g, rm, &[u.clone()], None)[(0, 0)]);
                cm.push(gram(&g, rm, &[one.clone()], Some(Region::Minus))[(0, 0)]);
                cp.push(gram(&g, rm, &[one.clone()], Some(Region::Plus))[(0, 0)]);
            }
            let logs: Vec<f64> = r_max.iter().map(|r| r.ln()).collect();
            let slope = crate::fit::line_fit(&logs, &u_norm2)?.slope;
            out = Some((u_norm2, slope, cm, cp));
        }
        level_spec = level_spec.refined();
    }
    let (u_norm2, u_log_slope, const_minus_norm2, const_plus_norm2) = out.unwrap();
    let nondecreasing = sigma_min.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-6));
    let verdict = sigma_min.iter().all(|&s| s > 1.0) && nondecreasing && u_log_slope > 0.0;
    Ok(DualWeightReport {
        r_max: r_max.to_vec(),
        u_norm2,
        u_log_slope,
        const_minus_norm2,
        const_plus_norm2,
        sigma_min,
        nondecreasing,
        verdict,
    })
}

/// Smallest lambda with A x = lambda B x, B positive definite.
fn generalized_min(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let chol = b.clone().cholesky().ok_or_else(|| Error::Singular("Gram matrix on K".into()))?;
    let l = chol.l();
    let li = l.clone().try_inverse().ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
    let c = &li * a * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    Ok(SymmetricEigen::new(c).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Boundary symbol b = i xi_n - |xi'| applied to the bounded solution
/// e^{-(|xi'| + i xi_n) t} of the model ODE, at t = 0.  Also returns the ODE
/// residual of that solution.
pub fn lopatinskii_symbol(xi_tangential: &[f64], xi_n: f64) -> (Complex<f64>, Complex<f64>) {
    let a = xi_tangential.iter().map(|x| x * x).sum::<f64>().sqrt();
    let i = Complex::new(0.0, 1.0);
    let lam = -(Complex::new(a, 0.0) + i * xi_n);
    // u = e^{lam t}: u(0) = 1, u' = lam, u'' = lam^2
    let (u, du, ddu) = (Complex::new(1.0, 0.0), lam, lam * lam);
    let d_t = -i * du;
    let b = i * (xi_n * u + d_t) - a * u;
    let ode = -ddu - 2.0 * i * xi_n * du + (a * a + xi_n * xi_n) * u;
    (b, ode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, GeometryConfig};
    use proptest::prelude::*;

    fn setup() -> (ModelManifold, GridSpec) {
        let cfg = GeometryConfig::default();
        (build_model(&cfg).unwrap(), GridSpec::from_config(&cfg))
    }

    fn bump(s: f64, c: f64, w: f64) -> f64 {
        let t = (s - c) / w;
        if t.abs() < 1.0 {
            (1.0 - t * t).powi(4)
        } else {
            0.0
        }
    }

    #[test]
    fn homogeneous_problem_has_only_zero() {
        let (m, spec) = setup();
        let p = NeckProblem::zero_channel(&m, spec).unwrap();
        let u = solve_laplace(&p, &vec![0.0; p.len()]).unwrap();
        assert_eq!(u.values.iter().fold(0.0, |a: f64, b| a.max(b.abs())), 0.0);
        assert_eq!(u.beta, 0.0);
        let ch = ModeChannel { end: Side::Minus, m: 1, j: 0, l: 0 };
        let p1 = NeckProblem::new(&m, spec, ch).unwrap();
        assert!(solve_laplace(&p1, &vec![0.0; p1.len()]).unwrap().values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn laplacian_of_a_bump_is_inverted() {
        let (m, spec) = setup();
        let p = NeckProblem::zero_channel(&m, spec).unwrap();
        let phi = |s: f64| bump(s, 0.2, 0.7);
        let f = compact_laplacian(&m, spec, &phi).unwrap();
        let u = solve_laplace(&p, &f).unwrap();
        for (x, s) in u.values.iter().zip(&p.op.x) {
            assert!((x - phi(*s)).abs() < 1e-11);
        }
        assert!(u.beta.abs() < 1e-11 && u.residual < 1e-8);
    }

    #[test]
    fn minus_cutoff_source() {
        let (m, spec) = setup();
        let p = NeckProblem::zero_channel(&m, spec).unwrap();
        let phi = |s: f64| m.cutoffs.phi_at(&m, Side::Minus, s)[0];
        let f: Vec<f64> = compact_laplacian(&m, spec, &phi).unwrap().iter().map(|x| -x).collect();
        let u = solve_laplace(&p, &f).unwrap();
        assert!(u.residual < 1e-8);
        // u + phi_minus is harmonic and bounded, hence constant, and decays on E_+
        for (x, s) in u.values.iter().zip(&p.op.x) {
            assert!((x + phi(*s)).abs() < 1e-10);
        }
        let fine = solve_laplace(
            &NeckProblem::zero_channel(&m, spec.refined()).unwrap(),
            &compact_laplacian(&m, spec.refined(), &phi).unwrap().iter().map(|x| -x).collect::<Vec<_>>(),
        )
        .unwrap();
        assert!((u.beta - fine.beta).abs() < 1e-4);
    }

    #[test]
    fn beta_stable_under_refinement() {
        let (m, spec) = setup();
        let f = |s: f64| bump(s, -0.3, 0.5);
        let beta = |sp: GridSpec| {
            let p = NeckProblem::zero_channel(&m, sp).unwrap();
            let rhs: Vec<f64> = p.op.x.iter().map(|&s| f(s)).collect();
            solve_laplace(&p, &rhs).unwrap().beta
        };
        let (b0, b1, b2) = (beta(spec), beta(spec.refined()), beta(spec.refined().refined()));
        assert!((b0 - b1).abs() < 1e-4 && (b1 - b2).abs() < 0.3 * (b0 - b1).abs() + 1e-12);
        // continuum: beta = integral of F U / c_minus, by Green's identity
        let u = |s: f64| continuum_log_harmonic(&m, s);
        let gl = GaussRule::new(40);
        let exact = gl.integrate(-0.8, 0.2, |s| f(s) * u(s) * m.weight(s)) / m.minus.weight_constant();
        assert!((b2 - exact).abs() < 1e-5, "{b2} {exact}");
    }

    #[test]
    fn log_harmonic_matches_continuum() {
        let (m, spec) = setup();
        let lh = build_log_harmonic(&m, spec).unwrap();
        assert!(lh.residual < 1e-8, "{}", lh.residual);
        assert!((lh.c1 - continuum_c1(&m)).abs() < 1e-9, "{} {}", lh.c1, continuum_c1(&m));
        for (x, s) in lh.solution.values.iter().zip(&lh.solution.x) {
            assert!((x - continuum_log_harmonic(&m, *s)).abs() < 1e-9);
        }
        // r U bounded on E_+ (n_+ = 3)
        let ra: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|&r| r * lh.exterior(Side::Plus, r)).collect();
        assert!((ra[0] - ra[2]).abs() < 1e-12 * ra[0].abs());
    }

    #[test]
    fn operator_is_self_adjoint() {
        let (m, spec) = setup();
        for ch in [ModeChannel::zero(Side::Minus), ModeChannel { end: Side::Plus, m: 2, j: 0, l: 0 }] {
            let p = NeckProblem::new(&m, spec, ch).unwrap();
            let u: Vec<f64> = (0..p.len()).map(|i| (0.37 * i as f64).sin()).collect();
            let w: Vec<f64> = (0..p.len()).map(|i| (0.11 * i as f64).cos() + 0.2).collect();
            let a = p.inner(&p.apply(&u), &w);
            let b = p.inner(&u, &p.apply(&w));
            assert!((a - b).abs() < 1e-10 * a.abs().max(b.abs()));
        }
    }

    #[test]
    fn energy_flux_vanishes() {
        let (m, spec) = setup();
        let p = NeckProblem::zero_channel(&m, spec).unwrap();
        let rhs: Vec<f64> = p.op.x.iter().map(|&s| bump(s, 0.0, 0.6)).collect();
        let u = solve_laplace(&p, &rhs).unwrap();
        let f: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|&r| u.boundary_energy_flux(&m, Side::Plus, r).abs()).collect();
        assert!(f[1] < 0.2 * f[0] && f[2] < 0.2 * f[1]);
    }

    #[test]
    fn dual_weight_probe() {
        let (m, spec) = setup();
        let rs = [1e2, 1e3, 1e4, 1e5];
        let rep = dual_weight_uniqueness_probe(&m, spec, &rs).unwrap();
        assert!(rep.verdict, "{rep:?}");
        assert!(rep.u_norm2.windows(2).all(|w| w[1] > w[0]));
        // the constant converges on E_- and diverges on E_+
        let cm = &rep.const_minus_norm2;
        assert!(cm[3] - cm[2] < cm[2] - cm[1]);
        assert!(rep.const_plus_norm2[3] > 5.0 * rep.const_plus_norm2[2]);
    }

    #[test]
    fn boundary_condition_is_elliptic() {
        for (xi, xn) in [(vec![1.0, 0.0], 0.3), (vec![0.2, -0.5], -2.0), (vec![3.0], 0.0)] {
            let a = xi.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
            let (b, ode) = lopatinskii_symbol(&xi, xn);
            assert!(ode.norm() < 1e-12);
            assert!((b - Complex::new(-2.0 * a, 0.0)).norm() < 1e-12);
            assert!(b.norm() > 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]
        #[test]
        fn beta_is_linear(c1 in -0.8f64..0.8, c2 in -0.8f64..0.8, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let (m, spec) = setup();
            let p = NeckProblem::zero_channel(&m, spec).unwrap();
            let f1: Vec<f64> = p.op.x.iter().map(|&s| bump(s, c1, 0.3)).collect();
            let f2: Vec<f64> = p.op.x.iter().map(|&s| bump(s, c2, 0.2)).collect();
            let sum: Vec<f64> = f1.iter().zip(&f2).map(|(x, y)| a * x + b * y).collect();
            let b1 = solve_laplace(&p, &f1).unwrap().beta;
            let b2 = solve_laplace(&p, &f2).unwrap().beta;
            let bs = solve_laplace(&p, &sum).unwrap().beta;
            prop_assert!((bs - a * b1 - b * b2).abs() < 1e-10 * (1.0 + bs.abs()));
        }
    }
}
