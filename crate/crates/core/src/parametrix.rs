//! Low-energy parametrix G(k) = G_1 + G_2 + G_3 + G_4 on the zero channel,
//! its error E(k), the weighted Hilbert-Schmidt norms, the finite-rank fix
//! at k = 0 and the exact resolvent R(k) = G(k)(I + S(k)).
//!
//! Every operator is an N x N matrix acting on nodal values of the axis grid:
//! (O f)_i = sum_j K(z_i, z_j) f_j m_j, so that O = K diag(m) for the kernel
//! K.  Composition is then the plain matrix product.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit;
use crate::keylemma::{build_with_setup, cutoff_source, fit_regime, KeyApproximation, KeySetup, RegimeFit};
use crate::linalg::Tridiag;
use crate::model::{Boundary, GridSpec, ModelManifold, Region, Side};
use crate::product_kernels::DiscreteProductResolvent;
use crate::quad;
use crate::specfun::{self, ilg};

/// Relative singular-value threshold below which a direction counts as null.
pub const NULL_THRESHOLD: f64 = 1e-9;

const SIDES: [Side; 2] = [Side::Minus, Side::Plus];

fn idx(side: Side) -> usize {
    match side {
        Side::Minus => 0,
        Side::Plus => 1,
    }
}

/// k-independent data: cutoffs on the grid, the key-lemma approximations for
/// v_+- = -Delta phi_+-, basepoints and the weight w.
#[derive(Clone, Debug)]
pub struct ParametrixSetup {
    pub key: KeySetup,
    pub q: usize,
    pub phi: [Vec<f64>; 2],
    pub zeta: Vec<f64>,
    /// Nodes of the Dirichlet domain of the interior parametrix.
    pub interior: (usize, usize),
    pub approx: [KeyApproximation; 2],
    /// Product-grid node of each basepoint.
    pub basepoint: [usize; 2],
    /// Product-grid node of each axis node, per end.
    prod_of_axis: [Vec<Option<usize>>; 2],
    /// w: 1 on K, 1/r on E_+, 1/(r log r) on E_-.
    pub weight: Vec<f64>,
    /// Optional finite-rank correction (phi_i, psi_i).
    pub fix: Option<FiniteRankFix>,
}

impl ParametrixSetup {
    pub fn new(m: &ModelManifold, spec: GridSpec, q: usize) -> Result<Self> {
        let key = KeySetup::new(m, spec)?;
        let g = &key.grid;
        let phi = [
            g.s.iter().map(|&s| m.cutoffs.phi_at(m, Side::Minus, s)[0]).collect::<Vec<_>>(),
            g.s.iter().map(|&s| m.cutoffs.phi_at(m, Side::Plus, s)[0]).collect::<Vec<_>>(),
        ];
        let zeta: Vec<f64> = g.s.iter().map(|&s| m.cutoffs.zeta_at(s)[0]).collect();
        let interior = g.range_within(m.cutoffs.interior_domain);
        let vm = cutoff_source(&key, Side::Minus)?;
        let vp = cutoff_source(&key, Side::Plus)?;
        let approx = [build_with_setup(key.clone(), &vm, q)?, build_with_setup(key.clone(), &vp, q)?];
        let mut prod_of_axis = [vec![None; g.len()], vec![None; g.len()]];
        for (side, pg) in [(Side::Minus, &key.minus), (Side::Plus, &key.plus)] {
            for (j, a) in pg.axis_index.iter().enumerate() {
                if let Some(i) = a {
                    prod_of_axis[idx(side)][*i] = Some(j);
                }
            }
        }
        let basepoint = [key.minus.nearest(m.basepoint_minus), key.plus.nearest(m.basepoint_plus)];
        for (side, b) in SIDES.iter().zip(basepoint) {
            let pg = if *side == Side::Minus { &key.minus } else { &key.plus };
            if let Some(i) = pg.axis_index[b] {
                if phi[idx(*side)][i] != 0.0 {
                    return Err(Error::Config("basepoint inside the support of phi".into()));
                }
            }
        }
        let big_r = m.gluing_radius();
        let weight = (0..g.len())
            .map(|i| {
                let s = g.s[i];
                if s.abs() <= big_r {
                    1.0
                } else if s > 0.0 {
                    1.0 / s
                } else {
                    1.0 / (-s * (-s).ln())
                }
            })
            .collect();
        Ok(Self { key, q, phi, zeta, interior, approx, basepoint, prod_of_axis, weight, fix: None })
    }

    pub fn len(&self) -> usize {
        self.key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.key.is_empty()
    }

    pub fn mass(&self) -> &[f64] {
        &self.key.grid.mass
    }

    /// (Delta_h + k^2) with radiation rows, as a tridiagonal matrix (times M).
    fn helmholtz(&self, k: f64) -> Result<Tridiag> {
        let (l, r) = self.key.grid.radiation(k)?;
        self.key.grid.operator().matrix(k * k, l, r)
    }

    /// D = diag(w^{-1} sqrt m): maps nodal values to orthonormal coordinates of L^2_w.
    pub fn weighted_scale(&self) -> Vec<f64> {
        self.weight.iter().zip(self.mass()).map(|(w, m)| m.sqrt() / w).collect()
    }

    /// Operator in orthonormal coordinates of L^2_w.
    pub fn to_weighted(&self, o: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.weighted_scale();
        DMatrix::from_fn(o.nrows(), o.ncols(), |i, j| d[i] * o[(i, j)] / d[j])
    }

    /// Hilbert-Schmidt norm on L^2_w of an operator matrix.
    pub fn hs_norm(&self, o: &DMatrix<f64>) -> f64 {
        self.to_weighted(o).norm()
    }

    /// Product-grid node of axis node i on the given end, where one exists.
    pub fn product_index(&self, side: Side, i: usize) -> Option<usize> {
        self.prod_of_axis[idx(side)][i]
    }

    /// Indices of nodes with |s| <= a.
    pub fn compact_nodes(&self, a: f64) -> Vec<usize> {
        let (i0, i1) = self.key.grid.range_within(a);
        (i0..=i1).collect()
    }
}

/// The pieces of G(k) and the data entering the rank-two part of the error.
#[derive(Clone, Debug)]
pub struct ParametrixPieces {
    pub k: f64,
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    pub g3: DMatrix<f64>,
    pub g4: DMatrix<f64>,
    /// u_+-(., k) on the axis.
    pub u: [Vec<f64>; 2],
    /// (Delta + k^2) u_+- - v_+-.
    pub residual: [Vec<f64>; 2],
    /// Kernel values P_+-(z°, z') phi_+-(z') on the axis.
    pub right: [Vec<f64>; 2],
    /// P_+-(z°, R_max) and the decaying profile beyond it, for the HS tail.
    tail_anchor: [f64; 2],
}

impl ParametrixPieces {
    pub fn total(&self) -> DMatrix<f64> {
        &self.g1 + &self.g2 + &self.g3 + &self.g4
    }

    pub fn pretotal(&self) -> DMatrix<f64> {
        &self.g1 + &self.g2 + &self.g3
    }
}

pub fn assemble_parametrix(setup: &ParametrixSetup, k: f64) -> Result<ParametrixPieces> {
    if !(k > 0.0 && k <= 0.5) {
        return Err(Error::Domain(format!("parametrix needs k in (0, 1/2], got {k}")));
    }
    let n = setup.len();
    let mass = setup.mass();
    let g = &setup.key.grid;
    let mut g1 = DMatrix::zeros(n, n);
    let mut g3 = DMatrix::zeros(n, n);
    let mut u = [vec![], vec![]];
    let mut residual = [vec![], vec![]];
    let mut right = [vec![0.0; n], vec![0.0; n]];
    let mut tail_anchor = [0.0; 2];
    for side in SIDES {
        let sd = idx(side);
        let pg = if side == Side::Minus { setup.key.minus.clone() } else { setup.key.plus.clone() };
        let pr = DiscreteProductResolvent::new(pg, k)?;
        let phi = &setup.phi[sd];
        let map = &setup.prod_of_axis[sd];
        let sup: Vec<usize> = (0..n).filter(|&i| phi[i] != 0.0).collect();
        for &j in &sup {
            let pj = map[j].ok_or_else(|| Error::Config("phi support leaves the product region".into()))?;
            for &i in &sup {
                let pi = map[i].unwrap();
                g1[(i, j)] += phi[i] * phi[j] * pr.kernel[(pi, pj)] * mass[j];
            }
            right[sd][j] = pr.kernel[(setup.basepoint[sd], pj)] * phi[j];
        }
        let last = pr.grid.len() - 1;
        tail_anchor[sd] = pr.kernel[(setup.basepoint[sd], last)];
        let e = setup.approx[sd].eval(k)?;
        for j in 0..n {
            if right[sd][j] == 0.0 {
                continue;
            }
            let c = right[sd][j] * mass[j];
            for i in 0..n {
                g3[(i, j)] += e.u[i] * c;
            }
        }
        u[sd] = e.u;
        residual[sd] = e.residual;
    }
    // interior parametrix: Dirichlet inverse on |s| <= interior_domain
    let (i0, i1) = setup.interior;
    let d = g.operator().sub_block(i0, i1)?.matrix(k * k, Boundary::Dirichlet, Boundary::Dirichlet)?.inverse()?;
    let mut g2 = DMatrix::zeros(n, n);
    for j in i0..=i1 {
        for i in i0..=i1 {
            let w = setup.zeta[i] * setup.zeta[j] * (1.0 - setup.phi[0][i] * setup.phi[0][j] - setup.phi[1][i] * setup.phi[1][j]);
            if w != 0.0 {
                g2[(i, j)] = w * d[(i - i0, j - i0)] * mass[j];
            }
        }
    }
    let g4 = match &setup.fix {
        Some(f) => f.operator(mass),
        None => DMatrix::zeros(n, n),
    };
    Ok(ParametrixPieces { k, g1, g2, g3, g4, u, residual, right, tail_anchor })
}

/// M^{-1} A O column by column.
fn apply_operator(a: &Tridiag, mass: &[f64], o: &DMatrix<f64>) -> DMatrix<f64> {
    let n = o.nrows();
    let mut out = DMatrix::zeros(n, o.ncols());
    for j in 0..o.ncols() {
        let col: Vec<f64> = o.column(j).iter().copied().collect();
        let y = a.apply(&col);
        for i in 0..n {
            out[(i, j)] = y[i] / mass[i];
        }
    }
    out
}

/// E = E' + E'' for the pre-parametrix, plus (Delta + k^2) G_4 when a fix is set.
#[derive(Clone, Debug)]
pub struct ErrorOperator {
    pub k: f64,
    pub e_prime: DMatrix<f64>,
    pub e_second: DMatrix<f64>,
    /// (Delta + k^2) G_4.
    pub fix_part: DMatrix<f64>,
}

impl ErrorOperator {
    /// Full E(k).
    pub fn total(&self) -> DMatrix<f64> {
        &self.e_prime + &self.e_second + &self.fix_part
    }

    /// E~(k) = E' + E''.
    pub fn pre(&self) -> DMatrix<f64> {
        &self.e_prime + &self.e_second
    }
}

pub fn error_kernel(setup: &ParametrixSetup, pieces: &ParametrixPieces) -> Result<ErrorOperator> {
    let n = setup.len();
    let mass = setup.mass();
    let a = setup.helmholtz(pieces.k)?;
    let mut e = apply_operator(&a, mass, &pieces.pretotal());
    for i in 0..n {
        e[(i, i)] -= 1.0;
    }
    let mut e2 = DMatrix::zeros(n, n);
    for sd in 0..2 {
        for j in 0..n {
            let c = pieces.right[sd][j] * mass[j];
            if c == 0.0 {
                continue;
            }
            for i in 0..n {
                e2[(i, j)] += pieces.residual[sd][i] * c;
            }
        }
    }
    let fix_part = apply_operator(&a, mass, &pieces.g4);
    Ok(ErrorOperator { k: pieces.k, e_prime: e - &e2, e_second: e2, fix_part })
}

// ---------------------------------------------------------------------------
// Weighted Hilbert-Schmidt norms.

/// Decaying zero-channel profile r^{-nu} K_nu(k r) on an end of Euclidean
/// dimension n, normalised to 1 at r_max (nu = (n - 2) / 2).
pub fn exterior_profile(n: usize, k: f64, r_max: f64) -> Result<impl Fn(f64) -> f64> {
    let nu = 0.5 * (n as f64 - 2.0);
    let anchor = specfun::bessel_ik_scaled(nu, k * r_max)?.k;
    Ok(move |r: f64| {
        let s = specfun::bessel_ik_scaled(nu, k * r).map(|b| b.k).unwrap_or(0.0);
        (r / r_max).powf(-nu) * (-k * (r - r_max)).exp() * s / anchor
    })
}

/// Integral over r > r_max of f(r) c r^{n-1} dr in the variable log r, cut
/// where e^{-kr} is negligible.
pub(crate) fn exterior_integral<F: Fn(f64) -> f64>(n: usize, c: f64, k: f64, r_max: f64, f: F) -> Result<f64> {
    let t0 = r_max.ln();
    let t1 = (60.0 / k).ln().max(t0) + 1.0;
    Ok(quad::integrate(
        |t| {
            let r = t.exp();
            f(r) * c * r.powi(n as i32 - 1) * r
        },
        t0,
        t1,
        0.0,
        1e-11,
    )?
    .value)
}

/// Norm in L^2_{w^{-1}} of the right factor P(z°, .) phi, including the part
/// beyond R_max where the factor continues as the decaying profile.
pub fn right_factor_norm(setup: &ParametrixSetup, pieces: &ParametrixPieces, side: Side) -> Result<(f64, f64)> {
    let sd = idx(side);
    let grid: f64 = pieces.right[sd]
        .iter()
        .zip(&setup.weight)
        .zip(setup.mass())
        .map(|((b, w), m)| b * b * w * w * m)
        .sum();
    let m = &setup.key.model;
    let end = m.end(side);
    let nd = end.euclidean_dim;
    let c = end.weight_constant();
    let r_max = if side == Side::Minus { setup.key.grid.r_max_minus() } else { setup.key.grid.r_max_plus() };
    let profile = exterior_profile(nd, pieces.k, r_max)?;
    let w2 = |r: f64| if side == Side::Minus { 1.0 / (r * r.ln()).powi(2) } else { 1.0 / (r * r) };
    let b0 = pieces.tail_anchor[sd];
    let tail = exterior_integral(nd, c, pieces.k, r_max, |r| {
        let p = profile(r);
        b0 * b0 * p * p * w2(r)
    })?;
    Ok((grid.sqrt(), (grid + tail).sqrt()))
}

/// L^2_w norm of a left factor on the grid.
pub fn left_factor_norm(setup: &ParametrixSetup, f: &[f64]) -> f64 {
    f.iter().zip(&setup.weight).zip(setup.mass()).map(|((x, w), m)| x * x * m / (w * w)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsReport {
    pub k: f64,
    pub ilg: f64,
    /// ||E''||_HS with the tails beyond R_max.
    pub e_second: f64,
    /// The same restricted to the grid (equals the Frobenius norm of the matrix).
    pub e_second_grid: f64,
    pub e_prime: f64,
}

/// E'' is a sum of two outer products with disjoint right supports, so its
/// HS norm is the root sum of squared products of factor norms.
pub fn hs_report(setup: &ParametrixSetup, pieces: &ParametrixPieces, err: &ErrorOperator) -> Result<HsReport> {
    let mut full = 0.0;
    let mut grid = 0.0;
    for side in SIDES {
        let l = left_factor_norm(setup, &pieces.residual[idx(side)]);
        let (rg, rf) = right_factor_norm(setup, pieces, side)?;
        full += (l * rf).powi(2);
        grid += (l * rg).powi(2);
    }
    Ok(HsReport {
        k: pieces.k,
        ilg: ilg(pieces.k)?,
        e_second: full.sqrt(),
        e_second_grid: grid.sqrt(),
        e_prime: setup.hs_norm(&err.e_prime),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsScaling {
    pub q: usize,
    pub reports: Vec<HsReport>,
    /// log-log slope of ||E''|| against ilg k.
    pub slope: f64,
}

pub fn hs_scaling(setup: &ParametrixSetup, js: &[u32]) -> Result<HsScaling> {
    let mut reports = Vec::new();
    for &j in js {
        let k = (-(2f64.powi(j as i32))).exp();
        let p = assemble_parametrix(setup, k)?;
        let e = error_kernel(setup, &p)?;
        reports.push(hs_report(setup, &p, &e)?);
    }
    let x: Vec<f64> = reports.iter().map(|r| r.ilg).collect();
    let y: Vec<f64> = reports.iter().map(|r| r.e_second).collect();
    Ok(HsScaling { q: setup.q, slope: fit::loglog_slope(&x, &y)?.slope, reports })
}

// ---------------------------------------------------------------------------
// Envelopes of the error.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelopes {
    /// Largest |s| of a row of E' above roundoff.
    pub left_support: f64,
    pub prime: Vec<RegimeFit>,
    pub second: Vec<RegimeFit>,
}

fn column_sup(o: &DMatrix<f64>, mass: &[f64], j: usize) -> f64 {
    o.column(j).iter().fold(0.0, |a: f64, x| a.max(x.abs())) / mass[j]
}

/// Fits of sup_z |E'(z, z')| and sup_z |E''(z, z')| against the envelope
/// shapes in z' (constant on K, r'^{1-n} resp. r'^{2-n} on E_+, r'^{-1}
/// resp. 1 + |log kr'| on E_-, times e^{-ckr'}).
pub fn error_envelopes(setup: &ParametrixSetup, err: &ErrorOperator) -> ErrorEnvelopes {
    let g = &setup.key.grid;
    let mass = setup.mass();
    let n = setup.len();
    let big_r = setup.key.model.gluing_radius();
    let np = g.n_plus as f64;
    let k = err.k;
    let scale = err.e_prime.amax();
    let mut left_support: f64 = 0.0;
    // E' = E - E'' cancels O(1) entries, so rows off the support sit at a
    // roundoff floor near 1e-9 of the peak
    for i in 0..n {
        if err.e_prime.row(i).amax() > 1e-7 * scale {
            left_support = left_support.max(g.s[i].abs());
        }
    }
    let fits = |o: &DMatrix<f64>, second: bool| {
        let (mut kk, mut pl, mut mi) = (vec![], vec![], vec![]);
        for j in 0..n {
            let r = g.r[j];
            if k * r > 20.0 {
                continue;
            }
            let v = column_sup(o, mass, j);
            match g.region[j] {
                _ if g.s[j].abs() <= big_r => kk.push((0.0, v, 1.0)),
                Region::Plus => pl.push((k * r, v, if second { r.powf(2.0 - np) } else { r.powf(1.0 - np) })),
                Region::Minus => mi.push((k * r, v, if second { 1.0 + (k * r).ln().abs() } else { 1.0 / r })),
                _ => {}
            }
        }
        vec![fit_regime("K", &kk), fit_regime("E+", &pl), fit_regime("E-", &mi)]
    };
    let prime = fits(&err.e_prime, false);
    let second = fits(&err.e_second, true);
    ErrorEnvelopes { left_support, prime, second }
}

// ---------------------------------------------------------------------------
// Finite-rank fix.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteRankFix {
    /// Null vectors of I + E(0), L^2-orthonormal.
    pub phis: Vec<Vec<f64>>,
    /// Neck-supported psi_i.
    pub psis: Vec<Vec<f64>>,
    pub sigma_before: f64,
    pub sigma_after: f64,
}

impl FiniteRankFix {
    /// G_4 = sum psi_i <phi_i, .> as an operator matrix.
    pub fn operator(&self, mass: &[f64]) -> DMatrix<f64> {
        let n = mass.len();
        let mut o = DMatrix::zeros(n, n);
        for (phi, psi) in self.phis.iter().zip(&self.psis) {
            for j in 0..n {
                let c = phi[j] * mass[j];
                for i in 0..n {
                    o[(i, j)] += psi[i] * c;
                }
            }
        }
        o
    }

    pub fn rank(&self) -> usize {
        self.phis.len()
    }
}

/// Smallest singular value of I + E in L^2_w, relative to the largest.
pub fn relative_sigma_min(setup: &ParametrixSetup, e: &DMatrix<f64>) -> f64 {
    let n = e.nrows();
    let a = setup.to_weighted(&(e + DMatrix::identity(n, n)));
    let sv = a.singular_values();
    sv.min() / sv.max()
}

/// Candidate neck bumps for psi: smooth bumps of half-width `w` centred on a
/// lattice in |s| <= 3.
fn candidate_bumps(setup: &ParametrixSetup) -> Vec<Vec<f64>> {
    let s = &setup.key.grid.s;
    let w = 0.6;
    let mut out = Vec::new();
    let mut c = -3.0 + w;
    while c <= 3.0 - w + 1e-12 {
        out.push(s.iter().map(|&x| {
            let t = (x - c) / w;
            if t.abs() < 1.0 { (1.0 - t * t).powi(4) } else { 0.0 }
        }).collect());
        c += 0.3;
    }
    out
}

/// Null space of I + E(0) and neck-supported psi_i whose Laplacians span a
/// complement of its range.
pub fn finite_rank_fix(setup: &ParametrixSetup, e0: &DMatrix<f64>) -> Result<FiniteRankFix> {
    let n = e0.nrows();
    let d = setup.weighted_scale();
    let mass = setup.mass();
    let a = setup.to_weighted(&(e0 + DMatrix::identity(n, n)));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let sigma_before = svd.singular_values.min() / smax;
    let null: Vec<usize> = (0..n).filter(|&i| svd.singular_values[i] < NULL_THRESHOLD * smax).collect();
    if null.is_empty() {
        return Ok(FiniteRankFix { phis: vec![], psis: vec![], sigma_before, sigma_after: sigma_before });
    }
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    // null vectors in nodal values, then L^2-orthonormalised
    let mut phis: Vec<Vec<f64>> = Vec::new();
    for &i in &null {
        let mut p: Vec<f64> = (0..n).map(|j| vt[(i, j)] / d[j]).collect();
        for q in &phis {
            let c: f64 = (0..n).map(|j| p[j] * q[j] * mass[j]).sum();
            for j in 0..n {
                p[j] -= c * q[j];
            }
        }
        let nn: f64 = (0..n).map(|j| p[j] * p[j] * mass[j]).sum::<f64>().sqrt();
        phis.push(p.iter().map(|x| x / nn).collect());
    }
    // cokernel directions (weighted coordinates) and weighted Laplacians of the bumps
    let cands = candidate_bumps(setup);
    let lap: Vec<Vec<f64>> = cands.iter().map(|b| setup.key.laplacian(b)).collect::<Result<_>>()?;
    let mm = null.len();
    let c: DMatrix<f64> = DMatrix::from_fn(mm, cands.len(), |a, b| (0..n).map(|j| u[(j, null[a])] * d[j] * lap[b][j]).sum());
    let cs = c.clone().svd(false, true);
    let cv = cs.v_t.as_ref().unwrap();
    if cs.singular_values.min() < 1e-8 * cs.singular_values.max().max(1e-300) || cands.len() < mm {
        return Err(Error::ComplementFailed(format!(
            "Laplacians of the neck bumps miss the cokernel (singular values {:?})",
            cs.singular_values.as_slice()
        )));
    }
    let psis: Vec<Vec<f64>> = (0..mm)
        .map(|a| (0..n).map(|j| (0..cands.len()).map(|b| cv[(a, b)] * cands[b][j]).sum()).collect())
        .collect();
    let mut fix = FiniteRankFix { phis, psis, sigma_before, sigma_after: f64::NAN };
    let lap_g4 = {
        let a0 = setup.key.grid.operator().matrix(0.0, Boundary::Robin(0.0), Boundary::Robin(0.0))?;
        apply_operator(&a0, mass, &fix.operator(mass))
    };
    fix.sigma_after = relative_sigma_min(setup, &(e0 + lap_g4));
    if fix.sigma_after < 10.0 * NULL_THRESHOLD {
        return Err(Error::ComplementFailed(format!("smallest singular value {} after the fix", fix.sigma_after)));
    }
    Ok(fix)
}

/// E(0) approximated by E'(k) at a tiny k (E'' vanishes in the limit and E'
/// has a limit).
pub fn zero_energy_error(setup: &ParametrixSetup) -> Result<DMatrix<f64>> {
    let k = (-512f64).exp();
    let p = assemble_parametrix(setup, k)?;
    let e = error_kernel(setup, &p)?;
    Ok(e.e_prime + e.fix_part)
}

/// Compute the fix at k = 0 and store it in the setup.
pub fn install_fix(setup: &mut ParametrixSetup) -> Result<&FiniteRankFix> {
    setup.fix = None;
    let e0 = zero_energy_error(setup)?;
    let fix = finite_rank_fix(setup, &e0)?;
    setup.fix = Some(fix);
    Ok(setup.fix.as_ref().unwrap())
}

// ---------------------------------------------------------------------------
// Inversion and the resolvent.

#[derive(Clone, Debug)]
pub struct ResolventData {
    pub k: f64,
    pub g: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub s: DMatrix<f64>,
    /// R(k) = G (I + S) as an operator matrix.
    pub r: DMatrix<f64>,
}

pub fn invert_error(setup: &ParametrixSetup, e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = e.nrows();
    let a = e + DMatrix::identity(n, n);
    let sig = relative_sigma_min(setup, e);
    if sig < NULL_THRESHOLD {
        return Err(Error::Singular(format!("I + E has relative singular value {sig}")));
    }
    let inv = a.lu().try_inverse().ok_or_else(|| Error::Singular("I + E".into()))?;
    Ok(inv - DMatrix::identity(n, n))
}

pub fn resolvent_data(setup: &ParametrixSetup, k: f64) -> Result<ResolventData> {
    let p = assemble_parametrix(setup, k)?;
    let err = error_kernel(setup, &p)?;
    let e = err.total();
    let s = invert_error(setup, &e)?;
    let g = p.total();
    let n = g.nrows();
    let r = &g * (DMatrix::identity(n, n) + &s);
    Ok(ResolventData { k, g, e, s, r })
}

impl ResolventData {
    /// Kernel R(z_i, z_j) with respect to the measure.
    pub fn kernel(&self, mass: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.r.nrows(), self.r.ncols(), |i, j| self.r[(i, j)] / mass[j])
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.r * DVector::from_column_slice(v)).iter().copied().collect()
    }
}

pub fn resolvent(setup: &ParametrixSetup, k: f64, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != setup.len() {
        return Err(Error::InvalidDimension("source length differs from the grid".into()));
    }
    Ok(resolvent_data(setup, k)?.apply(v))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionReport {
    pub k: f64,
    /// ||(I + E)(I + S) - I||_HS in L^2_w.
    pub inverse_residual: f64,
    /// ||S - (-E + E^2 + E S E)||_HS / ||S||_HS.
    pub identity_residual: f64,
    /// sup over r of r^M |S(z, z')| for M = 0..=4 (left variable).
    pub left_decay: Vec<f64>,
    /// max |R - R^T| / max |R| on the kernel.
    pub symmetry: f64,
    /// Smallest kernel entry over the largest.
    pub positivity: f64,
    /// max |(Delta + k^2) R - I| (operator entries).
    pub defining_residual: f64,
}

pub fn inversion_report(setup: &ParametrixSetup, d: &ResolventData) -> Result<InversionReport> {
    let n = d.e.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let prod = (&id + &d.e) * (&id + &d.s) - &id;
    let ids = -&d.e + &d.e * &d.e + &d.e * &d.s * &d.e;
    let mass = setup.mass();
    let g = &setup.key.grid;
    let kern_s = DMatrix::from_fn(n, n, |i, j| d.s[(i, j)] / mass[j]);
    let left_decay = (0..=4)
        .map(|m| (0..n).map(|i| g.r[i].max(1.0).powi(m) * kern_s.row(i).amax()).fold(0.0, f64::max))
        .collect();
    let kr = d.kernel(mass);
    let scale = kr.amax();
    let symmetry = (&kr - kr.transpose()).amax() / scale;
    let positivity = kr.min() / scale;
    let a = setup.helmholtz(d.k)?;
    let mut res = apply_operator(&a, mass, &d.r);
    for i in 0..n {
        res[(i, i)] -= 1.0;
    }
    Ok(InversionReport {
        k: d.k,
        inverse_residual: setup.hs_norm(&prod),
        identity_residual: setup.hs_norm(&(&d.s - ids)) / setup.hs_norm(&d.s).max(1e-300),
        left_decay,
        symmetry,
        positivity,
        defining_residual: res.amax(),
    })
}

/// max over i, j in the compact set of |R(k1) - R(k2) - (k2^2 - k1^2) R(k1) R(k2)|
/// (kernel entries), relative to max |R(k1) - R(k2)|.  The product R(k1) R(k2)
/// integrates over the whole manifold: beyond R_max both kernels continue as
/// decaying profiles, and that part is added by quadrature.
pub fn resolvent_identity_defect(setup: &ParametrixSetup, a: &ResolventData, b: &ResolventData, compact: f64) -> Result<f64> {
    let mass = setup.mass();
    let g = &setup.key.grid;
    let n = setup.len();
    let m = &setup.key.model;
    let mut prod = &a.r * &b.r;
    for (side, e, r_max) in [(Side::Minus, 0usize, g.r_max_minus()), (Side::Plus, n - 1, g.r_max_plus())] {
        let end = m.end(side);
        let pa = exterior_profile(end.euclidean_dim, a.k, r_max)?;
        let pb = exterior_profile(end.euclidean_dim, b.k, r_max)?;
        let ext = exterior_integral(end.euclidean_dim, end.weight_constant(), a.k.min(b.k), r_max, |r| pa(r) * pb(r))?;
        for i in 0..n {
            let left = a.r[(i, e)] / mass[e] * ext;
            for j in 0..n {
                prod[(i, j)] += left * b.r[(e, j)];
            }
        }
    }
    let diff = &a.r - &b.r;
    let rhs = (b.k * b.k - a.k * a.k) * prod;
    let nodes = setup.compact_nodes(compact);
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for &i in &nodes {
        for &j in &nodes {
            num = num.max((diff[(i, j)] - rhs[(i, j)]).abs() / mass[j]);
            den = den.max(diff[(i, j)].abs() / mass[j]);
        }
    }
    Ok(num / den)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub ks: Vec<f64>,
    pub sup_kernel: Vec<f64>,
    /// log-log slope of sup |R| on the compact set against |log k|.
    pub slope: f64,
}

pub fn divergence_rate(setup: &ParametrixSetup, js: &[u32], compact: f64) -> Result<DivergenceReport> {
    let nodes = setup.compact_nodes(compact);
    let mass = setup.mass();
    let mut ks = Vec::new();
    let mut sup = Vec::new();
    for &j in js {
        let k = (-(2f64.powi(j as i32))).exp();
        let d = resolvent_data(setup, k)?;
        let mut m: f64 = 0.0;
        for &a in &nodes {
            for &b in &nodes {
                m = m.max((d.r[(a, b)] / mass[b]).abs());
            }
        }
        ks.push(k);
        sup.push(m);
    }
    let logs: Vec<f64> = ks.iter().map(|k: &f64| -k.ln()).collect();
    Ok(DivergenceReport { slope: fit::loglog_slope(&logs, &sup)?.slope, ks, sup_kernel: sup })
}

/// Largest k in the lattice where I + E(k) stays invertible (relative
/// smallest singular value above 10 x the null threshold).
pub fn select_k0(setup: &ParametrixSetup, lattice: &[f64]) -> Result<f64> {
    let mut ks = lattice.to_vec();
    ks.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for k in ks {
        let p = assemble_parametrix(setup, k)?;
        let e = error_kernel(setup, &p)?.total();
        if relative_sigma_min(setup, &e) >= 10.0 * NULL_THRESHOLD {
            return Ok(k);
        }
    }
    Err(Error::Singular("no k in the lattice gives an invertible I + E".into()))
}

// ---------------------------------------------------------------------------
// ilg k expansion of R(k) v.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlgSeries {
    pub q: usize,
    pub ilg: Vec<f64>,
    /// c_0..c_q on the compact nodes.
    pub coefficients: Vec<Vec<f64>>,
    pub nodes: Vec<usize>,
    /// sup |R(k) v - sum_{i<=q} c_i ilg^i| at each k, with the c_i taken from
    /// a degree q + 2 fit.
    pub residual: Vec<f64>,
    /// log-log slope of the residual against ilg k.
    pub order: f64,
}

pub fn ilg_expansion(setup: &ParametrixSetup, v: &[f64], compact: f64, q: usize, js: &[u32]) -> Result<IlgSeries> {
    let nodes = setup.compact_nodes(compact);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &j in js {
        let k = (-(2f64.powi(j as i32))).exp();
        let rv = resolvent(setup, k, v)?;
        xs.push(ilg(k)?);
        ys.push(nodes.iter().map(|&i| rv[i]).collect::<Vec<f64>>());
    }
    if js.len() < q + 1 {
        return Err(Error::FitUnstable("fewer energies than coefficients".into()));
    }
    let coefficients = fit::poly_fit_vectors(&xs, &ys, q)?;
    let hi = fit::poly_fit_vectors(&xs, &ys, (q + 2).min(js.len() - 1))?;
    let residual: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            y.iter()
                .enumerate()
                .map(|(a, yv)| (yv - (0..=q).map(|d| hi[d][a] * x.powi(d as i32)).sum::<f64>()).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let order = fit::loglog_slope(&xs, &residual)?.slope;
    Ok(IlgSeries { q, ilg: xs, coefficients, nodes, residual, order })
}

// ---------------------------------------------------------------------------
// Kernel snapshots: one JSON header line, then row-major little-endian f64.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub label: String,
    pub k: f64,
    pub rows: usize,
    pub cols: usize,
    pub s: Vec<f64>,
    pub r: Vec<f64>,
    pub mass: Vec<f64>,
    pub weight: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelSnapshot {
    pub header: SnapshotHeader,
    /// Kernel values (with respect to the measure), row-major.
    pub values: Vec<f64>,
}

impl KernelSnapshot {
    pub fn from_operator(setup: &ParametrixSetup, label: &str, k: f64, o: &DMatrix<f64>) -> Self {
        let g = &setup.key.grid;
        let mass = setup.mass();
        let mut values = Vec::with_capacity(o.nrows() * o.ncols());
        for i in 0..o.nrows() {
            for j in 0..o.ncols() {
                values.push(o[(i, j)] / mass[j]);
            }
        }
        Self {
            header: SnapshotHeader {
                label: label.into(),
                k,
                rows: o.nrows(),
                cols: o.ncols(),
                s: g.s.clone(),
                r: g.r.clone(),
                mass: mass.to_vec(),
                weight: setup.weight.clone(),
            },
            values,
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.header.rows, self.header.cols, &self.values)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let head = serde_json::to_string(&self.header).map_err(|e| Error::Io(e.to_string()))?;
        w.write_all(head.as_bytes()).map_err(|e| Error::Io(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::Io(e.to_string()))?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::Io(e.to_string()))?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|e| Error::Io(e.to_string()))?;
        let nl = buf.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Io("snapshot has no header line".into()))?;
        let header: SnapshotHeader = serde_json::from_slice(&buf[..nl]).map_err(|e| Error::Io(e.to_string()))?;
        let body = &buf[nl + 1..];
        if body.len() != 8 * header.rows * header.cols {
            return Err(Error::Io(format!("snapshot body has {} bytes, expected {}", body.len(), 8 * header.rows * header.cols)));
        }
        let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { header, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, GeometryConfig};
    use std::sync::OnceLock;

    fn setup() -> &'static ParametrixSetup {
        static S: OnceLock<ParametrixSetup> = OnceLock::new();
        S.get_or_init(|| {
            let cfg = GeometryConfig::default();
            let m = build_model(&cfg).unwrap();
            let spec = GridSpec::from_config(&cfg).with_r_max(200.0, 200.0);
            ParametrixSetup::new(&m, spec, 2).unwrap()
        })
    }

    /// Same-grid direct solve of (Delta_h + k^2) u = v with the radiation
    /// rows, by hand from fluxes and masses.
    fn oracle(s: &ParametrixSetup, k: f64, v: &[f64]) -> Vec<f64> {
        let g = &s.key.grid;
        let n = g.len();
        let tl = crate::model::decay_rate(2, 0, k, g.r_max_minus()).unwrap();
        let tr = crate::model::decay_rate(g.n_plus, 0, k, g.r_max_plus()).unwrap();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        for i in 0..n {
            b[i] = k * k * g.mass[i];
            if i > 0 {
                a[i] = -g.flux[i - 1];
                b[i] += g.flux[i - 1];
            }
            if i + 1 < n {
                c[i] = -g.flux[i];
                b[i] += g.flux[i];
            }
        }
        b[0] += g.v[0] * tl;
        b[n - 1] += g.v[n - 1] * tr;
        let mut d: Vec<f64> = v.iter().zip(&g.mass).map(|(x, m)| x * m).collect();
        for i in 1..n {
            let w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        let mut u = vec![0.0; n];
        u[n - 1] = d[n - 1] / b[n - 1];
        for i in (0..n - 1).rev() {
            u[i] = (d[i] - c[i] * u[i + 1]) / b[i];
        }
        u
    }

    fn bump(s: &ParametrixSetup) -> Vec<f64> {
        s.key.grid.s.iter().map(|&x| if (x - 0.3).abs() < 1.0 { (1.0 - (x - 0.3).powi(2)).powi(3) } else { 0.0 }).collect()
    }

    #[test]
    fn shared_masses_agree() {
        let s = setup();
        for pg in [&s.key.minus, &s.key.plus] {
            for (j, a) in pg.axis_index.iter().enumerate() {
                if let Some(i) = a {
                    if s.key.grid.r[*i] >= 1.5 {
                        assert!((pg.mass[j] - s.key.grid.mass[*i]).abs() < 1e-12 * pg.mass[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn supports_and_zero_energy_left_factor() {
        let s = setup();
        let p = assemble_parametrix(s, 1e-3).unwrap();
        let g = &s.key.grid;
        for i in 0..s.len() {
            if s.phi[0][i] == 0.0 && s.phi[1][i] == 0.0 {
                assert!(p.g1.row(i).amax() == 0.0 && p.g1.column(i).amax() == 0.0);
            }
        }
        // at k = 0 the approximant is -phi_1, and u + phi_cutoff is harmonic
        for side in 0..2 {
            let u = s.approx[side].eval(0.0).unwrap().u;
            let phi = s.approx[side].phi();
            let w: Vec<f64> = (0..s.len()).map(|i| u[i] + s.phi[side][i]).collect();
            let lap = s.key.laplacian(&w).unwrap();
            let scale = s.key.laplacian(&s.phi[side]).unwrap().iter().fold(0.0, |a: f64, b| a.max(b.abs()));
            for i in 0..s.len() {
                assert!((u[i] + phi[i]).abs() < 1e-12, "{} {}", g.s[i], u[i]);
                assert!(lap[i].abs() < 1e-8 * scale, "{} {}", g.s[i], lap[i]);
            }
        }
    }

    #[test]
    fn error_column_by_direct_evaluation() {
        let s = setup();
        let k = 1e-3;
        let p = assemble_parametrix(s, k).unwrap();
        let e = error_kernel(s, &p).unwrap().pre();
        let g = &s.key.grid;
        let n = s.len();
        let tl = crate::model::decay_rate(2, 0, k, g.r_max_minus()).unwrap();
        let tr = crate::model::decay_rate(g.n_plus, 0, k, g.r_max_plus()).unwrap();
        let o = p.pretotal();
        for j in [g.nearest(-40.0), g.nearest(-3.6), g.nearest(0.0), g.nearest(2.5), g.nearest(60.0)] {
            let col: Vec<f64> = o.column(j).iter().copied().collect();
            // hand-rolled Helmholtz stencil with the radiation rows
            let mut res = vec![0.0; n];
            for i in 0..n {
                let mut y = k * k * g.mass[i] * col[i];
                if i > 0 {
                    y += g.flux[i - 1] * (col[i] - col[i - 1]);
                }
                if i + 1 < n {
                    y += g.flux[i] * (col[i] - col[i + 1]);
                }
                if i == 0 {
                    y += g.v[0] * tl * col[0];
                }
                if i == n - 1 {
                    y += g.v[n - 1] * tr * col[n - 1];
                }
                res[i] = y / g.mass[i] - if i == j { 1.0 } else { 0.0 };
            }
            let scale = res.iter().fold(0.0, |a: f64, b| a.max(b.abs()));
            for i in 0..n {
                assert!((res[i] - e[(i, j)]).abs() <= 1e-6 * scale, "{j} {i}: {} {}", res[i], e[(i, j)]);
            }
        }
    }

    #[test]
    fn error_is_left_compact_and_fits_envelopes() {
        let s = setup();
        let p = assemble_parametrix(s, 1e-2).unwrap();
        let e = error_kernel(s, &p).unwrap();
        let env = error_envelopes(s, &e);
        assert!(env.left_support <= 4.6, "{env:?}");
        for f in env.prime.iter().chain(&env.second) {
            assert!(f.big_c.is_finite(), "{f:?}");
        }
    }

    #[test]
    fn inversion_and_resolvent() {
        let s = setup();
        let d = resolvent_data(s, 1e-3).unwrap();
        let rep = inversion_report(s, &d).unwrap();
        assert!(rep.inverse_residual < 1e-8, "{rep:?}");
        assert!(rep.identity_residual < 1e-8, "{rep:?}");
        assert!(rep.symmetry < 1e-8, "{rep:?}");
        assert!(rep.positivity > -1e-10, "{rep:?}");
        assert!(rep.defining_residual < 1e-7, "{rep:?}");
        assert!(rep.left_decay.iter().all(|x| x.is_finite()));
        let v = bump(s);
        let rv = d.apply(&v);
        let o = oracle(s, 1e-3, &v);
        let nodes = s.compact_nodes(5.0);
        let scale = nodes.iter().map(|&i| o[i].abs()).fold(0.0, f64::max);
        for &i in &nodes {
            assert!((rv[i] - o[i]).abs() < 1e-5 * scale);
        }
    }

    #[test]
    fn resolvent_identity() {
        let s = setup();
        let a = resolvent_data(s, 1e-2).unwrap();
        let b = resolvent_data(s, 3e-2).unwrap();
        let d = resolvent_identity_defect(s, &a, &b, 5.0).unwrap();
        assert!(d < 1e-6, "{d}");
    }

    #[test]
    fn fix_reports_rank_and_restores_invertibility() {
        let s = setup();
        let e0 = zero_energy_error(s).unwrap();
        let fix = finite_rank_fix(s, &e0).unwrap();
        assert!(fix.sigma_after >= 10.0 * NULL_THRESHOLD);
        // manufacture a null vector: (I + E0)(I - P_x) - I with x neck-supported
        let n = s.len();
        let mass = s.mass();
        let x: Vec<f64> = s.key.grid.s.iter().map(|&t| if t.abs() < 1.0 { (1.0 - t * t).powi(3) } else { 0.0 }).collect();
        let nx: f64 = x.iter().zip(mass).map(|(a, m)| a * a * m).sum();
        let px = DMatrix::from_fn(n, n, |i, j| x[i] * x[j] * mass[j] / nx);
        let id = DMatrix::<f64>::identity(n, n);
        let e_sing = (&id + &e0) * (&id - px) - &id;
        assert!(relative_sigma_min(s, &e_sing) < NULL_THRESHOLD);
        let f2 = finite_rank_fix(s, &e_sing).unwrap();
        assert_eq!(f2.rank(), 1 + fix.rank());
        assert!(f2.sigma_after >= 10.0 * NULL_THRESHOLD);
        for psi in &f2.psis {
            for (i, v) in psi.iter().enumerate() {
                if s.key.grid.s[i].abs() > 3.0 {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn hs_q2_decays_q1_does_not() {
        let s = setup();
        let h2 = hs_scaling(s, &[3, 4, 5, 6, 7]).unwrap();
        assert!(h2.slope > 0.4, "{h2:?}");
        let cfg = GeometryConfig::default();
        let m = build_model(&cfg).unwrap();
        let s1 = ParametrixSetup::new(&m, s.key.grid.spec, 1).unwrap();
        let h1 = hs_scaling(&s1, &[3, 4, 5, 6, 7]).unwrap();
        assert!(h1.slope <= 0.05, "{h1:?}");
        // continuity at k = 0 of E' in HS
        let a = &h2.reports;
        assert!((a[3].e_prime - a[4].e_prime).abs() < 0.05 * a[4].e_prime);
    }

    #[test]
    fn expansion_of_resolvent() {
        let s = setup();
        let v: Vec<f64> = s.approx[0].v.clone();
        // the series coefficients grow like beta^i with |beta| near 12, so only
        // ilg <= 1/64 is inside the window where three terms are accurate
        let ser = ilg_expansion(s, &v, 4.0, 2, &[6, 7, 8, 9]).unwrap();
        // c_0 is the zero-energy solution
        let phi = s.approx[0].phi();
        let scale = ser.nodes.iter().map(|&i| phi[i].abs()).fold(0.0, f64::max);
        for (a, &i) in ser.nodes.iter().enumerate() {
            assert!((ser.coefficients[0][a] + phi[i]).abs() < 1e-3 * scale, "{i} {} {}", ser.coefficients[0][a], phi[i]);
        }
        assert!(ser.order >= 2.0, "{ser:?}");
    }

    #[test]
    fn kernel_is_within_log_k() {
        // O(|log k|) is only an upper bound: the 3-dimensional end makes the
        // zero-energy Green function finite, so sup |R| converges at rate ilg k
        let s = setup();
        let d = divergence_rate(s, &[4, 5, 6, 7, 8], 4.0).unwrap();
        assert!(d.slope < 1.1, "{d:?}");
        let inc: Vec<f64> = d.sup_kernel.windows(2).map(|w| w[1] - w[0]).collect();
        for w in inc.windows(2) {
            assert!(w[1] > 0.0 && w[1] < 0.8 * w[0], "{d:?}");
        }
        let k0 = select_k0(s, &[0.5, 0.1, 1e-2, 1e-3]).unwrap();
        assert!(k0 > 0.0);
    }

    #[test]
    fn snapshot_round_trip() {
        let s = setup();
        let p = assemble_parametrix(s, 1e-2).unwrap();
        let snap = KernelSnapshot::from_operator(s, "G1", 1e-2, &p.g1);
        let mut buf = Vec::new();
        snap.write_to(&mut buf).unwrap();
        let back = KernelSnapshot::read_from(&buf[..]).unwrap();
        assert_eq!(back, snap);
        assert!(KernelSnapshot::read_from(&buf[..buf.len() - 3]).is_err());
    }
}

