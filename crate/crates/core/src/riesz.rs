//! Riesz transform experiments on the zero channel.
//!
//! Delta^{-1/2} = (2/pi) int_0^inf (Delta + k^2)^{-1} dk is split at k0 into
//! F_<(sqrt Delta) and F_>(sqrt Delta).  The low-energy part is assembled by
//! quadrature in t = log(1/k) of the discrete resolvent; the high-energy part
//! is checked as a spectral multiplier channel by channel.  All kernels act on
//! radial (zero-channel) functions, so the p -> p lower bounds are lower
//! bounds for the full operator.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fit;
use crate::linalg;
use crate::model::{radial_laplacian, AxisGrid, Boundary, ModeChannel, ModelManifold, RadialOperator, Region, Side};
use crate::parametrix::{exterior_integral, exterior_profile, ParametrixSetup};
use crate::product_kernels::{DiscreteProductResolvent, ProductGrid};
use crate::quad::{self, GaussRule};
use crate::specfun::ilg_ext;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RieszSplit {
    pub k0: f64,
}

impl RieszSplit {
    pub fn new(k0: f64) -> Result<Self> {
        if !(k0 > 0.0 && k0.is_finite()) {
            return Err(Error::Domain(format!("split point k0 = {k0} must be positive")));
        }
        Ok(Self { k0 })
    }

    /// (2/pi) int_0^k0 (xi^2 + k^2)^{-1} dk.
    pub fn f_low(&self, xi: f64) -> f64 {
        2.0 / (PI * xi) * (0.5 * PI - (xi / self.k0).atan())
    }

    /// (2/pi) int_k0^inf (xi^2 + k^2)^{-1} dk.
    pub fn f_high(&self, xi: f64) -> f64 {
        if xi == 0.0 {
            return 2.0 / (PI * self.k0);
        }
        2.0 / (PI * xi) * (xi / self.k0).atan()
    }
}

// ---------------------------------------------------------------------------
// Quadrature in k.

/// Gauss-Legendre panels of fixed width in log k.  Each panel is done with
/// two rules; their difference is the error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KQuad {
    pub panel: f64,
    /// Span in log k covered below k0 (or above, for the high range).
    pub depth: f64,
    pub fine: usize,
    pub coarse: usize,
}

impl Default for KQuad {
    fn default() -> Self {
        Self { panel: 1.0, depth: 36.0, fine: 8, coarse: 5 }
    }
}

/// Nodes and weights of dk over an interval of log k.
fn k_nodes(rule: &KQuad, t0: f64, t1: f64, order: usize) -> Vec<(f64, f64)> {
    let gl = GaussRule::new(order);
    let np = ((t1 - t0) / rule.panel).ceil().max(1.0) as usize;
    let w = (t1 - t0) / np as f64;
    let mut out = Vec::with_capacity(np * order);
    for i in 0..np {
        let a = t0 + w * i as f64;
        for (t, wt) in gl.points(a, a + w) {
            let k = t.exp();
            out.push((k, wt * k));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct KIntegral {
    pub value: Vec<f64>,
    /// |fine - coarse| per entry plus the neglected tail near k = 0.
    pub error: Vec<f64>,
    /// Largest |integrand| * k at the deepest node, relative to the value.
    pub tail: f64,
}

/// int_{k_lo}^{k_hi} f(k) dk for vector-valued f, in log k.
pub fn k_integral<F>(rule: &KQuad, k_lo: f64, k_hi: f64, mut f: F) -> Result<KIntegral>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    if !(k_lo > 0.0 && k_hi > k_lo) {
        return Err(Error::Domain("k-integral needs 0 < k_lo < k_hi".into()));
    }
    let (t0, t1) = (k_lo.ln(), k_hi.ln());
    let mut fine: Option<Vec<f64>> = None;
    for (k, w) in k_nodes(rule, t0, t1, rule.fine) {
        let y = f(k)?;
        let acc = fine.get_or_insert_with(|| vec![0.0; y.len()]);
        for (a, v) in acc.iter_mut().zip(&y) {
            *a += w * v;
        }
    }
    let mut coarse: Option<Vec<f64>> = None;
    for (k, w) in k_nodes(rule, t0, t1, rule.coarse) {
        let y = f(k)?;
        let acc = coarse.get_or_insert_with(|| vec![0.0; y.len()]);
        for (a, v) in acc.iter_mut().zip(&y) {
            *a += w * v;
        }
    }
    let low = f(k_lo)?;
    let value = fine.unwrap();
    let coarse = coarse.unwrap();
    let scale = value.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tail = low.iter().fold(0.0f64, |m, v| m.max(v.abs())) * k_lo / scale.max(f64::MIN_POSITIVE);
    let error = value.iter().zip(&coarse).zip(&low).map(|((a, b), l)| (a - b).abs() + (l * k_lo).abs()).collect();
    Ok(KIntegral { value, error, tail })
}

// ---------------------------------------------------------------------------
// Low-energy kernel.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// F_<(sqrt Delta) itself.
    Scalar,
    /// d/ds_z F_<(sqrt Delta)(z, z'): the zero-channel Riesz kernel.
    Gradient,
}

/// A kernel on the axis nodes, with respect to the measure.
#[derive(Clone, Debug)]
pub struct DiscretizedKernel {
    pub kind: KernelKind,
    pub k0: f64,
    /// Truncation radius of the minus end.
    pub r_max: f64,
    pub s: Vec<f64>,
    pub mass: Vec<f64>,
    pub values: DMatrix<f64>,
    pub error: DMatrix<f64>,
}

impl DiscretizedKernel {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn r_max_minus(&self) -> f64 {
        self.r_max
    }

    /// Drops `layer` nodes at each truncation radius.  The last grid interval
    /// can be much shorter than its neighbour there, and the one-sided
    /// derivative rows next to it are not representative of the operator.
    pub fn trimmed(&self, layer: usize) -> DiscretizedKernel {
        let n = self.len();
        let keep: Vec<usize> = (layer..n - layer).collect();
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])]);
        DiscretizedKernel {
            kind: self.kind,
            k0: self.k0,
            r_max: self.r_max,
            s: keep.iter().map(|&i| self.s[i]).collect(),
            mass: keep.iter().map(|&i| self.mass[i]).collect(),
            values: pick(&self.values),
            error: pick(&self.error),
        }
    }

    /// Matrix acting on plain l^p coordinates x_j = m_j^{1/p} f_j.
    pub fn lp_matrix(&self, p: f64) -> DMatrix<f64> {
        let q = 1.0 - 1.0 / p;
        let m = &self.mass;
        DMatrix::from_fn(self.len(), self.len(), |i, j| m[i].powf(1.0 / p) * self.values[(i, j)] * m[j].powf(q))
    }
}

/// Derivative stencil of the piecewise quadratic through neighbours.
pub fn derivative_weights(s: &[f64], i: usize) -> [(usize, f64); 3] {
    let n = s.len();
    if i == 0 {
        let h = s[1] - s[0];
        return [(0, -1.0 / h), (1, 1.0 / h), (1, 0.0)];
    }
    if i == n - 1 {
        let h = s[n - 1] - s[n - 2];
        return [(n - 2, -1.0 / h), (n - 1, 1.0 / h), (n - 1, 0.0)];
    }
    let h1 = s[i] - s[i - 1];
    let h2 = s[i + 1] - s[i];
    [
        (i - 1, -h2 / (h1 * (h1 + h2))),
        (i, (h2 - h1) / (h1 * h2)),
        (i + 1, h1 / (h2 * (h1 + h2))),
    ]
}

pub fn axis_derivative(s: &[f64], u: &[f64]) -> Vec<f64> {
    (0..s.len()).map(|i| derivative_weights(s, i).iter().map(|&(j, w)| w * u[j]).sum()).collect()
}

fn resolvent_matrix(op: &RadialOperator, g: &AxisGrid, k: f64) -> Result<DMatrix<f64>> {
    let (l, r) = g.radiation(k)?;
    op.green_matrix(k * k, l, r)
}

fn row_derivative(s: &[f64], a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, a.ncols());
    for i in 0..n {
        for (j, w) in derivative_weights(s, i) {
            if w != 0.0 {
                let row = a.row(j) * w;
                let mut o = out.row_mut(i);
                o += row;
            }
        }
    }
    out
}

/// (2/pi) int_0^k0 of the discrete resolvent kernel (or its z-derivative) on
/// the axis with radiation conditions at both truncation radii.
pub fn low_energy_kernel(g: &AxisGrid, k0: f64, kind: KernelKind, rule: &KQuad) -> Result<DiscretizedKernel> {
    if !(k0 > 0.0 && k0 <= 0.5) {
        return Err(Error::Domain(format!("k0 = {k0} must lie in (0, 1/2]")));
    }
    let n = g.len();
    let op = g.operator();
    let k_lo = k0 * (-rule.depth).exp();
    let res = k_integral(rule, k_lo, k0, |k| {
        let r = resolvent_matrix(&op, g, k)?;
        let r = match kind {
            KernelKind::Scalar => r,
            KernelKind::Gradient => row_derivative(&g.s, &r),
        };
        Ok(r.as_slice().to_vec())
    })?;
    if res.tail > 1e-8 {
        return Err(Error::EnvelopeViolation(format!(
            "k-integrand has not decayed at k = {k_lo:e} (relative tail {:e})",
            res.tail
        )));
    }
    let c = 2.0 / PI;
    let values = DMatrix::from_column_slice(n, n, &res.value) * c;
    let error = DMatrix::from_column_slice(n, n, &res.error) * c;
    Ok(DiscretizedKernel { kind, k0, r_max: g.r_max_minus(), s: g.s.clone(), mass: g.mass.clone(), values, error })
}

/// Exponent of |K(z0, z')| against r' on the plus end over [r_lo, r_hi].
pub fn plus_decay_exponent(k: &DiscretizedKernel, row: usize, r_lo: f64, r_hi: f64) -> Result<f64> {
    let (mut xs, mut ys) = (vec![], vec![]);
    for j in 0..k.len() {
        if k.s[j] >= r_lo && k.s[j] <= r_hi {
            xs.push(k.s[j]);
            ys.push(k.values[(row, j)]);
        }
    }
    Ok(fit::loglog_slope(&xs, &ys)?.slope)
}

// ---------------------------------------------------------------------------
// High-energy multiplier.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelBound {
    pub label: String,
    pub modes: usize,
    /// max over the discrete spectrum of xi F_>(xi).
    pub symbol_sup: f64,
    /// ||grad F_>(sqrt Delta)||_{L^2 -> L^2} from an SVD of the discrete
    /// gradient composed with the multiplier.
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierReport {
    pub k0: f64,
    pub channels: Vec<ChannelBound>,
    /// Largest norm over the channels.
    pub uniform_bound: f64,
}

/// Discrete gradient G with |G u|^2 = u^T (L + V M + boundary terms) u.
fn gradient_factor(op: &RadialOperator, left: Boundary, right: Boundary) -> Result<DMatrix<f64>> {
    let n = op.len();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    for e in 0..n - 1 {
        let f = op.flux[e].sqrt();
        rows.push(vec![(e, -f), (e + 1, f)]);
    }
    for i in 0..n {
        if op.potential[i] != 0.0 {
            rows.push(vec![(i, (op.potential[i] * op.mass[i]).sqrt())]);
        }
    }
    for (bc, i, end) in [(left, 0, 0), (right, n - 1, 1)] {
        let c = match bc {
            Boundary::Robin(t) => op.end_weight[end] * t,
            Boundary::Dirichlet => op.ghost_flux[end].unwrap_or(0.0),
        };
        if c < 0.0 {
            return Err(Error::Domain("negative boundary term in the Dirichlet form".into()));
        }
        if c > 0.0 {
            rows.push(vec![(i, c.sqrt())]);
        }
    }
    let mut gm = DMatrix::zeros(rows.len(), n);
    for (r, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            gm[(r, j)] += v;
        }
    }
    Ok(gm)
}

fn channel_bound(label: String, op: &RadialOperator, left: Boundary, right: Boundary, split: &RieszSplit) -> Result<ChannelBound> {
    let n = op.len();
    let a = op.matrix(0.0, left, right)?.to_dense();
    let ms: Vec<f64> = op.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| ms[i] * a[(i, j)] * ms[j]);
    let eig = SymmetricEigen::new(s);
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let f: Vec<f64> = lam.iter().map(|l| split.f_high(l.sqrt())).collect();
    let symbol_sup = lam.iter().zip(&f).map(|(l, f)| l.sqrt() * f).fold(0.0, f64::max);
    let gm = gradient_factor(op, left, right)?;
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(n, n, |i, j| ms[i] * v[(i, j)] * f[j]);
    let t = gm * scaled;
    let norm = t.singular_values().iter().fold(0.0f64, |m, v| m.max(*v));
    Ok(ChannelBound { label, modes: n, symbol_sup, norm })
}

/// grad F_>(sqrt Delta) channel by channel on the truncated domain (Neumann
/// at the truncation radius).  The L^2 bound is sup xi F_>(xi) <= 1.
pub fn high_energy_multiplier(m: &ModelManifold, g: &AxisGrid, channels: &[ModeChannel], split: &RieszSplit) -> Result<MultiplierReport> {
    let mut out = Vec::new();
    for ch in channels {
        let b = if ch.is_zero() {
            channel_bound("zero".into(), &g.operator(), Boundary::Robin(0.0), Boundary::Robin(0.0), split)?
        } else {
            let op = radial_laplacian(m, g, ch)?;
            let label = format!("{:?} m={} j={} l={}", ch.end, ch.m, ch.j, ch.l);
            channel_bound(label, &op, Boundary::Dirichlet, Boundary::Robin(0.0), split)?
        };
        out.push(b);
    }
    let uniform_bound = out.iter().map(|c| c.norm).fold(0.0, f64::max);
    Ok(MultiplierReport { k0: split.k0, channels: out, uniform_bound })
}

// ---------------------------------------------------------------------------
// p -> p norms over an R_max sweep.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RieszTrend {
    BoundedTrend,
    DivergentTrend,
}

impl RieszTrend {
    pub fn as_str(&self) -> &'static str {
        match self {
            RieszTrend::BoundedTrend => "bounded-trend",
            RieszTrend::DivergentTrend => "divergent-trend",
        }
    }
}

/// One CSV row: p, R_max, lower, upper, verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub p: f64,
    #[serde(rename = "R_max")]
    pub r_max: f64,
    pub lower: f64,
    pub upper: f64,
    pub verdict: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PVerdict {
    pub p: f64,
    pub trend: RieszTrend,
    /// (max - min) / max of the lower bound over the last three radii.
    pub variation: f64,
    /// log-log slope of the lower bound against R_max over the last three radii.
    pub exponent: f64,
    /// Same slope for lower * log R_max, which removes the 1 / log R factor of
    /// the rank-one part.
    pub log_corrected_exponent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundednessReport {
    pub rows: Vec<NormRow>,
    pub verdicts: Vec<PVerdict>,
    pub note: String,
}

/// Start vectors (in plain l^p coordinates) for the power iteration: all
/// ones, radial plateaus on the compact part and both ends, and the profile
/// aligned with b(r) = 1 / (r log r) on the minus end.
fn test_family(k: &DiscretizedKernel, p: f64) -> Vec<Vec<f64>> {
    let n = k.len();
    let q = p / (p - 1.0);
    let mp = |j: usize| k.mass[j].powf(1.0 / p);
    let mut fam = vec![vec![1.0; n]];
    for a in [2.0, 5.0, 20.0] {
        fam.push((0..n).map(|j| if k.s[j].abs() <= a { mp(j) } else { 0.0 }).collect());
    }
    fam.push((0..n).map(|j| if k.s[j] < -3.0 { mp(j) } else { 0.0 }).collect());
    fam.push((0..n).map(|j| if k.s[j] > 3.0 { mp(j) } else { 0.0 }).collect());
    fam.push(
        (0..n)
            .map(|j| {
                let r = -k.s[j];
                if r > 3.0 {
                    (1.0 / (r * r.ln())).powf(q - 1.0) * mp(j)
                } else {
                    0.0
                }
            })
            .collect(),
    );
    fam
}

/// Lower and upper bound for ||K||_{p -> p} of one kernel.
pub fn kernel_p_norm(k: &DiscretizedKernel, p: f64, max_iter: usize) -> (f64, f64) {
    let a = k.lp_matrix(p);
    let mut lower = 0.0f64;
    for start in test_family(k, p) {
        let (v, _, _) = linalg::boyd_power(&a, p, Some(&start), max_iter, 1e-10);
        lower = lower.max(v);
    }
    let abs = a.map(|v| v.abs());
    let (_, x, _) = linalg::boyd_power(&abs, p, None, max_iter, 1e-10);
    let upper = linalg::schur_bound(&a, p, &x).max(lower);
    (lower, upper)
}

/// Norm estimates of kernels assembled at increasing R_max.  Bounded-trend
/// when the log-log slope of the lower bound over the last three radii stays
/// below `slope_threshold`.
pub fn lp_boundedness_report(kernels: &[DiscretizedKernel], ps: &[f64], slope_threshold: f64, max_iter: usize) -> Result<BoundednessReport> {
    if kernels.len() < 3 {
        return Err(Error::Domain("the R_max sweep needs at least three radii".into()));
    }
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for &p in ps {
        if !(p > 1.0) {
            return Err(Error::Domain(format!("p = {p} must exceed 1")));
        }
        let est: Vec<(f64, f64, f64)> = kernels
            .iter()
            .map(|k| {
                let (lo, up) = kernel_p_norm(&k.trimmed(2), p, max_iter);
                (k.r_max_minus(), lo, up)
            })
            .collect();
        let last = &est[est.len() - 3..];
        let hi = last.iter().fold(0.0f64, |m, e| m.max(e.1));
        let lo = last.iter().fold(f64::INFINITY, |m, e| m.min(e.1));
        let variation = (hi - lo) / hi;
        let xs: Vec<f64> = last.iter().map(|e| e.0).collect();
        let ys: Vec<f64> = last.iter().map(|e| e.1).collect();
        let exponent = fit::loglog_slope(&xs, &ys)?.slope;
        let yl: Vec<f64> = last.iter().map(|e| e.1 * e.0.ln()).collect();
        let log_corrected_exponent = fit::loglog_slope(&xs, &yl)?.slope;
        let trend = if exponent < slope_threshold { RieszTrend::BoundedTrend } else { RieszTrend::DivergentTrend };
        for e in &est {
            rows.push(NormRow { p, r_max: e.0, lower: e.1, upper: e.2, verdict: trend.as_str().into() });
        }
        verdicts.push(PVerdict { p, trend, variation, exponent, log_corrected_exponent });
    }
    let note = "zero-channel kernels; p = 2 is covered by the L^2 multiplier bound, reported here only as a trend".into();
    Ok(BoundednessReport { rows, verdicts, note })
}

// ---------------------------------------------------------------------------
// Schur chain at frozen k.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchurExponent {
    pub s: f64,
    pub ks: Vec<f64>,
    /// sup over the collar of ||R(k)(z, .)||_{L^s(E_-)}.
    pub norms: Vec<f64>,
    pub exponent: f64,
    pub expected: f64,
}

/// L^{s'} -> L^inf norm of the resolvent from the neck collar |s| <= collar
/// into E_-, at k = e^{-2^j}.  The part beyond R_max is the decaying profile
/// and is integrated in closed form up to quadrature.
pub fn schur_exponent(m: &ModelManifold, g: &AxisGrid, collar: f64, s_list: &[f64], js: &[u32]) -> Result<Vec<SchurExponent>> {
    let op = g.operator();
    let r_max = g.r_max_minus();
    let end = m.end(Side::Minus);
    let rows: Vec<usize> = (0..g.len()).filter(|&i| g.s[i].abs() <= collar).collect();
    let cols: Vec<usize> = (0..g.len()).filter(|&j| g.region[j] == Region::Minus).collect();
    let mut out: Vec<SchurExponent> =
        s_list.iter().map(|&s| SchurExponent { s, ks: vec![], norms: vec![], exponent: 0.0, expected: -2.0 / s }).collect();
    for &j in js {
        let k = (-(2f64.powi(j as i32))).exp();
        let r = resolvent_matrix(&op, g, k)?;
        let prof = exterior_profile(end.euclidean_dim, k, r_max)?;
        for e in out.iter_mut() {
            let s = e.s;
            let tail = exterior_integral(end.euclidean_dim, end.weight_constant(), k, r_max, |x| prof(x).powf(s))?;
            let mut best = 0.0f64;
            for &i in &rows {
                let grid: f64 = cols.iter().map(|&c| r[(i, c)].abs().powf(s) * g.mass[c]).sum();
                let v = (grid + r[(i, 0)].abs().powf(s) * tail).powf(1.0 / s);
                best = best.max(v);
            }
            e.ks.push(k);
            e.norms.push(best);
        }
    }
    for e in out.iter_mut() {
        e.exponent = fit::loglog_slope(&e.ks, &e.norms)?.slope;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Unboundedness for p > 2.

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessConfig {
    /// Upper end of the k-integral.  The piece over [k_top, k0] has kernel
    /// O(e^{-k_top r'}) and is bounded on every L^p; below k_top the leading
    /// ilg term of d_r(phi_- + u_-) fixes the sign.
    pub k_top: f64,
    /// Support of the test bump tau on E_-.
    pub tau: (f64, f64),
    /// Right variable samples used for the constant are r' >= this.
    pub right_min: f64,
    pub quad: KQuad,
    pub max_iter: usize,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        Self { k_top: 1e-8, tau: (6.0, 10.0), right_min: 1e10, quad: KQuad::default(), max_iter: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessGrowth {
    pub p: f64,
    pub radii: Vec<f64>,
    /// Power-iteration lower bound for the witness kernel truncated at r' <= R.
    pub lower: Vec<f64>,
    /// C ||a||_p ||b 1_{r' <= R}||_{p'} for the rank-one minorant.
    pub rank_one: Vec<f64>,
    /// Slope of log(lower * log R) against log R.
    pub exponent: f64,
    /// (2 - p') / p'.
    pub expected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlgChain {
    pub samples: usize,
    pub identity_max_error: f64,
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnboundednessWitness {
    pub beta: f64,
    pub tau_support: (f64, f64),
    /// Global sign applied to W so that it is nonnegative.
    pub sign: f64,
    /// min over the samples of W(z, z') / (a(z) b(z')), a = tau / r,
    /// b = ilg(1/r') / r'.
    pub constant: f64,
    /// max of the same ratio (the minorant is not sharp by more than this factor).
    pub constant_max: f64,
    /// W >= 0 on its support.
    pub nonnegative: bool,
    /// Slope of sup_z |difference term| against r' (the z -> z° replacement).
    pub difference_exponent: f64,
    /// sup over the sampled r' of r'^2 sup_z |difference term|.
    pub difference_weighted_sup: f64,
    pub growth: Vec<WitnessGrowth>,
    pub ilg_chain: IlgChain,
    /// int_0^eps f(kappa) (1 + |log kappa| e^{-kappa}) d kappa.
    pub f_integral: f64,
}

/// f(t) = ilg t / (1 + ilg t) for t < 1, and 1 beyond.
pub fn f_weight(t: f64) -> f64 {
    if t >= 1.0 {
        1.0
    } else {
        let l = ilg_ext(t);
        l / (1.0 + l)
    }
}

/// ilg k = ilg(kr') ilg(1/r') / (ilg(1/r') + ilg(kr')) >= f(kr') ilg(1/r') on
/// random (k, r') with r' >= e and kr' < 1.
pub fn ilg_chain(samples: usize, seed: u64) -> IlgChain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut violations = 0;
    for _ in 0..samples {
        // the inequality needs ilg(1/r') <= 1, i.e. r' >= e
        let lr: f64 = rng.gen_range(1.0..30.0);
        let r = lr.exp();
        let lkr: f64 = rng.gen_range(-40.0..-1e-6);
        let k = lkr.exp() / r;
        let lk = ilg_ext(k);
        let a = ilg_ext(k * r);
        let b = ilg_ext(1.0 / r);
        let id = a * b / (a + b);
        worst = worst.max((id - lk).abs() / lk);
        if lk < f_weight(k * r) * b * (1.0 - 1e-13) {
            violations += 1;
        }
    }
    IlgChain { samples, identity_max_error: worst, violations }
}

pub fn f_integral(eps: f64, c: f64) -> Result<f64> {
    // kappa = e^{-t}: the log singularity at 0 becomes a decaying tail
    Ok(quad::integrate_to_infinity(
        |t| {
            let kappa = eps * (-t).exp();
            f_weight(kappa) * (1.0 + kappa.ln().abs() * (-c * kappa).exp()) * kappa
        },
        0.0,
        0.0,
        1e-11,
    )?
    .value)
}

/// ||b 1_{r <= R}||_{p'} on E_- (measure c r dr from r_lo) for b = 1 / (r log r),
/// by quadrature in log r.
pub fn b_norm(p: f64, c: f64, r_lo: f64, r: f64) -> Result<f64> {
    let q = p / (p - 1.0);
    let v = quad::integrate(
        |t: f64| {
            let x = t.exp();
            (x * t).powf(-q) * c * x * x
        },
        r_lo.ln(),
        r.ln(),
        0.0,
        1e-12,
    )?;
    Ok(v.value.powf(1.0 / q))
}

/// Growth exponent of ||b 1_{r <= R}||_{p'} with the 1/log R factor divided out.
pub fn b_norm_exponent(p: f64, radii: &[f64]) -> Result<f64> {
    let ys: Vec<f64> = radii.iter().map(|&r| b_norm(p, 1.0, 2.0, r).map(|v| v * r.ln())).collect::<Result<_>>()?;
    Ok(fit::loglog_slope(radii, &ys)?.slope)
}

/// u - 1 for the solution of the zero-channel product operator that is
/// regular at the origin (u = 1 there), by the flux recursion
/// f_i (u_{i+1} - u_i) = f_{i-1} (u_i - u_{i-1}) + k^2 m_i u_i.
/// Accumulating increments keeps the O(k^2 r^2) deviation free of cancellation.
pub fn regular_deviation(pg: &ProductGrid, k: f64, upto: usize) -> Vec<f64> {
    let mut w = vec![0.0; upto + 1];
    let mut flux_d = 0.0;
    for i in 0..upto {
        flux_d += k * k * pg.mass[i] * (1.0 + w[i]);
        w[i + 1] = w[i] + flux_d / pg.flux[i];
    }
    w
}

fn bump(x: f64, a: f64, b: f64) -> f64 {
    if x <= a || x >= b {
        return 0.0;
    }
    let t = 2.0 * (x - a) / (b - a) - 1.0;
    (1.0 - 1.0 / (1.0 - t * t)).exp()
}

/// The reduced kernel tau(z) int_0^k0 d_r(phi_- + u_-)(z, k) P_-(k)(z°, z')
/// phi_-(z') dk, its rank-one minorant, and the norm growth on r' <= R.
pub fn unboundedness_witness(setup: &ParametrixSetup, ps: &[f64], radii: &[f64], cfg: &WitnessConfig) -> Result<UnboundednessWitness> {
    let approx = &setup.approx[0];
    let beta = approx.beta;
    if !(beta > 0.0) {
        return Err(Error::BetaNonPositive(beta));
    }
    let g = &setup.key.grid;
    let n = g.len();
    let r_max = g.r_max_minus();
    if radii.iter().any(|&r| r > r_max * (1.0 + 1e-12)) {
        return Err(Error::Truncation(format!("witness radius beyond R_max = {r_max}")));
    }
    let phi = &setup.phi[0];
    let rows: Vec<usize> = (0..n).filter(|&i| g.region[i] == Region::Minus && bump(-g.s[i], cfg.tau.0, cfg.tau.1) > 0.0).collect();
    let dphi = axis_derivative(&g.s, phi);
    // gradient hits phi: rows where d_r phi != 0
    let drows: Vec<usize> = (0..n).filter(|&i| dphi[i].abs() > 1e-14).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| g.region[j] == Region::Minus && phi[j] != 0.0).collect();
    let base = setup.basepoint[0];
    let pidx: Vec<usize> = cols
        .iter()
        .map(|&j| setup.product_index(Side::Minus, j).ok_or_else(|| Error::Config("phi_- support leaves the product grid".into())))
        .collect::<Result<_>>()?;
    let drow_p: Vec<usize> = drows
        .iter()
        .map(|&i| setup.product_index(Side::Minus, i).ok_or_else(|| Error::Config("d phi_- support leaves the product grid".into())))
        .collect::<Result<_>>()?;
    let (nr, nc, nd) = (rows.len(), cols.len(), drows.len());
    // the integrand must have decayed well below 1 / R_max
    let depth = cfg.quad.depth.max((cfg.k_top * r_max).ln() + 20.0);
    let k_lo = cfg.k_top * (-depth).exp();
    let res = k_integral(&cfg.quad, k_lo, cfg.k_top, |k| {
        let u = approx.eval(k)?.u;
        let w: Vec<f64> = (0..n).map(|i| phi[i] + u[i]).collect();
        // on E_-, d/dr = -d/ds
        let dr: Vec<f64> = axis_derivative(&g.s, &w).iter().map(|v| -v).collect();
        let pr = DiscreteProductResolvent::new(setup.key.minus.clone(), k)?;
        let mut out = Vec::with_capacity(nr * nc + nd * nc);
        for (c, &j) in cols.iter().enumerate() {
            let right = pr.kernel[(base, pidx[c])] * phi[j];
            for &i in &rows {
                out.push(dr[i] * right);
            }
        }
        // for z, z° inside r', G(z, z') = u(z) G(0, z'), so the difference is
        // (u(z) - u(z°)) G(0, z') with the deviation taken from the recursion
        let top = drow_p.iter().copied().chain([base]).max().unwrap();
        let dev = regular_deviation(&setup.key.minus, k, top);
        for (c, &j) in cols.iter().enumerate() {
            for (d, &dp) in drow_p.iter().enumerate() {
                let diff = if pidx[c] > top { (dev[dp] - dev[base]) * pr.kernel[(0, pidx[c])] } else {
                    pr.kernel[(dp, pidx[c])] - pr.kernel[(base, pidx[c])]
                };
                out.push(-dphi[drows[d]] * diff * phi[j]);
            }
        }
        Ok(out)
    })?;
    let tau: Vec<f64> = rows.iter().map(|&i| bump(-g.s[i], cfg.tau.0, cfg.tau.1)).collect();
    let raw_sum: f64 = res.value[..nr * nc].iter().sum();
    let sign = if raw_sum < 0.0 { -1.0 } else { 1.0 };
    let w = DMatrix::from_fn(nr, nc, |a, c| sign * tau[a] * res.value[c * nr + a]);
    let dm = DMatrix::from_fn(nd, nc, |d, c| res.value[nr * nc + c * nd + d]);
    let rr: Vec<f64> = cols.iter().map(|&j| -g.s[j]).collect();
    let b: Vec<f64> = rr.iter().map(|&r| if r > 1.0 { ilg_ext(1.0 / r) / r } else { 0.0 }).collect();
    let a: Vec<f64> = rows.iter().zip(&tau).map(|(&i, t)| t / (-g.s[i])).collect();
    let nonnegative = w.iter().all(|v| *v >= -1e-14 * w.amax());
    let mut cmin = f64::INFINITY;
    let mut cmax = 0.0f64;
    let tmax = tau.iter().fold(0.0f64, |m, v| m.max(*v));
    for (ai, &av) in a.iter().enumerate() {
        if tau[ai] < 0.5 * tmax {
            continue;
        }
        for c in 0..nc {
            if rr[c] < cfg.right_min {
                continue;
            }
            let ratio = w[(ai, c)] / (av * b[c]);
            cmin = cmin.min(ratio);
            cmax = cmax.max(ratio);
        }
    }
    // difference term decay
    let (mut xs, mut ys) = (vec![], vec![]);
    for c in 0..nc {
        if rr[c] >= cfg.right_min {
            let v = dm.column(c).amax();
            if v > 0.0 {
                xs.push(rr[c]);
                ys.push(v);
            }
        }
    }
    let difference_exponent = fit::loglog_slope(&xs, &ys)?.slope;
    let difference_weighted_sup = xs.iter().zip(&ys).map(|(r, v)| r * r * v).fold(0.0, f64::max);
    let mass_r: Vec<f64> = rows.iter().map(|&i| g.mass[i]).collect();
    let mass_c: Vec<f64> = cols.iter().map(|&j| g.mass[j]).collect();
    let mut growth = Vec::new();
    for &p in ps {
        let q = p / (p - 1.0);
        let mut lower = Vec::new();
        let mut rank_one = Vec::new();
        for &big_r in radii {
            let keep: Vec<usize> = (0..nc).filter(|&c| rr[c] <= big_r * (1.0 + 1e-12)).collect();
            let am = DMatrix::from_fn(nr, keep.len(), |i, c| {
                mass_r[i].powf(1.0 / p) * w[(i, keep[c])] * mass_c[keep[c]].powf(1.0 - 1.0 / p)
            });
            let start: Vec<f64> = keep.iter().map(|&c| b[c].powf(q - 1.0) * mass_c[c].powf(1.0 / p)).collect();
            let (v, _, _) = linalg::boyd_power(&am, p, Some(&start), cfg.max_iter, 1e-10);
            lower.push(v);
            // only over the samples where W >= C a b was measured
            let na: Vec<f64> =
                (0..nr).map(|i| if tau[i] >= 0.5 * tmax { a[i] * mass_r[i].powf(1.0 / p) } else { 0.0 }).collect();
            let nb: Vec<f64> =
                keep.iter().map(|&c| if rr[c] >= cfg.right_min { b[c] * mass_c[c].powf(1.0 / q) } else { 0.0 }).collect();
            let (na, nb) = (linalg::lp_norm(&na, p), linalg::lp_norm(&nb, q));
            rank_one.push(cmin * na * nb);
        }
        let ys: Vec<f64> = lower.iter().zip(radii).map(|(v, r)| v * r.ln()).collect();
        let exponent = fit::loglog_slope(radii, &ys)?.slope;
        growth.push(WitnessGrowth { p, radii: radii.to_vec(), lower, rank_one, exponent, expected: (2.0 - q) / q });
    }
    Ok(UnboundednessWitness {
        beta,
        sign,
        tau_support: cfg.tau,
        constant: cmin,
        constant_max: cmax,
        nonnegative,
        difference_exponent,
        difference_weighted_sup,
        growth,
        ilg_chain: ilg_chain(10_000, 11),
        f_integral: f_integral(0.1, 1.0)?,
    })
}

// ---------------------------------------------------------------------------
// Split consistency on a Euclidean model.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCheck {
    pub pairs: Vec<(f64, f64)>,
    /// Relative error of F_< + F_> against (4 pi^2 r r')^{-1} log((r + r') / |r - r'|).
    pub scalar_error: f64,
    /// Relative error of the r-derivative.
    pub gradient_error: f64,
}

/// Delta^{-1/2} of R^3 on radial functions, with respect to the volume.
pub fn euclidean3_half_power(r: f64, rp: f64) -> f64 {
    ((r + rp) / (r - rp).abs()).ln() / (4.0 * PI * PI * r * rp)
}

pub fn euclidean3_half_power_dr(r: f64, rp: f64) -> f64 {
    let l = ((r + rp) / (r - rp).abs()).ln();
    let dl = 1.0 / (r + rp) - 1.0 / (r - rp);
    (dl / r - l / (r * r)) / (4.0 * PI * PI * rp)
}

/// Low plus high energy parts of the discrete kernel on the radial grid of a
/// 3-dimensional end with point cross-section, against the exact kernel.
pub fn euclidean_split_check(pg: &ProductGrid, split: &RieszSplit, pairs: &[(f64, f64)], rule: &KQuad, k_hi: f64) -> Result<SplitCheck> {
    if pg.n != 3 {
        return Err(Error::Unsupported("the split check needs a 3-dimensional end".into()));
    }
    let op = pg.operator();
    let near = |r: f64| (0..pg.len()).min_by(|&a, &b| (pg.r[a] - r).abs().partial_cmp(&(pg.r[b] - r).abs()).unwrap()).unwrap();
    let idx: Vec<(usize, usize)> = pairs.iter().map(|&(a, b)| (near(a), near(b))).collect();
    let eval = |k: f64| -> Result<Vec<f64>> {
        let right = pg.radiation(k)?;
        let gm = op.green_matrix(k * k, Boundary::Robin(0.0), right)?;
        let mut out = Vec::with_capacity(2 * idx.len());
        for &(i, j) in &idx {
            out.push(gm[(i, j)]);
            let d: f64 = derivative_weights(&pg.r, i).iter().map(|&(l, w)| w * gm[(l, j)]).sum();
            out.push(d);
        }
        Ok(out)
    };
    let lo = k_integral(rule, split.k0 * (-rule.depth).exp(), split.k0, eval)?;
    let hi = k_integral(rule, split.k0, k_hi, eval)?;
    let mut se = 0.0f64;
    let mut ge = 0.0f64;
    for (n, &(i, j)) in idx.iter().enumerate() {
        let (r, rp) = (pg.r[i], pg.r[j]);
        let v = 2.0 / PI * (lo.value[2 * n] + hi.value[2 * n]);
        let d = 2.0 / PI * (lo.value[2 * n + 1] + hi.value[2 * n + 1]);
        let e = euclidean3_half_power(r, rp);
        let ed = euclidean3_half_power_dr(r, rp);
        se = se.max((v - e).abs() / e.abs());
        ge = ge.max((d - ed).abs() / ed.abs());
    }
    let pairs = idx.iter().map(|&(i, j)| (pg.r[i], pg.r[j])).collect();
    Ok(SplitCheck { pairs, scalar_error: se, gradient_error: ge })
}

/// The rank-one model of the k-integral: int_0^k0 r^{-1} e^{-ckr} e^{-ckr'} dk.
pub fn rank_one_model(r: f64, rp: f64, c: f64, k0: f64) -> f64 {
    let s = c * (r + rp);
    (1.0 - (-k0 * s).exp()) / (r * s)
}

pub fn symmetric_defect(k: &DiscretizedKernel) -> f64 {
    let v = &k.values;
    (v - v.transpose()).amax() / v.amax()
}
