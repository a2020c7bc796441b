//! Tridiagonal solves and l^p operator-norm estimates.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A (possibly nonsymmetric) tridiagonal matrix stored by diagonals.
#[derive(Clone, Debug)]
pub struct Tridiag {
    /// lower[i] couples row i+1 to column i
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    /// upper[i] couples row i to column i+1
    pub upper: Vec<f64>,
}

impl Tridiag {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// Thomas algorithm. Fine without pivoting for the diagonally dominant
    /// or definite matrices produced here; a zero pivot is reported.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if b.len() != n {
            return Err(Error::InvalidDimension(format!("rhs has {} entries, matrix {n}", b.len())));
        }
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut piv = self.diag[0];
        if piv == 0.0 || !piv.is_finite() {
            return Err(Error::Singular("zero pivot in tridiagonal solve".into()));
        }
        if n > 1 {
            c[0] = self.upper[0] / piv;
        }
        d[0] = b[0] / piv;
        for i in 1..n {
            piv = self.diag[i] - self.lower[i - 1] * c[i - 1];
            if piv == 0.0 || !piv.is_finite() {
                return Err(Error::Singular(format!("zero pivot at row {i}")));
            }
            if i + 1 < n {
                c[i] = self.upper[i] / piv;
            }
            d[i] = (b[i] - self.lower[i - 1] * d[i - 1]) / piv;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(d)
    }

    /// Dense inverse, column by column. Only for modest sizes.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e)?;
            e[j] = 0.0;
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        Ok(m)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.upper[i];
                m[(i + 1, i)] = self.lower[i];
            }
        }
        m
    }
}

fn duality_map(y: &[f64], p: f64) -> Vec<f64> {
    let m = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 {
        return vec![0.0; y.len()];
    }
    y.iter().map(|v| (v / m).signum() * (v.abs() / m).powf(p - 1.0)).collect()
}

/// l^p norm computed with scaling so huge entries do not overflow.
pub fn lp_norm(x: &[f64], p: f64) -> f64 {
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

#[derive(Clone, Debug)]
pub struct PNormEstimate {
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    /// Final iterate (maximiser candidate), normalised in l^p.
    pub vector: Vec<f64>,
}

/// Boyd's nonlinear power iteration for ||A||_{p -> p} on plain l^p.
/// Returns the Rayleigh-type lower bound attained by the final iterate and
/// the iterate itself. `start` defaults to the all-ones vector.
pub fn boyd_power(a: &DMatrix<f64>, p: f64, start: Option<&[f64]>, max_iter: usize, tol: f64) -> (f64, Vec<f64>, usize) {
    let q = p / (p - 1.0);
    let n = a.ncols();
    let mut x: Vec<f64> = match start {
        Some(s) => s.to_vec(),
        None => vec![1.0; n],
    };
    let nx = lp_norm(&x, p);
    if nx == 0.0 {
        return (0.0, x, 0);
    }
    x.iter_mut().for_each(|v| *v /= nx);
    let at = a.transpose();
    let mut best = 0.0f64;
    let mut best_x = x.clone();
    let mut last = 0.0;
    let mut it = 0;
    for k in 0..max_iter {
        it = k + 1;
        let y = mat_vec(a, &x);
        let val = lp_norm(&y, p);
        if val > best {
            best = val;
            best_x = x.clone();
        }
        if k > 2 && (val - last).abs() <= tol * val.abs() {
            break;
        }
        last = val;
        let z = duality_map(&y, p);
        let w = mat_vec(&at, &z);
        let xn = duality_map(&w, q);
        let nn = lp_norm(&xn, p);
        if nn == 0.0 {
            break;
        }
        x = xn.into_iter().map(|v| v / nn).collect();
    }
    (best, best_x, it)
}

pub fn mat_vec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let (r, c) = a.shape();
    let mut y = vec![0.0; r];
    for j in 0..c {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        let col = a.column(j);
        for i in 0..r {
            y[i] += col[i] * xj;
        }
    }
    y
}

/// Schur test on |A| with test vector derived from `x` (positive entries
/// are enforced by a small floor). Any positive vector gives a valid bound.
pub fn schur_bound(a: &DMatrix<f64>, p: f64, x: &[f64]) -> f64 {
    let q = p / (p - 1.0);
    let abs = a.map(|v| v.abs());
    let xm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = if xm > 0.0 { 1e-8 * xm } else { 1.0 };
    // h2^{q} = x, h1^{q} = |A| x
    let h2q: Vec<f64> = x.iter().map(|v| v.abs().max(floor)).collect();
    let ax = mat_vec(&abs, &h2q);
    let (r, c) = abs.shape();
    let mut c1 = 0.0f64;
    for i in 0..r {
        if ax[i] > 0.0 {
            c1 = c1.max(1.0);
        }
    }
    if c1 == 0.0 {
        return 0.0;
    }
    // h1^p = (|A| x)^{p/q}
    let h1p: Vec<f64> = ax.iter().map(|v| v.powf(p / q)).collect();
    let mut c2 = 0.0f64;
    for j in 0..c {
        let mut s = 0.0;
        for i in 0..r {
            s += abs[(i, j)] * h1p[i];
        }
        let h2p = h2q[j].powf(p / q);
        c2 = c2.max(s / h2p);
    }
    c1.powf(1.0 / q) * c2.powf(1.0 / p)
}

/// Lower bound by power iteration and certified upper bound by the Schur test.
pub fn p_norm_bounds(a: &DMatrix<f64>, p: f64, max_iter: usize) -> PNormEstimate {
    let abs = a.map(|v| v.abs());
    let (lo, x, it) = boyd_power(a, p, None, max_iter, 1e-12);
    let (_, xa, _) = boyd_power(&abs, p, None, max_iter, 1e-12);
    let up = schur_bound(a, p, &xa);
    PNormEstimate { lower: lo, upper: up.max(lo), iterations: it, vector: x }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_dense() {
        let t = Tridiag { lower: vec![-1.0; 4], diag: vec![3.0, 2.5, 2.0, 4.0, 3.0], upper: vec![-0.5; 4] };
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let x = t.solve(&b).unwrap();
        let r = t.apply(&x);
        for (u, v) in r.iter().zip(&b) {
            assert!((u - v).abs() < 1e-13);
        }
        let inv = t.inverse().unwrap();
        let id = t.to_dense() * inv;
        assert!((id - DMatrix::identity(5, 5)).amax() < 1e-13);
    }

    #[test]
    fn p_norm_of_diagonal_and_rank_one() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let e = p_norm_bounds(&a, 1.7, 500);
        assert!((e.lower - 3.0).abs() < 1e-8, "{}", e.lower);
        assert!(e.upper >= e.lower - 1e-12 && e.upper < 3.0 * (1.0 + 1e-6));
        // rank one u v^T has norm ||u||_p ||v||_q
        let u = [1.0, 2.0, 0.5];
        let v = [0.3, 1.0, 2.0];
        let a = DMatrix::from_fn(3, 3, |i, j| u[i] * v[j]);
        let p = 2.5;
        let exact = lp_norm(&u, p) * lp_norm(&v, p / (p - 1.0));
        let e = p_norm_bounds(&a, p, 500);
        assert!((e.lower - exact).abs() < 1e-9 * exact);
        assert!((e.upper - exact).abs() < 1e-6 * exact);
    }
}
