//! Least-squares helpers for exponent and coefficient fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual of the fit.
    pub max_residual: f64,
}

/// Ordinary least squares y = slope * x + intercept.
pub fn line_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Domain("line fit needs at least two paired samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::Domain("line fit with degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual =
        x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).abs()).fold(0.0, f64::max);
    Ok(LineFit { slope, intercept, max_residual })
}

/// Slope of log|y| against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if y.iter().any(|v| *v == 0.0) || x.iter().any(|v| *v <= 0.0) {
        return Err(Error::Domain("log-log fit needs nonzero data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    line_fit(&lx, &ly)
}

/// Least-squares polynomial coefficients c_0..c_deg for y ~ sum c_i x^i.
/// Each `y` sample may be a vector; the fit is done column by column.
pub fn poly_fit_vectors(x: &[f64], ys: &[Vec<f64>], deg: usize) -> Result<Vec<Vec<f64>>> {
    let m = x.len();
    if m != ys.len() || m < deg + 1 {
        return Err(Error::Domain(format!("polynomial fit of degree {deg} needs {} samples", deg + 1)));
    }
    let width = ys[0].len();
    if ys.iter().any(|y| y.len() != width) {
        return Err(Error::Domain("ragged sample vectors".into()));
    }
    let a = DMatrix::from_fn(m, deg + 1, |i, j| x[i].powi(j as i32));
    let svd = a.svd(true, true);
    let mut out = vec![vec![0.0; width]; deg + 1];
    for col in 0..width {
        let b = DVector::from_fn(m, |i, _| ys[i][col]);
        let c = svd.solve(&b, 1e-14).map_err(|e| Error::Singular(e.to_string()))?;
        for j in 0..=deg {
            out[j][col] = c[j];
        }
    }
    Ok(out)
}

pub fn poly_fit(x: &[f64], y: &[f64], deg: usize) -> Result<Vec<f64>> {
    let ys: Vec<Vec<f64>> = y.iter().map(|v| vec![*v]).collect();
    Ok(poly_fit_vectors(x, &ys, deg)?.into_iter().map(|c| c[0]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_line_and_polynomial() {
        let x: Vec<f64> = (1..8).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let f = line_fit(&x, &y).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-13 && (f.intercept + 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 2.0 * v + 0.5 * v * v).collect();
        let c = poly_fit(&x, &y, 2).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-10 && (c[1] + 2.0).abs() < 1e-10 && (c[2] - 0.5).abs() < 1e-11);
    }
}
