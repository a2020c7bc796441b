//! Adaptive Dormand-Prince 5(4) integrator for small systems.
//!
//! Used as a continuum oracle: it shares no discretisation with the
//! finite-volume operators elsewhere in the crate.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h0: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-11, atol: 1e-14, max_steps: 2_000_000, h0: None }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])], h: f64) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrate y' = f(t, y) from `t0` through each time in `ts` (monotone, same direction).
/// Returns the state at every requested time.
pub fn solve<const N: usize, F>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    ts: &[f64],
    opts: OdeOptions,
) -> Result<Vec<[f64; N]>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut out = Vec::with_capacity(ts.len());
    let mut t = t0;
    let mut y = y0;
    let Some(&tend) = ts.last() else { return Ok(out) };
    let dir = if tend >= t0 { 1.0 } else { -1.0 };
    let span = (tend - t0).abs().max(1e-300);
    let mut h = opts.h0.unwrap_or(span * 1e-3).abs().min(span) * dir;
    let mut k1 = f(t, &y);
    let mut steps = 0usize;
    for &target in ts {
        while (target - t) * dir > 0.0 {
            if steps > opts.max_steps {
                return Err(Error::NonConvergence(format!("ODE: too many steps near t={t}")));
            }
            steps += 1;
            let mut hs = h;
            if (t + hs - target) * dir > 0.0 {
                hs = target - t;
            }
            let k2 = f(t + C2 * hs, &axpy(&y, &[(A21, &k1)], hs));
            let k3 = f(t + C3 * hs, &axpy(&y, &[(A31, &k1), (A32, &k2)], hs));
            let k4 = f(t + C4 * hs, &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], hs));
            let k5 = f(
                t + C5 * hs,
                &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], hs),
            );
            let k6 = f(
                t + hs,
                &axpy(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], hs),
            );
            let ynew = axpy(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], hs);
            let k7 = f(t + hs, &ynew);
            let mut err = 0.0f64;
            for i in 0..N {
                let e = hs
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                h *= 0.2;
                continue;
            }
            if err <= 1.0 {
                t += hs;
                y = ynew;
                k1 = k7;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // keep h if we only shortened it to hit the target
                if (hs - h).abs() < 1e-300 || fac < 1.0 {
                    h = hs * fac;
                } else {
                    h = h.abs().max(hs.abs()) * dir;
                }
            } else {
                h = hs * (0.9 * err.powf(-0.25)).clamp(0.1, 0.9);
            }
            if h.abs() < 1e-14 * t.abs().max(1.0) {
                return Err(Error::NonConvergence(format!("ODE: step size underflow at t={t}")));
            }
        }
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let ts: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let sol = solve(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [0.0, 1.0], &ts, OdeOptions::default())
            .unwrap();
        for (t, y) in ts.iter().zip(&sol) {
            assert!((y[0] - t.sin()).abs() < 1e-9, "{t} {}", y[0]);
        }
    }

    #[test]
    fn backward_direction() {
        let sol = solve(|_, y: &[f64; 1]| [y[0]], 1.0, [1.0], &[0.0], OdeOptions::default()).unwrap();
        assert!((sol[0][0] - (-1f64).exp()).abs() < 1e-10);
    }
}
