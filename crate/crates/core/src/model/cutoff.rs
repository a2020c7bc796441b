//! Smooth step functions placed on one end, and the set used by the constructions.

use serde::{Deserialize, Serialize};

use super::config::GeometryConfig;
use super::{ModelManifold, Side};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// 6x^5 - 15x^4 + 10x^3, C^2.
    Quintic,
    /// exp(-1/x) based, C^infinity.
    Smooth,
}

/// 0 for t <= a, 1 for t >= b.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub a: f64,
    pub b: f64,
    #[serde(default = "quintic")]
    pub shape: Shape,
}

fn quintic() -> Shape {
    Shape::Quintic
}

impl Cutoff {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b, shape: Shape::Quintic }
    }

    /// Value and first two derivatives in t.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        if t <= self.a {
            return [0.0, 0.0, 0.0];
        }
        if t >= self.b {
            return [1.0, 0.0, 0.0];
        }
        let h = self.b - self.a;
        let x = (t - self.a) / h;
        let [s, d1, d2] = match self.shape {
            Shape::Quintic => [
                x * x * x * (10.0 + x * (-15.0 + 6.0 * x)),
                30.0 * x * x * (1.0 - x) * (1.0 - x),
                60.0 * x * (1.0 - x) * (1.0 - 2.0 * x),
            ],
            Shape::Smooth => {
                let p = -1.0 / x + 1.0 / (1.0 - x);
                let dp = 1.0 / (x * x) + 1.0 / ((1.0 - x) * (1.0 - x));
                let ddp = -2.0 / (x * x * x) + 2.0 / ((1.0 - x) * (1.0 - x) * (1.0 - x));
                let sg = if p >= 0.0 { 1.0 / (1.0 + (-p).exp()) } else { p.exp() / (1.0 + p.exp()) };
                let q = sg * (1.0 - sg);
                [sg, q * dp, q * (1.0 - 2.0 * sg) * dp * dp + q * ddp]
            }
        };
        [s, d1 / h, d2 / (h * h)]
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval(t)[0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffSet {
    /// phi_minus as a function of r on the minus end.
    pub phi_minus: Cutoff,
    pub phi_plus: Cutoff,
    /// chi_minus: 1 far out on the minus end, 0 on the neck and plus end.
    pub chi_minus: Cutoff,
    /// Blends zero-energy profiles into k-deformed ones (per end).
    pub rho_minus: Cutoff,
    pub rho_plus: Cutoff,
    /// Interior parametrix cutoff in |s|: 1 for |s| <= a, 0 for |s| >= b.
    pub zeta: Cutoff,
    /// Dirichlet domain |s| <= interior_domain for the interior parametrix.
    pub interior_domain: f64,
}

impl Default for CutoffSet {
    fn default() -> Self {
        Self {
            phi_minus: Cutoff::new(2.0, 3.0),
            phi_plus: Cutoff::new(2.0, 3.0),
            chi_minus: Cutoff::new(1.25, 1.75),
            rho_minus: Cutoff::new(3.5, 4.5),
            rho_plus: Cutoff::new(3.5, 4.5),
            zeta: Cutoff::new(3.4, 3.8),
            interior_domain: 4.5,
        }
    }
}

impl CutoffSet {
    pub fn phi(&self, side: Side) -> &Cutoff {
        match side {
            Side::Minus => &self.phi_minus,
            Side::Plus => &self.phi_plus,
        }
    }

    pub fn rho(&self, side: Side) -> &Cutoff {
        match side {
            Side::Minus => &self.rho_minus,
            Side::Plus => &self.rho_plus,
        }
    }

    pub fn validate(&self, cfg: &GeometryConfig) -> Result<()> {
        let r = cfg.r_glue;
        let junction = |side: Side| match side {
            Side::Minus => cfg.s_minus,
            Side::Plus => cfg.s_plus,
        };
        let all = [
            ("phi_minus", self.phi_minus),
            ("phi_plus", self.phi_plus),
            ("chi_minus", self.chi_minus),
            ("rho_minus", self.rho_minus),
            ("rho_plus", self.rho_plus),
            ("zeta", self.zeta),
        ];
        for (name, c) in all {
            if !(c.a < c.b) {
                return Err(Error::Config(format!("cutoff {name} needs a < b")));
            }
        }
        for side in [Side::Minus, Side::Plus] {
            let p = self.phi(side);
            if !(p.a >= junction(side) && p.b < r) {
                return Err(Error::Config(format!("phi on {side:?} must transition inside the product collar of K")));
            }
            let rho = self.rho(side);
            if !(rho.a >= p.b && rho.b <= r) {
                return Err(Error::Config(format!("rho on {side:?} must lie between supp grad phi and R")));
            }
        }
        if !(self.chi_minus.a >= cfg.s_minus && self.chi_minus.b <= self.phi_minus.a) {
            return Err(Error::Config("chi_minus must equal 1 on supp phi_minus".into()));
        }
        let need = self.phi_minus.b.max(self.phi_plus.b);
        if !(self.zeta.a >= need && self.zeta.b < self.interior_domain && self.interior_domain < r) {
            return Err(Error::Config(
                "zeta must equal 1 where phi_minus, phi_plus < 1 and vanish inside the interior domain".into(),
            ));
        }
        Ok(())
    }

    /// phi_side at axis coordinate s, with value and derivatives in s.
    pub fn phi_at(&self, m: &ModelManifold, side: Side, s: f64) -> [f64; 3] {
        end_cutoff(m, self.phi(side), side, s)
    }

    pub fn chi_minus_at(&self, m: &ModelManifold, s: f64) -> [f64; 3] {
        end_cutoff(m, &self.chi_minus, Side::Minus, s)
    }

    pub fn rho_at(&self, m: &ModelManifold, side: Side, s: f64) -> [f64; 3] {
        end_cutoff(m, self.rho(side), side, s)
    }

    /// zeta(|s|), value and s-derivatives.
    pub fn zeta_at(&self, s: f64) -> [f64; 3] {
        let [v, d1, d2] = self.zeta.eval(s.abs());
        let sg = if s < 0.0 { -1.0 } else { 1.0 };
        [1.0 - v, -sg * d1, -d2]
    }
}

/// A cutoff defined in terms of r on one end, zero elsewhere; derivatives in s.
fn end_cutoff(m: &ModelManifold, c: &Cutoff, side: Side, s: f64) -> [f64; 3] {
    match m.end_radius(side, s) {
        Some(r) => {
            let [v, d1, d2] = c.eval(r);
            // ds = sign dr
            [v, side.sign() * d1, d2]
        }
        None => [0.0; 3],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_differences() {
        for shape in [Shape::Quintic, Shape::Smooth] {
            let c = Cutoff { a: 1.0, b: 2.5, shape };
            for i in 1..30 {
                let t = 1.0 + 1.5 * i as f64 / 30.0;
                let h = 1e-5;
                let [_, d1, d2] = c.eval(t);
                let fd1 = (c.value(t + h) - c.value(t - h)) / (2.0 * h);
                let fd2 = (c.value(t + h) - 2.0 * c.value(t) + c.value(t - h)) / (h * h);
                assert!((d1 - fd1).abs() < 1e-7, "{shape:?} {t}");
                assert!((d2 - fd2).abs() < 2e-3, "{shape:?} {t}: {d2} {fd2}");
            }
            assert_eq!(c.value(0.5), 0.0);
            assert_eq!(c.value(3.0), 1.0);
        }
    }
}
