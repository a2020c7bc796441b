//! Resolvent kernels of the free product spaces R^n x M.
//!
//! Two realisations live here.  The continuum kernel is a cross-section mode
//! sum, each mode being the Euclidean resolvent
//! (2 pi)^{-n/2} kappa^{n-2} L_n(kappa d) with kappa^2 = k^2 + mu_l^2.
//! The discrete one is the zero-channel resolvent of the radial operator on a
//! grid that shares its end nodes with the model axis; the parametrix is
//! assembled from it so that its error is computed exactly on the grid.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit;
use crate::model::{decay_rate, AxisGrid, Boundary, CrossSection, CrossSectionKind, EndSpec, ModelManifold, Region, Side};
use crate::model::RadialOperator;
use crate::specfun;

/// A point of R^n x M: Euclidean coordinates and, on a circle, the arclength.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductPoint {
    pub x: Vec<f64>,
    #[serde(default)]
    pub y: f64,
}

impl ProductPoint {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }

    /// Point at Euclidean distance `d` from the origin along the first axis.
    pub fn on_axis(n: usize, d: f64, y: f64) -> Self {
        let mut x = vec![0.0; n];
        x[0] = d;
        Self { x, y }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductResolvent {
    pub euclidean_dim: usize,
    pub cross_section: CrossSection,
    pub k: f64,
    /// Fourier modes |j| <= l_max on a circle; ignored for a point.
    pub l_max: usize,
    /// Requested absolute accuracy of the mode sum.
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: f64,
    /// Bound on the omitted modes.
    pub tail_bound: f64,
    pub modes: usize,
    /// Set when tail_bound exceeds the requested tolerance.
    pub truncation_warning: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelGradient {
    /// d/dx_i with respect to the first point.
    pub euclidean: Vec<f64>,
    /// d/dy with respect to the first point.
    pub cross: f64,
    pub tail_bound: f64,
}

impl KernelGradient {
    pub fn norm(&self) -> f64 {
        (self.euclidean.iter().map(|g| g * g).sum::<f64>() + self.cross * self.cross).sqrt()
    }
}

/// Euclidean resolvent of R^n at spectral parameter kappa and distance d.
pub fn euclidean_kernel(n: usize, kappa: f64, d: f64) -> Result<f64> {
    let nf = n as f64;
    let c = (2.0 * std::f64::consts::PI).powf(-0.5 * nf);
    if kappa == 0.0 {
        if n < 3 {
            return Err(Error::Domain("the k = 0 kernel of R^2 does not exist".into()));
        }
        return Ok(specfun::gamma(0.5 * nf - 1.0) / (4.0 * std::f64::consts::PI.powf(0.5 * nf)) * d.powf(2.0 - nf));
    }
    Ok(c * kappa.powf(nf - 2.0) * specfun::l_a(nf, kappa * d)?)
}

/// d/dd of `euclidean_kernel`.
pub fn euclidean_kernel_radial_derivative(n: usize, kappa: f64, d: f64) -> Result<f64> {
    let nf = n as f64;
    let c = (2.0 * std::f64::consts::PI).powf(-0.5 * nf);
    Ok(c * kappa.powf(nf - 1.0) * specfun::l_a_prime(nf, kappa * d)?)
}

fn modes_of(cs: &CrossSection, l_max: usize) -> Result<Vec<(f64, f64)>> {
    // (mu, weight) with the mode product psi(y) psi(y') folded in later
    match cs.kind {
        CrossSectionKind::Point => Ok(vec![(0.0, 1.0)]),
        CrossSectionKind::Circle { length } => {
            let w = 2.0 * std::f64::consts::PI / length;
            Ok((0..=l_max).map(|j| (w * j as f64, j as f64)).collect())
        }
        CrossSectionKind::General => {
            if cs.dim == 0 {
                Ok(vec![(0.0, 1.0)])
            } else {
                Err(Error::Unsupported("mode sums need explicit eigenfunctions (point or circle)".into()))
            }
        }
    }
}

impl ProductResolvent {
    pub fn new(end: &EndSpec, k: f64) -> Self {
        let l_max = match end.cross_section.kind {
            CrossSectionKind::Circle { .. } => 64,
            _ => 0,
        };
        Self { euclidean_dim: end.euclidean_dim, cross_section: end.cross_section.clone(), k, l_max, tol: 1e-12 }
    }

    fn check(&self, z: &ProductPoint, zp: &ProductPoint) -> Result<f64> {
        if !(self.k > 0.0) {
            return Err(Error::Domain(format!("resolvent needs k > 0, got {}", self.k)));
        }
        if z.x.len() != self.euclidean_dim || zp.x.len() != self.euclidean_dim {
            return Err(Error::InvalidDimension("points have the wrong Euclidean dimension".into()));
        }
        let d = z.x.iter().zip(&zp.x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if d == 0.0 {
            // on a circle the mode sum with d = 0 only converges off the fibre diagonal
            // and the kernel is singular there anyway; refuse both
            return Err(Error::Domain("resolvent kernel is singular at coincident Euclidean coordinates".into()));
        }
        Ok(d)
    }

    /// Mode-sum value of (Delta + k^2)^{-1}(z, z').
    pub fn kernel(&self, z: &ProductPoint, zp: &ProductPoint) -> Result<KernelValue> {
        let d = self.check(z, zp)?;
        let n = self.euclidean_dim;
        let modes = modes_of(&self.cross_section, self.l_max)?;
        let k2 = self.k * self.k;
        let mut sum = 0.0;
        match self.cross_section.kind {
            CrossSectionKind::Circle { length } => {
                let dy = z.y - zp.y;
                for &(mu, j) in &modes {
                    let g = euclidean_kernel(n, (k2 + mu * mu).sqrt(), d)?;
                    let c = if j == 0.0 { 1.0 / length } else { 2.0 / length * (mu * dy).cos() };
                    sum += c * g;
                }
                let tail = self.tail(d, length)?;
                Ok(KernelValue { value: sum, tail_bound: tail, modes: modes.len(), truncation_warning: tail > self.tol })
            }
            _ => {
                let g = euclidean_kernel(n, self.k, d)? / self.cross_section.volume;
                Ok(KernelValue { value: g, tail_bound: 0.0, modes: 1, truncation_warning: false })
            }
        }
    }

    /// Sum of |mode| over the omitted Fourier modes, summed until the terms are
    /// negligible and closed with a geometric remainder.
    fn tail(&self, d: f64, length: f64) -> Result<f64> {
        let n = self.euclidean_dim;
        let w = 2.0 * std::f64::consts::PI / length;
        let k2 = self.k * self.k;
        let mut total = 0.0;
        let mut prev = f64::INFINITY;
        let mut j = self.l_max + 1;
        loop {
            let mu = w * j as f64;
            let kap = (k2 + mu * mu).sqrt();
            // below the underflow level of L_n the terms are zero for our purposes
            if kap * d > 700.0 {
                break;
            }
            let t = 2.0 / length * euclidean_kernel(n, kap, d)?;
            total += t;
            let ratio = t / prev;
            prev = t;
            if t <= 1e-18 * total.max(1e-300) && ratio < 1.0 {
                total += t * ratio / (1.0 - ratio);
                break;
            }
            if j > self.l_max + 100_000 {
                return Err(Error::NonConvergence("mode tail did not settle".into()));
            }
            j += 1;
        }
        Ok(total)
    }

    /// Analytic gradient in the first point.
    pub fn gradient(&self, z: &ProductPoint, zp: &ProductPoint) -> Result<KernelGradient> {
        let d = self.check(z, zp)?;
        let n = self.euclidean_dim;
        let modes = modes_of(&self.cross_section, self.l_max)?;
        let k2 = self.k * self.k;
        let mut radial = 0.0;
        let mut cross = 0.0;
        let tail_bound;
        match self.cross_section.kind {
            CrossSectionKind::Circle { length } => {
                let dy = z.y - zp.y;
                for &(mu, j) in &modes {
                    let kap = (k2 + mu * mu).sqrt();
                    let gd = euclidean_kernel_radial_derivative(n, kap, d)?;
                    if j == 0.0 {
                        radial += gd / length;
                    } else {
                        let g = euclidean_kernel(n, kap, d)?;
                        radial += 2.0 / length * (mu * dy).cos() * gd;
                        cross -= 2.0 / length * mu * (mu * dy).sin() * g;
                    }
                }
                // each omitted mode contributes at most (kappa + mu) times its kernel term roughly;
                // bound with the largest retained frequency scaling
                let mu_next = 2.0 * std::f64::consts::PI / length * (self.l_max + 1) as f64;
                tail_bound = self.tail(d, length)? * (2.0 * mu_next + n as f64 / d + 1.0);
            }
            _ => {
                radial = euclidean_kernel_radial_derivative(n, self.k, d)? / self.cross_section.volume;
                tail_bound = 0.0;
            }
        }
        let euclidean = z.x.iter().zip(&zp.x).map(|(a, b)| radial * (a - b) / d).collect();
        Ok(KernelGradient { euclidean, cross, tail_bound })
    }
}

/// resolvent_kernel(end, k, z, z') with the default truncation.
pub fn resolvent_kernel(end: &EndSpec, k: f64, z: &ProductPoint, zp: &ProductPoint) -> Result<KernelValue> {
    ProductResolvent::new(end, k).kernel(z, zp)
}

pub fn resolvent_gradient(end: &EndSpec, k: f64, z: &ProductPoint, zp: &ProductPoint) -> Result<KernelGradient> {
    ProductResolvent::new(end, k).gradient(z, zp)
}

/// Shapes of the pointwise bounds on the product resolvents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeForm {
    Upper3,
    Lower3,
    Grad3,
    Upper2,
    Lower2,
    Grad2,
}

impl EnvelopeForm {
    pub fn is_lower(self) -> bool {
        matches!(self, EnvelopeForm::Lower3 | EnvelopeForm::Lower2)
    }

    pub fn is_gradient(self) -> bool {
        matches!(self, EnvelopeForm::Grad3 | EnvelopeForm::Grad2)
    }

    /// Algebraic prefactor of the bound (the part without exponential).
    pub fn prefactor(self, total_dim: usize, n: usize, k: f64, d: f64) -> f64 {
        let nn = total_dim as f64;
        let ne = n as f64;
        match self {
            EnvelopeForm::Upper3 | EnvelopeForm::Lower3 => d.powf(2.0 - nn) + d.powf(2.0 - ne),
            EnvelopeForm::Grad3 => d.powf(1.0 - nn) + d.powf(1.0 - ne),
            EnvelopeForm::Upper2 | EnvelopeForm::Lower2 => d.powf(2.0 - nn) + 1.0 + (k * d).ln().abs(),
            EnvelopeForm::Grad2 => d.powf(1.0 - nn) + 1.0 / d,
        }
    }
}

/// Fitted constants for one form: kernel <= C pre e^{-c k d} (upper and
/// gradient forms) or kernel >= c pre e^{-C k d} (lower forms).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundEnvelope {
    pub form: EnvelopeForm,
    pub c: f64,
    pub big_c: f64,
    pub samples: usize,
    /// Constants from each refinement level (coarse first).
    pub history: Vec<(f64, f64)>,
    pub stable: bool,
    /// Sample attaining the extreme ratio: (k, d, kernel value).
    pub worst: (f64, f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSweep {
    pub k_min: f64,
    pub k_max: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub nk: usize,
    pub nd: usize,
    /// Fibre offset of the second point (circle ends).
    pub dy: f64,
}

impl EnvelopeSweep {
    fn samples(&self, level: usize) -> (Vec<f64>, Vec<f64>) {
        let nk = (self.nk - 1) * (1 << level) + 1;
        let nd = (self.nd - 1) * (1 << level) + 1;
        let geo = |a: f64, b: f64, n: usize| -> Vec<f64> {
            (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1).max(1) as f64)).collect()
        };
        (geo(self.k_min, self.k_max, nk), geo(self.d_min, self.d_max, nd))
    }
}

fn sample_value(pr: &ProductResolvent, form: EnvelopeForm, d: f64, dy: f64) -> Result<f64> {
    let n = pr.euclidean_dim;
    let z = ProductPoint::on_axis(n, d, dy);
    let zp = ProductPoint::on_axis(n, 0.0, 0.0);
    if form.is_gradient() {
        Ok(pr.gradient(&z, &zp)?.norm())
    } else {
        Ok(pr.kernel(&z, &zp)?.value)
    }
}

/// Fit the constants of `form` over explicit (k, d) samples.  The exponential
/// rate comes from a least-squares line of log(value / prefactor) against
/// k d; the multiplicative constant is then the extreme ratio.
pub fn fit_envelope(
    end: &EndSpec,
    form: EnvelopeForm,
    ks: &[f64],
    ds: &[f64],
    dy: f64,
) -> Result<KernelBoundEnvelope> {
    let n = end.euclidean_dim;
    let total = end.total_dim();
    match form {
        EnvelopeForm::Upper2 | EnvelopeForm::Lower2 | EnvelopeForm::Grad2 if n != 2 => {
            return Err(Error::Domain("two-dimensional envelope on an end with n != 2".into()))
        }
        EnvelopeForm::Upper3 | EnvelopeForm::Lower3 | EnvelopeForm::Grad3 if n < 3 => {
            return Err(Error::Domain("n >= 3 envelope on an end with n = 2".into()))
        }
        _ => {}
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut raw = Vec::new();
    for &k in ks {
        let pr = ProductResolvent::new(end, k);
        for &d in ds {
            let val = sample_value(&pr, form, d, dy)?;
            if !(val > 0.0) {
                return Err(Error::EnvelopeViolation(format!("non-positive sample {val} at k = {k}, d = {d}")));
            }
            let pre = form.prefactor(total, n, k, d);
            xs.push(k * d);
            ys.push((val / pre).ln());
            raw.push((k, d, val));
        }
    }
    let line = fit::line_fit(&xs, &ys)?;
    // decay rate from the fit; the bound shape needs 0 < c for the upper forms
    let rate = (-line.slope).max(1e-6);
    let mut worst = raw[0];
    let (c, big_c) = if form.is_lower() {
        // value >= c pre e^{-C k d}: use C = rate, c = min ratio
        let mut best = f64::INFINITY;
        for (i, (&x, &y)) in xs.iter().zip(&ys).enumerate() {
            let t = (y + rate * x).exp();
            if t < best {
                best = t;
                worst = raw[i];
            }
        }
        (best, rate)
    } else {
        let mut best: f64 = 0.0;
        for (i, (&x, &y)) in xs.iter().zip(&ys).enumerate() {
            let t = (y + rate * x).exp();
            if t > best {
                best = t;
                worst = raw[i];
            }
        }
        (rate, best)
    };
    if !(c > 0.0 && big_c.is_finite() && big_c > 0.0) {
        return Err(Error::EnvelopeViolation(format!(
            "{form:?}: degenerate constants c = {c}, C = {big_c}, worst sample {worst:?}"
        )));
    }
    Ok(KernelBoundEnvelope {
        form,
        c,
        big_c,
        samples: xs.len(),
        history: vec![(c, big_c)],
        stable: true,
        worst,
    })
}

/// Fit on successively refined sweeps; stable when both constants move by
/// at most `tolerance` (relative) between the last two levels.
pub fn verify_envelope(
    end: &EndSpec,
    form: EnvelopeForm,
    sweep: &EnvelopeSweep,
    refinements: usize,
    tolerance: f64,
) -> Result<KernelBoundEnvelope> {
    let mut history = Vec::new();
    let mut last = None;
    for level in 0..=refinements {
        let (ks, ds) = sweep.samples(level);
        let e = fit_envelope(end, form, &ks, &ds, sweep.dy)?;
        history.push((e.c, e.big_c));
        last = Some(e);
    }
    let mut e = last.expect("at least one level");
    let stable = history.windows(2).last().map_or(true, |w| {
        let (a, b) = (w[0], w[1]);
        ((a.0 - b.0) / b.0).abs() <= tolerance && ((a.1 - b.1) / b.1).abs() <= tolerance
    });
    e.history = history;
    e.stable = stable;
    Ok(e)
}

// ---------------------------------------------------------------------------
// Discrete product resolvents
// ---------------------------------------------------------------------------

/// Radial grid of the zero channel of R^n x M from the origin to R_max.
/// Nodes at radius >= the junction coincide with the axis nodes of the same
/// end, and so do the flux coefficients between them.
#[derive(Clone, Debug)]
pub struct ProductGrid {
    pub side: Side,
    pub n: usize,
    /// Radii, ascending, starting at 0.
    pub r: Vec<f64>,
    pub mass: Vec<f64>,
    pub flux: Vec<f64>,
    /// Axis index of each product node, where one exists.
    pub axis_index: Vec<Option<usize>>,
    weight_constant: f64,
}

impl ProductGrid {
    pub fn for_end(m: &ModelManifold, g: &AxisGrid, side: Side) -> Result<Self> {
        let end = m.end(side);
        let n = end.euclidean_dim;
        let c = end.weight_constant();
        // axis nodes on this end by increasing r
        let mut idx: Vec<usize> = (0..g.len())
            .filter(|&i| g.region[i] == region_of(side) && g.side_radius(side, i).is_some())
            .collect();
        if side == Side::Minus {
            idx.reverse();
        }
        let r_junc = g.side_radius(side, idx[0]).unwrap();
        // inner nodes: uniform spacing close to the compact spacing, down to 0
        let h = g.spec.ds;
        let ni = (r_junc / h).round().max(2.0) as usize;
        let hi = r_junc / ni as f64;
        let mut r: Vec<f64> = (0..ni).map(|i| hi * i as f64).collect();
        let mut axis_index = vec![None; ni];
        for &i in &idx {
            r.push(g.side_radius(side, i).unwrap());
            axis_index.push(Some(i));
        }
        let nn = r.len();
        let mut flux = Vec::with_capacity(nn - 1);
        for i in 0..nn - 1 {
            let f = if i == 0 {
                // midpoint rule on the first cell avoids the singular integral at 0
                let rm = 0.5 * (r[0] + r[1]);
                c * rm.powi(n as i32 - 1) / (r[1] - r[0])
            } else if let (Some(a), Some(b)) = (axis_index[i], axis_index[i + 1]) {
                g.flux[a.min(b)]
            } else {
                1.0 / inv_weight(n, c, r[i], r[i + 1])
            };
            flux.push(f);
        }
        let mut mass = Vec::with_capacity(nn);
        for i in 0..nn {
            let a = if i == 0 { 0.0 } else { 0.5 * (r[i - 1] + r[i]) };
            let b = if i == nn - 1 { r[nn - 1] } else { 0.5 * (r[i] + r[i + 1]) };
            mass.push(c * (b.powi(n as i32) - a.powi(n as i32)) / n as f64);
        }
        // masses on shared nodes must agree with the axis only where the
        // dual cell is inside the product region; the junction node differs
        Ok(Self { side, n, r, mass, flux, axis_index, weight_constant: c })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        *self.r.last().unwrap()
    }

    pub fn operator(&self) -> RadialOperator {
        let nn = self.len();
        RadialOperator {
            x: self.r.clone(),
            mass: self.mass.clone(),
            flux: self.flux.clone(),
            potential: vec![0.0; nn],
            end_weight: [0.0, self.weight_constant * self.r_max().powi(self.n as i32 - 1)],
            ghost_flux: [None, None],
        }
    }

    pub fn radiation(&self, k: f64) -> Result<Boundary> {
        Ok(Boundary::Robin(decay_rate(self.n, 0, k, self.r_max())?))
    }

    /// Product node of an axis index.
    pub fn node_of_axis(&self, i: usize) -> Option<usize> {
        self.axis_index.iter().position(|a| *a == Some(i))
    }

    /// Nearest product node to radius r.
    pub fn nearest(&self, r: f64) -> usize {
        let mut best = 0;
        for (i, x) in self.r.iter().enumerate() {
            if (x - r).abs() < (self.r[best] - r).abs() {
                best = i;
            }
        }
        best
    }
}

fn region_of(side: Side) -> Region {
    match side {
        Side::Minus => Region::Minus,
        Side::Plus => Region::Plus,
    }
}

fn inv_weight(n: usize, c: f64, a: f64, b: f64) -> f64 {
    if n == 2 {
        (b / a).ln() / c
    } else {
        let nf = n as f64;
        (a.powf(2.0 - nf) - b.powf(2.0 - nf)) / ((nf - 2.0) * c)
    }
}

/// Discrete zero-channel resolvent of one product end at energy k.
#[derive(Clone, Debug)]
pub struct DiscreteProductResolvent {
    pub grid: ProductGrid,
    pub k: f64,
    /// Kernel with respect to the measure diag(mass).
    pub kernel: DMatrix<f64>,
}

impl DiscreteProductResolvent {
    pub fn new(grid: ProductGrid, k: f64) -> Result<Self> {
        let op = grid.operator();
        let right = grid.radiation(k)?;
        let kernel = op.green_matrix(k * k, Boundary::Robin(0.0), right)?;
        Ok(Self { grid, k, kernel })
    }

    /// Column of the kernel at product node j (values at every product node).
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.kernel.column(j).iter().copied().collect()
    }
}

/// Zero-channel decaying profile of (Delta + k^2) on an end: the discrete
/// solution radiating at R_max, exactly annihilated at every node beyond the
/// origin, normalised to `anchor` at product node `j_ref`.
pub fn discrete_decaying_profile(grid: &ProductGrid, k: f64, j_ref: usize, anchor: f64) -> Result<Vec<f64>> {
    let op = grid.operator();
    let right = grid.radiation(k)?;
    let mut rhs = vec![0.0; grid.len()];
    rhs[0] = 1.0 / grid.mass[0];
    let u = op.solve(k * k, &rhs, Boundary::Robin(0.0), right)?;
    let s = anchor / u[j_ref];
    Ok(u.iter().map(|x| x * s).collect())
}

/// Green column at the origin scaled so its flux is one in units of the
/// end's weight constant: c_minus G behaves like -log r + const on the
/// minus end, and (n - 2) c_plus G equals r^{2-n} at k = 0 on the plus end.
pub fn discrete_flux_profile(grid: &ProductGrid, k: f64) -> Result<Vec<f64>> {
    let op = grid.operator();
    let right = grid.radiation(k)?;
    let mut rhs = vec![0.0; grid.len()];
    rhs[0] = 1.0 / grid.mass[0];
    let u = op.solve(k * k, &rhs, Boundary::Robin(0.0), right)?;
    let scale = if grid.n == 2 { grid.weight_constant } else { (grid.n as f64 - 2.0) * grid.weight_constant };
    Ok(u.iter().map(|x| x * scale).collect())
}
