//! Steklov window averages and L2 shift moduli of sampled functions.
//!
//! A sampled function lives on an [`ArcGrid`] and is extended by zero
//! outside its interval. The window average over width `delta`,
//!
//!   f_delta(s) = (1/delta) * int_{s - delta/2}^{s + delta/2} f,
//!
//! is contractive in the sup norm and weakly differentiable with
//!
//!   f_delta'(s) = ( f(s + delta/2) - f(s - delta/2) ) / delta,
//!
//! which is how rough (merely bounded) data acquires a usable derivative.
//! The L2 shift modulus measures how far f is from its own translates and
//! is the quantity whose decay (or failure to decay) separates convergent
//! from non-convergent curvature data.

use serde::{Deserialize, Serialize};

use crate::curve::ArcGrid;
use crate::error::{Error, Result};

/// Interpolation model between the nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    /// Piecewise linear through the node values; default.
    PiecewiseLinear,
    /// Constant on each cell `[s_i, s_{i+1})`, taking the left node value.
    /// Step functions with breakpoints on nodes are represented exactly.
    PiecewiseConstant,
}

/// Scalar samples on a uniform grid, zero outside the interval.
#[derive(Debug, Clone)]
pub struct SampledFunction {
    pub grid: ArcGrid,
    pub values: Vec<f64>,
    pub interp: Interpolation,
}

impl SampledFunction {
    pub fn new(grid: ArcGrid, values: Vec<f64>, interp: Interpolation) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for a {}-node grid",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("function samples must be finite".into()));
        }
        Ok(Self { grid, values, interp })
    }

    /// Piecewise-linear samples; the common case.
    pub fn linear(grid: ArcGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, values, Interpolation::PiecewiseLinear)
    }

    /// Piecewise-constant samples (left-node convention).
    pub fn step(grid: ArcGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, values, Interpolation::PiecewiseConstant)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// sup norm over the nodes, which equals the sup norm of either
    /// interpolant.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Point evaluation of the zero-extended interpolant. Piecewise-constant
    /// evaluation is right-continuous at the nodes.
    pub fn eval(&self, x: f64) -> f64 {
        let s0 = self.grid.s_min();
        let s1 = self.grid.s_max();
        if x < s0 || x > s1 {
            return 0.0;
        }
        let ds = self.grid.delta();
        let pos = (x - s0) / ds;
        let cell = (pos.floor() as usize).min(self.len() - 2);
        match self.interp {
            Interpolation::PiecewiseConstant => {
                if x >= s1 {
                    // Right endpoint: the last node value, a zero-measure
                    // detail that keeps eval total.
                    self.values[self.len() - 1]
                } else {
                    self.values[cell]
                }
            }
            Interpolation::PiecewiseLinear => {
                let w = pos - cell as f64;
                self.values[cell] * (1.0 - w) + self.values[cell + 1] * w
            }
        }
    }

    /// Exact primitive F(x) = int_{-inf}^{x} f of the zero-extended
    /// interpolant, evaluated via cached cell integrals.
    fn primitive(&self) -> Primitive<'_> {
        let n = self.len();
        let ds = self.grid.delta();
        let mut cum = Vec::with_capacity(n);
        cum.push(0.0);
        for i in 0..n - 1 {
            let cell = match self.interp {
                Interpolation::PiecewiseConstant => self.values[i] * ds,
                Interpolation::PiecewiseLinear => 0.5 * (self.values[i] + self.values[i + 1]) * ds,
            };
            cum.push(cum[i] + cell);
        }
        Primitive { f: self, cum }
    }
}

struct Primitive<'a> {
    f: &'a SampledFunction,
    /// cum[i] = integral from s_min to node i.
    cum: Vec<f64>,
}

impl Primitive<'_> {
    fn eval(&self, x: f64) -> f64 {
        let s0 = self.f.grid.s_min();
        let s1 = self.f.grid.s_max();
        if x <= s0 {
            return 0.0;
        }
        if x >= s1 {
            return *self.cum.last().unwrap();
        }
        let ds = self.f.grid.delta();
        let pos = (x - s0) / ds;
        let cell = (pos.floor() as usize).min(self.f.len() - 2);
        let w = x - self.f.grid.node(cell);
        match self.f.interp {
            Interpolation::PiecewiseConstant => self.cum[cell] + self.f.values[cell] * w,
            Interpolation::PiecewiseLinear => {
                let a = self.f.values[cell];
                let b = self.f.values[cell + 1];
                let slope = (b - a) / ds;
                self.cum[cell] + a * w + 0.5 * slope * w * w
            }
        }
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidInput(format!("window width must be positive, got {delta}")));
    }
    Ok(())
}

/// Window average of width `delta`, sampled back onto the input grid.
/// The window integral is computed exactly for the interpolant, so the
/// operation is linear in the samples and contractive in the sup norm.
pub fn steklov(f: &SampledFunction, delta: f64) -> Result<SampledFunction> {
    check_delta(delta)?;
    let prim = f.primitive();
    let values = f
        .grid
        .nodes()
        .map(|s| (prim.eval(s + 0.5 * delta) - prim.eval(s - 0.5 * delta)) / delta)
        .collect();
    SampledFunction::new(f.grid, values, f.interp)
}

/// Window average evaluated at one point; same quadrature as [`steklov`].
pub fn steklov_at(f: &SampledFunction, delta: f64, x: f64) -> Result<f64> {
    check_delta(delta)?;
    let prim = f.primitive();
    Ok((prim.eval(x + 0.5 * delta) - prim.eval(x - 0.5 * delta)) / delta)
}

/// Weak derivative of the window average: the window-difference quotient
/// (f(s + delta/2) - f(s - delta/2)) / delta on the nodes. This is the
/// exact derivative of the function produced by [`steklov`].
pub fn steklov_derivative(f: &SampledFunction, delta: f64) -> Result<SampledFunction> {
    check_delta(delta)?;
    let values = f
        .grid
        .nodes()
        .map(|s| (f.eval(s + 0.5 * delta) - f.eval(s - 0.5 * delta)) / delta)
        .collect();
    SampledFunction::new(f.grid, values, f.interp)
}

/// Number of shift samples used to approximate the supremum over
/// |eta| <= delta/2 (odd, so 0 and the endpoints are always included).
pub const DEFAULT_SHIFT_SAMPLES: usize = 65;

/// Builds the shift sample set for the modulus supremum. Piecewise-constant
/// functions get every integer multiple of the node spacing inside the
/// window added: the squared shift integral is then piecewise linear in the
/// shift between those values, so its supremum is attained exactly on the
/// sample set.
fn shift_samples(f: &SampledFunction, delta: f64, count: usize) -> Vec<f64> {
    let half = 0.5 * delta;
    let mut etas: Vec<f64> = (0..count)
        .map(|i| -half + delta * i as f64 / (count - 1) as f64)
        .collect();
    etas.push(0.0);
    if f.interp == Interpolation::PiecewiseConstant {
        let ds = f.grid.delta();
        let m = (half / ds).floor() as i64;
        for k in -m..=m {
            etas.push(k as f64 * ds);
        }
    }
    etas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    etas.dedup_by(|a, b| (*a - *b).abs() < f64::EPSILON * delta.max(1.0));
    etas
}

/// Exact integral of (f(s) - f(s + eta))^2 over (a, b): Simpson's rule on
/// the segments cut by every kink of f(.) and f(. + eta), where the
/// integrand is polynomial of degree at most two.
fn shift_l2_sq(f: &SampledFunction, a: f64, b: f64, eta: f64) -> f64 {
    debug_assert!(b > a);
    let s0 = f.grid.s_min();
    let s1 = f.grid.s_max();
    let ds = f.grid.delta();

    // Outside the union of supports of f(.) and f(. - eta shifted view)
    // the integrand vanishes; clip to save work.
    let lo = a.max((s0 - eta).min(s0));
    let hi = b.min((s1 - eta).max(s1));
    if hi <= lo {
        return 0.0;
    }

    let mut cuts: Vec<f64> = vec![lo, hi];
    // Kinks of f at its nodes, of the shifted factor at nodes - eta.
    let first = ((lo - s0) / ds).floor() as i64 - 1;
    let last = ((hi - s0) / ds).ceil() as i64 + 1;
    for k in first..=last {
        let node = s0 + k as f64 * ds;
        if node > lo && node < hi && k >= 0 && k < f.len() as i64 {
            cuts.push(node);
        }
        let shifted = node - eta;
        if shifted > lo && shifted < hi && k >= 0 && k < f.len() as i64 {
            cuts.push(shifted);
        }
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-14 * ds.max(1.0));

    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (l, r) = (w[0], w[1]);
        if r - l <= 0.0 {
            continue;
        }
        let g = |x: f64| {
            let d = f.eval(x) - f.eval(x + eta);
            d * d
        };
        // Two-point Gauss quadrature: exact for the (at most quadratic)
        // integrand between cuts, and both nodes are strictly interior so
        // one-sided limits at the kinks never come into play.
        let h = r - l;
        let mid = 0.5 * (l + r);
        let off = 0.5 * h / 3.0f64.sqrt();
        total += 0.5 * h * (g(mid - off) + g(mid + off));
    }
    total
}

/// L2 shift modulus per partition cell: for each cell (p[i], p[i+1]) the
/// square root of sup over |eta| <= delta/2 of
/// int_cell (f(s) - f(s + eta))^2 ds, with the zero extension in force.
pub fn shift_modulus(f: &SampledFunction, delta: f64, partition: &[f64]) -> Result<Vec<f64>> {
    check_delta(delta)?;
    if partition.len() < 2 {
        return Err(Error::InvalidInput("partition needs at least two boundaries".into()));
    }
    if partition.windows(2).any(|w| w[1] <= w[0]) || partition.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidInput("partition must be finite and increasing".into()));
    }
    let etas = shift_samples(f, delta, DEFAULT_SHIFT_SAMPLES);
    Ok(partition
        .windows(2)
        .map(|w| {
            etas.iter()
                .map(|&eta| shift_l2_sq(f, w[0], w[1], eta))
                .fold(0.0f64, f64::max)
                .sqrt()
        })
        .collect())
}

/// Uniform-cell shift modulus: the supremum of [`shift_modulus`] over the
/// integer-anchored cells (n L, (n+1) L) that can see the support of the
/// zero extension. `cell` defaults to 1 in [`sigma`].
pub fn sigma_with_cell(f: &SampledFunction, delta: f64, cell: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(cell.is_finite() && cell > 0.0) {
        return Err(Error::InvalidInput("cell length must be positive".into()));
    }
    let lo = ((f.grid.s_min() - 0.5 * delta) / cell).floor() as i64 - 1;
    let hi = ((f.grid.s_max() + 0.5 * delta) / cell).ceil() as i64 + 1;
    let partition: Vec<f64> = (lo..=hi).map(|k| k as f64 * cell).collect();
    let moduli = shift_modulus(f, delta, &partition)?;
    Ok(moduli.into_iter().fold(0.0, f64::max))
}

/// Shift modulus over unit cells (n, n+1), the normalisation used for rate
/// brackets.
pub fn sigma(f: &SampledFunction, delta: f64) -> Result<f64> {
    sigma_with_cell(f, delta, 1.0)
}

/// Power-law rule delta(eps) = coeff * eps^exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub coeff: f64,
    pub exponent: f64,
}

impl PowerLaw {
    pub fn new(coeff: f64, exponent: f64) -> Result<Self> {
        if !(coeff.is_finite() && coeff > 0.0) {
            return Err(Error::InvalidInput("power law coefficient must be positive".into()));
        }
        if !(exponent.is_finite() && exponent > 0.0 && exponent <= 1.0) {
            return Err(Error::InvalidInput(
                "power law exponent must lie in (0, 1]: wider windows than the radius defeat \
                 the averaging, faster-shrinking ones lose the derivative bound"
                    .into(),
            ));
        }
        Ok(Self { coeff, exponent })
    }

    pub fn eval(&self, eps: f64) -> f64 {
        self.coeff * eps.powf(self.exponent)
    }
}

/// Window-width schedule tying the mollifier to the tube radius: one law
/// for the curvature pair, one for the rotation rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSchedule {
    pub delta: PowerLaw,
    pub delta_tilde: PowerLaw,
}

impl MollifierSchedule {
    pub fn new(delta: PowerLaw, delta_tilde: PowerLaw) -> Self {
        Self { delta, delta_tilde }
    }

    /// delta(eps) = eps^(2/3), delta_tilde(eps) = eps: the choice that
    /// balances eps/delta against the shift modulus of merely bounded data.
    pub fn two_thirds() -> Self {
        Self {
            delta: PowerLaw { coeff: 1.0, exponent: 2.0 / 3.0 },
            delta_tilde: PowerLaw { coeff: 1.0, exponent: 1.0 },
        }
    }

    /// delta(eps) = delta_tilde(eps) = eps: optimal for Lipschitz data.
    pub fn proportional() -> Self {
        let p = PowerLaw { coeff: 1.0, exponent: 1.0 };
        Self { delta: p, delta_tilde: p }
    }

    /// The schedules shipped with the study presets.
    pub fn shipped() -> Vec<Self> {
        vec![Self::two_thirds(), Self::proportional()]
    }

    pub fn delta(&self, eps: f64) -> f64 {
        self.delta.eval(eps)
    }

    pub fn delta_tilde(&self, eps: f64) -> f64 {
        self.delta_tilde.eval(eps)
    }
}
