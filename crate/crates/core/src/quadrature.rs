//! Composite Gauss–Legendre quadrature for matrix-valued integrands.

use crate::curve::Curve;
use crate::error::{LabError, Result};
use crate::lie::Matrix;

const NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Convergence controls for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    /// Relative change between successive halvings that ends refinement.
    pub rel_tol: f64,
    /// Maximum number of panels per smooth segment.
    pub max_panels: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            rel_tol: 1e-12,
            max_panels: 1 << 14,
        }
    }
}

fn gauss_panels<F>(f: &F, a: f64, b: f64, panels: usize) -> Result<(Matrix, f64)>
where
    F: Fn(f64) -> Result<Matrix>,
{
    let h = (b - a) / panels as f64;
    let mut sum: Option<Matrix> = None;
    let mut mass = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            let val = f(mid + 0.5 * h * x)?;
            let weight = 0.5 * h * w;
            mass += weight * val.norm();
            match sum.as_mut() {
                Some(s) => *s += val * weight,
                None => sum = Some(val * weight),
            }
        }
    }
    Ok((sum.expect("at least one panel"), mass))
}

fn integrate_segment<F>(f: &F, a: f64, b: f64, cfg: QuadratureConfig) -> Result<Matrix>
where
    F: Fn(f64) -> Result<Matrix>,
{
    let mut panels = 1;
    let (mut prev, _) = gauss_panels(f, a, b, panels)?;
    loop {
        panels *= 2;
        let (next, mass) = gauss_panels(f, a, b, panels)?;
        let change = (&next - &prev).norm();
        let scale = next.norm().max(mass);
        if change <= cfg.rel_tol * scale || scale == 0.0 {
            return Ok(next);
        }
        if panels >= cfg.max_panels {
            return Err(LabError::Quadrature {
                achieved: change / scale,
                panels,
            });
        }
        prev = next;
    }
}

/// `∫_a^b f(s) ds`, splitting at `breakpoints` so that no panel straddles a knot.
///
/// Orientation follows the usual convention: swapping the limits negates the result.
pub fn integrate<F>(f: F, a: f64, b: f64, breakpoints: &[f64], cfg: QuadratureConfig) -> Result<Matrix>
where
    F: Fn(f64) -> Result<Matrix>,
{
    if a > b {
        return integrate(f, b, a, breakpoints, cfg).map(|m| -m);
    }
    let mut knots = vec![a];
    knots.extend(breakpoints.iter().copied().filter(|&t| t > a && t < b));
    knots.push(b);
    let mut total: Option<Matrix> = None;
    for w in knots.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let part = integrate_segment(&f, w[0], w[1], cfg)?;
        match total.as_mut() {
            Some(t) => *t += part,
            None => total = Some(part),
        }
    }
    match total {
        Some(t) => Ok(t),
        // a == b: evaluate once to learn the shape, the integral is zero
        None => Ok(f(a)? * 0.0),
    }
}

pub fn integrate_scalar<F>(f: F, a: f64, b: f64, breakpoints: &[f64], cfg: QuadratureConfig) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let m = integrate(|t| Ok(Matrix::from_element(1, 1, f(t)?)), a, b, breakpoints, cfg)?;
    Ok(m[(0, 0)])
}

/// Riemann integral of a curve over its whole interval.
pub fn riemann_integral(curve: &Curve) -> Result<Matrix> {
    let (a, b) = curve.interval();
    integrate_curve(curve, a, b)
}

/// `∫_a^b γ(s) ds` for a sub-interval of the curve's domain.
pub fn integrate_curve(curve: &Curve, a: f64, b: f64) -> Result<Matrix> {
    integrate(|t| curve.eval(t, 0), a, b, curve.breakpoints(), QuadratureConfig::default())
}
