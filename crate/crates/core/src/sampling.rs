//! Seeded random algebra elements and curves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::curve::{Curve, TrigTerm};
use crate::lie::{LieContext, Matrix};
use crate::norms::operator_norm;

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` derived from `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> SampleRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Algebra element with Gaussian coordinates, normalized to operator norm 1.
/// Returns zero only for a zero-dimensional algebra.
pub fn unit_direction(ctx: &LieContext, rng: &mut impl Rng) -> Matrix {
    loop {
        let coords: Vec<f64> = (0..ctx.basis().len()).map(|_| rng.sample(StandardNormal)).collect();
        let m = ctx.from_coordinates(&coords);
        let n = operator_norm(&m);
        if n > 1e-12 {
            return m / n;
        }
    }
}

/// Element of the operator-norm ball of the given radius, radially uniform in
/// the algebra dimension.
pub fn ball_element(ctx: &LieContext, rng: &mut impl Rng, radius: f64) -> Matrix {
    let dir = unit_direction(ctx, rng);
    let u: f64 = rng.random();
    dir * (radius * u.powf(1.0 / ctx.basis().len() as f64))
}

/// Smooth closed-form curve `c₀ + c₁t + c₂t² + sin(ωt + θ)·C` with every
/// coefficient of operator norm at most `scale`.
pub fn smooth_curve(ctx: &LieContext, rng: &mut impl Rng, start: f64, end: f64, scale: f64) -> Curve {
    let poly = (0..3).map(|_| ball_element(ctx, rng, scale)).collect();
    let freq = rng.random_range(0.5..4.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let coeff = ball_element(ctx, rng, scale);
    Curve::closed_form(start, end, poly, vec![TrigTerm::sin(freq, phase, coeff)])
}

/// Polynomial curve of the given degree with coefficients in the `scale` ball.
pub fn polynomial_curve(ctx: &LieContext, rng: &mut impl Rng, start: f64, end: f64, degree: usize, scale: f64) -> Curve {
    let poly = (0..=degree).map(|_| ball_element(ctx, rng, scale)).collect();
    Curve::polynomial(start, end, poly)
}

/// Curve on `[start, end]` whose derivatives of order `0..=q` have operator
/// norm at most `bound`.
///
/// Uses `a·sin(ω(t − start) + θ)·C` with `‖C‖ = 1`, `ω ≤ 1` and `|a| ≤ bound`,
/// so every derivative is bounded by `|a|`.
pub fn bounded_trig_curve(ctx: &LieContext, rng: &mut impl Rng, start: f64, end: f64, bound: f64) -> Curve {
    let freq: f64 = rng.random_range(0.2..1.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU) - freq * start;
    let c1 = unit_direction(ctx, rng) * (0.5 * bound);
    let c2 = unit_direction(ctx, rng) * (0.5 * bound);
    Curve::trig(
        start,
        end,
        vec![TrigTerm::sin(freq, phase, c1), TrigTerm::cos(freq, phase, c2)],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_respect_radius_and_seed() {
        let ctx = LieContext::gl(3);
        let mut a = rng(7);
        let mut b = rng(7);
        for _ in 0..50 {
            let x = ball_element(&ctx, &mut a, 0.3);
            assert!(operator_norm(&x) <= 0.3 + 1e-15);
            assert_eq!(x, ball_element(&ctx, &mut b, 0.3));
        }
        let so3 = LieContext::so3();
        let d = unit_direction(&so3, &mut a);
        assert!(so3.is_algebra_member(&d));
        assert!((operator_norm(&d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bounded_trig_curve_bounds_derivatives() {
        let ctx = LieContext::so3();
        let mut r = rng(3);
        let c = bounded_trig_curve(&ctx, &mut r, 0.0, 0.25, 0.5);
        let sup = c.sup_norm_upto(4, 16, operator_norm).unwrap();
        assert!(sup <= 0.5 + 1e-12);
    }
}
