//! The evolution map `φ ↦ ∫ φ` and the operations built on it.
//!
//! All steppers solve `μ̇ = φ(t)·μ`, `μ(s) = 1` with step boundaries placed on
//! every breakpoint of `φ`, so no step ever straddles a discontinuity.

use std::sync::Arc;

use crate::curve::{Curve, Order, Side};
use crate::error::{LabError, Result};
use crate::lie::{commutator, invert, GroupElement, LieContext, Matrix};
use crate::norms::operator_norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// `μ_{k+1} = exp(h·φ(t_k + h/2))·μ_k`, order 2.
    ExpMidpoint,
    /// Two-exponential commutator-free Magnus step at the Gauss nodes, order 4.
    CommutatorFree4,
    /// Classical four-stage Runge–Kutta on `μ̇ = φμ` (does not stay in the group).
    ReferenceRk4,
    /// Second-order Magnus step with 5-point Gauss quadrature. Exact up to
    /// quadrature error when every bracket is central (nilpotency class ≤ 2).
    NilpotentMagnus,
}

impl Method {
    pub fn nominal_order(self) -> f64 {
        match self {
            Method::ExpMidpoint => 2.0,
            Method::CommutatorFree4 | Method::ReferenceRk4 => 4.0,
            Method::NilpotentMagnus => 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Steps {
    Fixed(usize),
    /// Double the step count from `initial` until successive results differ by
    /// at most the tolerance; give up beyond `max`.
    Adaptive { initial: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub method: Method,
    pub steps: Steps,
    pub tolerance: f64,
    /// Also run the reference integrator at 16× steps and report the gap.
    pub oracle: bool,
    /// Number of sample points for the log-derivative defect (0 disables it).
    pub defect_samples: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            method: Method::ExpMidpoint,
            steps: Steps::Fixed(256),
            tolerance: 1e-8,
            oracle: false,
            defect_samples: 4,
        }
    }
}

impl StepperConfig {
    pub fn fixed(method: Method, steps: usize) -> Self {
        StepperConfig {
            method,
            steps: Steps::Fixed(steps),
            ..Default::default()
        }
    }

    pub fn adaptive(method: Method, tolerance: f64) -> Self {
        StepperConfig {
            method,
            steps: Steps::Adaptive {
                initial: 8,
                max: 1 << 20,
            },
            tolerance,
            ..Default::default()
        }
    }

    /// High-accuracy settings: the exact class-2 step for nilpotent contexts of
    /// class ≤ 2 and the fourth-order commutator-free step elsewhere.
    pub fn accurate(ctx: &LieContext, steps: usize) -> Self {
        let method = match ctx.nilpotency_class() {
            Some(c) if c <= 2 => Method::NilpotentMagnus,
            _ => Method::CommutatorFree4,
        };
        StepperConfig {
            defect_samples: 0,
            ..StepperConfig::fixed(method, steps)
        }
    }

    pub fn without_defect(mut self) -> Self {
        self.defect_samples = 0;
        self
    }
}

#[derive(Debug, Clone)]
pub struct EvolveReport {
    pub result: GroupElement,
    pub steps_used: usize,
    pub defect: f64,
    pub oracle_gap: Option<f64>,
}

const GAUSS5_NODES: [f64; 5] = [
    0.046_910_077_030_668,
    0.230_765_344_947_158_5,
    0.5,
    0.769_234_655_052_841_5,
    0.953_089_922_969_332,
];
const GAUSS5_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_5,
    0.239_314_335_249_683_2,
    0.284_444_444_444_444_4,
    0.239_314_335_249_683_2,
    0.118_463_442_528_094_5,
];

fn flip(side: Side) -> Side {
    match side {
        Side::Left => Side::Right,
        Side::Right => Side::Left,
    }
}

/// Propagator of one step from `a` to `a + h`; `[a, a+h]` contains no breakpoint
/// in its interior.
fn step(ctx: &LieContext, phi: &Curve, method: Method, a: f64, h: f64) -> Result<Matrix> {
    let at = |t: f64| phi.eval_sided(t, 0, Side::Right);
    match method {
        Method::ExpMidpoint => Ok(ctx.exp_matrix(&(at(a + 0.5 * h)? * h))),
        Method::CommutatorFree4 => {
            let s3 = 3f64.sqrt();
            let (c1, c2) = (0.5 - s3 / 6.0, 0.5 + s3 / 6.0);
            let (a1, a2) = ((3.0 - 2.0 * s3) / 12.0, (3.0 + 2.0 * s3) / 12.0);
            let p1 = at(a + c1 * h)?;
            let p2 = at(a + c2 * h)?;
            let first = ctx.exp_matrix(&((&p1 * a2 + &p2 * a1) * h));
            let second = ctx.exp_matrix(&((&p1 * a1 + &p2 * a2) * h));
            Ok(second * first)
        }
        Method::ReferenceRk4 => {
            // inward one-sided limits at the step ends
            let (s0, s1) = if h > 0.0 { (Side::Right, Side::Left) } else { (Side::Left, Side::Right) };
            let f0 = phi.eval_sided(a, 0, s0)?;
            let fm = at(a + 0.5 * h)?;
            let f1 = phi.eval_sided(a + h, 0, s1)?;
            let id = ctx.identity();
            let k1 = &f0 * &id;
            let k2 = &fm * (&id + &k1 * (0.5 * h));
            let k3 = &fm * (&id + &k2 * (0.5 * h));
            let k4 = &f1 * (&id + &k3 * h);
            Ok(id + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
        }
        Method::NilpotentMagnus => {
            match ctx.nilpotency_class() {
                Some(c) if c <= 2 => {}
                _ => {
                    return Err(LabError::Precondition(format!(
                        "the class-2 Magnus step needs a context of nilpotency class ≤ 2, '{}' is not",
                        ctx.name()
                    )))
                }
            }
            let mut omega1 = ctx.zero();
            let mut omega2 = ctx.zero();
            for (ci, wi) in GAUSS5_NODES.iter().zip(GAUSS5_WEIGHTS) {
                let ti = a + ci * h;
                let fi = at(ti)?;
                let mut inner = ctx.zero();
                for (cj, wj) in GAUSS5_NODES.iter().zip(GAUSS5_WEIGHTS) {
                    inner += at(a + ci * cj * h)? * (wj * ci * h);
                }
                omega2 += commutator(&fi, &inner) * (0.5 * wi * h);
                omega1 += fi * (wi * h);
            }
            Ok(ctx.exp_matrix(&(omega1 + omega2)))
        }
    }
}

/// Step grid from `s` to `t`: every knot of `φ` in between is a grid point.
pub(crate) fn grid(phi: &Curve, s: f64, t: f64, steps: usize) -> Vec<f64> {
    let (lo, hi) = if s < t { (s, t) } else { (t, s) };
    let mut knots: Vec<f64> = vec![s];
    let mut inner: Vec<f64> = phi.breakpoints().iter().copied().filter(|&b| b > lo && b < hi).collect();
    if s > t {
        inner.reverse();
    }
    knots.extend(inner);
    knots.push(t);
    let total = (t - s).abs();
    let mut pts = vec![s];
    for w in knots.windows(2) {
        let len = (w[1] - w[0]).abs();
        let n = ((steps as f64 * len / total) - 1e-9).ceil().max(1.0) as usize;
        for i in 1..n {
            pts.push(w[0] + (w[1] - w[0]) * i as f64 / n as f64);
        }
        pts.push(w[1]);
    }
    pts
}

fn check_range(phi: &Curve, s: f64, t: f64) -> Result<()> {
    let (a, b) = phi.interval();
    let slack = 1e-12 * (b - a).max(1.0);
    for x in [s, t] {
        if x < a - slack || x > b + slack || x.is_nan() {
            return Err(LabError::Argument(format!("[{s}, {t}] is not contained in the curve interval [{a}, {b}]")));
        }
    }
    if phi.dim() == 0 {
        return Err(LabError::Argument("curve has zero dimension".into()));
    }
    Ok(())
}

fn check_curve_in_algebra(ctx: &LieContext, phi: &Curve, s: f64, t: f64) -> Result<()> {
    if phi.dim() != ctx.dim() {
        return Err(LabError::Dimension {
            expected: ctx.dim(),
            rows: phi.dim(),
            cols: phi.dim(),
        });
    }
    for u in [0.5, 0.5 + 0.5_f64.sqrt() / 3.0] {
        let x = phi.eval(s + u * (t - s), 0)?;
        ctx.project(&x)?;
    }
    Ok(())
}

fn run_fixed(ctx: &LieContext, phi: &Curve, s: f64, t: f64, method: Method, steps: usize) -> Result<(Matrix, usize)> {
    let pts = grid(phi, s, t, steps);
    let mut mu = ctx.identity();
    for w in pts.windows(2) {
        mu = step(ctx, phi, method, w[0], w[1] - w[0])? * mu;
    }
    Ok((mu, pts.len() - 1))
}

/// Dense solution of `μ̇ = φμ` stored at every grid point, evaluated in between
/// by one partial step of the same method from the nearest grid point.
#[derive(Clone)]
pub struct Trajectory {
    ctx: LieContext,
    curve: Curve,
    method: Method,
    knots: Vec<f64>,
    values: Vec<Matrix>,
}

impl std::fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trajectory")
            .field("method", &self.method)
            .field("from", &self.knots.first())
            .field("to", &self.knots.last())
            .field("steps", &(self.knots.len() - 1))
            .finish()
    }
}

impl Trajectory {
    pub fn build(ctx: &LieContext, phi: &Curve, s: f64, t: f64, method: Method, steps: usize) -> Result<Trajectory> {
        check_range(phi, s, t)?;
        if s == t {
            return Ok(Trajectory {
                ctx: ctx.clone(),
                curve: phi.clone(),
                method,
                knots: vec![s],
                values: vec![ctx.identity()],
            });
        }
        check_curve_in_algebra(ctx, phi, s, t)?;
        let knots = grid(phi, s, t, steps.max(1));
        let mut values = Vec::with_capacity(knots.len());
        let mut mu = ctx.identity();
        values.push(mu.clone());
        for w in knots.windows(2) {
            mu = step(ctx, phi, method, w[0], w[1] - w[0])? * mu;
            values.push(mu.clone());
        }
        Ok(Trajectory {
            ctx: ctx.clone(),
            curve: phi.clone(),
            method,
            knots,
            values,
        })
    }

    /// Trajectory over the whole curve interval.
    pub fn over(ctx: &LieContext, phi: &Curve, cfg: &StepperConfig) -> Result<Trajectory> {
        let (a, b) = phi.interval();
        Trajectory::build(ctx, phi, a, b, cfg.method, resolve_steps(ctx, phi, a, b, cfg)?)
    }

    pub fn start(&self) -> f64 {
        self.knots[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn end(&self) -> &Matrix {
        self.values.last().unwrap()
    }

    pub fn steps(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    /// `∫_s^τ φ`.
    pub fn at(&self, tau: f64) -> Result<Matrix> {
        let n = self.knots.len();
        if n == 1 {
            return Ok(self.values[0].clone());
        }
        let forward = self.knots[n - 1] > self.knots[0];
        let (lo, hi) = if forward { (self.knots[0], self.knots[n - 1]) } else { (self.knots[n - 1], self.knots[0]) };
        let slack = 1e-12 * (hi - lo).max(1.0);
        if tau < lo - slack || tau > hi + slack || tau.is_nan() {
            return Err(LabError::Argument(format!("t = {tau} outside trajectory range [{lo}, {hi}]")));
        }
        let tau = tau.clamp(lo, hi);
        let pos = if forward {
            self.knots.partition_point(|&k| k <= tau)
        } else {
            self.knots.partition_point(|&k| k >= tau)
        };
        let idx = pos.saturating_sub(1).min(n - 2);
        let (k0, k1) = (self.knots[idx], self.knots[idx + 1]);
        if tau == k0 {
            return Ok(self.values[idx].clone());
        }
        if tau == k1 {
            return Ok(self.values[idx + 1].clone());
        }
        let (base, from) = if (tau - k0).abs() <= (k1 - tau).abs() { (idx, k0) } else { (idx + 1, k1) };
        let prop = step(&self.ctx, &self.curve, self.method, from, tau - from)?;
        Ok(prop * &self.values[base])
    }

    /// The group-valued path `τ ↦ ∫_s^τ φ`.
    pub fn path(&self) -> GroupPath {
        let me = self.clone();
        let (a, b) = if self.end_time() >= self.start() { (self.start(), self.end_time()) } else { (self.end_time(), self.start()) };
        GroupPath::new(a, b, move |t| me.at(t))
    }
}

fn resolve_steps(ctx: &LieContext, phi: &Curve, s: f64, t: f64, cfg: &StepperConfig) -> Result<usize> {
    match cfg.steps {
        Steps::Fixed(n) => {
            if n == 0 {
                return Err(LabError::Argument("step count must be at least 1".into()));
            }
            Ok(n)
        }
        Steps::Adaptive { initial, max } => {
            let mut n = initial.max(1);
            let (mut prev, _) = run_fixed(ctx, phi, s, t, cfg.method, n)?;
            loop {
                if 2 * n > max {
                    let (last, _) = run_fixed(ctx, phi, s, t, cfg.method, n)?;
                    return Err(LabError::Convergence {
                        steps: n,
                        last_change: f64::NAN,
                        last_iterate: last,
                    });
                }
                n *= 2;
                let (next, _) = run_fixed(ctx, phi, s, t, cfg.method, n)?;
                let change = (&next - &prev).norm() / next.norm().max(1.0);
                if change <= cfg.tolerance {
                    return Ok(n);
                }
                if 2 * n > max {
                    return Err(LabError::Convergence {
                        steps: n,
                        last_change: change,
                        last_iterate: next,
                    });
                }
                prev = next;
            }
        }
    }
}

/// `∫_s^t φ`, the value at `t` of the solution of `μ̇ = φμ`, `μ(s) = 1`.
pub fn evolve(ctx: &LieContext, phi: &Curve, s: f64, t: f64, cfg: &StepperConfig) -> Result<EvolveReport> {
    check_range(phi, s, t)?;
    if s == t {
        return Ok(EvolveReport {
            result: ctx.group_element(ctx.identity())?,
            steps_used: 0,
            defect: 0.0,
            oracle_gap: cfg.oracle.then_some(0.0),
        });
    }
    check_curve_in_algebra(ctx, phi, s, t)?;
    if cfg.tolerance <= 0.0 {
        return Err(LabError::Argument("tolerance must be positive".into()));
    }
    let n = resolve_steps(ctx, phi, s, t, cfg)?;
    let (mu, steps_used, defect) = if cfg.defect_samples > 0 {
        let traj = Trajectory::build(ctx, phi, s, t, cfg.method, n)?;
        let defect = trajectory_defect(&traj, phi, cfg.defect_samples)?;
        (traj.end().clone(), traj.steps(), defect)
    } else {
        let (mu, used) = run_fixed(ctx, phi, s, t, cfg.method, n)?;
        (mu, used, 0.0)
    };
    let oracle_gap = if cfg.oracle {
        let (reference, _) = run_fixed(ctx, phi, s, t, Method::ReferenceRk4, 16 * n)?;
        Some((&mu - &reference).norm() / reference.norm().max(1.0))
    } else {
        None
    };
    Ok(EvolveReport {
        result: ctx.group_element(mu)?,
        steps_used,
        defect,
        oracle_gap,
    })
}

/// Shorthand for the matrix `∫_s^t φ`.
pub fn evolve_matrix(ctx: &LieContext, phi: &Curve, s: f64, t: f64, cfg: &StepperConfig) -> Result<Matrix> {
    Ok(evolve(ctx, phi, s, t, cfg)?.result.into_matrix())
}

/// `∫ φ` over the whole curve interval.
pub fn evolve_full(ctx: &LieContext, phi: &Curve, cfg: &StepperConfig) -> Result<Matrix> {
    let (a, b) = phi.interval();
    evolve_matrix(ctx, phi, a, b, cfg)
}

fn trajectory_defect(traj: &Trajectory, phi: &Curve, samples: usize) -> Result<f64> {
    let (a, b) = (traj.start().min(traj.end_time()), traj.start().max(traj.end_time()));
    let path = traj.path();
    let mut worst: f64 = 0.0;
    for i in 0..samples {
        // irrational offsets keep samples away from grid points
        let u = ((i as f64 + 0.5) / samples as f64 + 0.1 * std::f64::consts::FRAC_1_SQRT_2 / samples as f64).min(1.0);
        let t = a + u * (b - a);
        let delta = path.log_derivative_at(t)?;
        worst = worst.max(operator_norm(&(delta - phi.eval(t, 0)?)));
    }
    Ok(worst)
}

type PathFn = Arc<dyn Fn(f64) -> Result<Matrix> + Send + Sync>;

/// A differentiable group-valued curve.
#[derive(Clone)]
pub struct GroupPath {
    start: f64,
    end: f64,
    value: PathFn,
    derivative: Option<PathFn>,
}

impl std::fmt::Debug for GroupPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GroupPath")
            .field("interval", &(self.start, self.end))
            .field("analytic_derivative", &self.derivative.is_some())
            .finish()
    }
}

impl GroupPath {
    pub fn new(start: f64, end: f64, value: impl Fn(f64) -> Result<Matrix> + Send + Sync + 'static) -> Self {
        GroupPath {
            start,
            end,
            value: Arc::new(value),
            derivative: None,
        }
    }

    pub fn with_derivative(mut self, derivative: impl Fn(f64) -> Result<Matrix> + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(derivative));
        self
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.start, self.end)
    }

    pub fn eval(&self, t: f64) -> Result<Matrix> {
        (self.value)(t)
    }

    /// `μ̇(t)`, analytic if available, else a fourth-order difference quotient.
    pub fn derivative_at(&self, t: f64) -> Result<Matrix> {
        if let Some(d) = &self.derivative {
            return d(t);
        }
        let len = self.end - self.start;
        let h = 1e-3 * len.min(1.0);
        let f = |x: f64| (self.value)(x);
        if t - h >= self.start && t + h <= self.end {
            // Richardson extrapolation of central differences
            let d1 = (f(t + h)? - f(t - h)?) / (2.0 * h);
            let d2 = (f(t + 0.5 * h)? - f(t - 0.5 * h)?) / h;
            Ok((d2 * 4.0 - d1) / 3.0)
        } else {
            let h = if t - h < self.start { h } else { -h };
            let fs: Vec<Matrix> = (0..5).map(|i| f(t + i as f64 * h)).collect::<Result<_>>()?;
            Ok((&fs[0] * -25.0 + &fs[1] * 48.0 - &fs[2] * 36.0 + &fs[3] * 16.0 - &fs[4] * 3.0) / (12.0 * h))
        }
    }

    /// `δ(μ)(t) = μ̇(t)·μ(t)⁻¹`.
    pub fn log_derivative_at(&self, t: f64) -> Result<Matrix> {
        let mu = self.eval(t)?;
        let inv = invert(&mu).map_err(|_| LabError::Singular { at: Some(t) })?;
        Ok(self.derivative_at(t)? * inv)
    }

    /// `t ↦ μ(t)·g`.
    pub fn right_translate(&self, g: Matrix) -> GroupPath {
        let base = self.clone();
        let g2 = g.clone();
        let mut out = GroupPath::new(self.start, self.end, move |t| Ok(base.eval(t)? * &g));
        if let Some(d) = self.derivative.clone() {
            out.derivative = Some(Arc::new(move |t| Ok(d(t)? * &g2)));
        }
        out
    }
}

/// Right logarithmic derivative `δ(μ) = μ̇·μ⁻¹` as a curve of order 0.
pub fn log_derivative(ctx: &LieContext, mu: &GroupPath) -> Curve {
    let path = mu.clone();
    Curve::from_map(mu.start, mu.end, Order::Finite(0), Vec::new(), ctx.dim(), move |t: f64, _k: usize, _side: Side| {
        Ok(vec![path.log_derivative_at(t)?])
    })
}

/// `φ̃(t) = −φ(r + r′ − t)`.
pub fn inverse_curve(phi: &Curve) -> Curve {
    let (r, r2) = phi.interval();
    let base = phi.clone();
    let bps: Vec<f64> = phi.breakpoints().iter().map(|b| r + r2 - b).collect();
    Curve::from_map(r, r2, phi.order(), bps, phi.dim(), move |t: f64, k: usize, side: Side| {
        let jet = base.jet_sided(r + r2 - t, k, flip(side))?;
        Ok(jet
            .into_iter()
            .enumerate()
            .map(|(m, d)| if m % 2 == 0 { -d } else { d })
            .collect())
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Derivatives `0..=k` of `t ↦ Ad_{μ(t)}(g(t))` where `δ(μ) = φ`, from the
/// jets of `φ` (length ≥ k) and `g` (length ≥ k+1) at `t`.
pub fn transported_jet(mu: &Matrix, mu_inv: &Matrix, phi_jet: &[Matrix], g_jet: &[Matrix], k: usize) -> Vec<Matrix> {
    // f[j][m] = d^m/dt^m Ad_μ(g^{(j)})
    let mut f: Vec<Vec<Matrix>> = (0..=k).map(|j| vec![mu * &g_jet[j] * mu_inv]).collect();
    for m in 1..=k {
        for j in 0..=(k - m) {
            let mut acc = f[j + 1][m - 1].clone();
            for i in 0..m {
                acc += commutator(&phi_jet[i], &f[j][m - 1 - i]) * binomial(m - 1, i);
            }
            f[j].push(acc);
        }
    }
    f.swap_remove(0)
}

/// Derivatives `0..=k` of `t ↦ Ad_{μ(t)⁻¹}(g(t))` where `δ(μ) = φ`.
pub fn inverse_transported_jet(mu: &Matrix, mu_inv: &Matrix, phi_jet: &[Matrix], g_jet: &[Matrix], k: usize) -> Vec<Matrix> {
    let mut current: Vec<Matrix> = g_jet[..=k].to_vec();
    let mut out = Vec::with_capacity(k + 1);
    for m in 0..=k {
        out.push(mu_inv * &current[0] * mu);
        if m == k {
            break;
        }
        // (L g)^{(j)} = g^{(j+1)} − Σ_i C(j,i)[φ^{(i)}, g^{(j−i)}]
        let next: Vec<Matrix> = (0..current.len() - 1)
            .map(|j| {
                let mut acc = current[j + 1].clone();
                for i in 0..=j {
                    acc -= commutator(&phi_jet[i], &current[j - i]) * binomial(j, i);
                }
                acc
            })
            .collect();
        current = next;
    }
    out
}

fn check_common(phi: &Curve, psi: &Curve) -> Result<()> {
    if phi.interval() != psi.interval() {
        return Err(LabError::Argument(format!(
            "curves live on different intervals {:?} and {:?}",
            phi.interval(),
            psi.interval()
        )));
    }
    if phi.dim() != psi.dim() {
        return Err(LabError::Dimension {
            expected: phi.dim(),
            rows: psi.dim(),
            cols: psi.dim(),
        });
    }
    Ok(())
}

/// `t ↦ φ(t) + Ad_{∫_r^t φ}(ψ(t))`, whose integral is `∫φ · ∫ψ`.
pub fn combine_product(ctx: &LieContext, phi: &Curve, psi: &Curve, cfg: &StepperConfig) -> Result<Curve> {
    check_common(phi, psi)?;
    let traj = Trajectory::over(ctx, phi, cfg)?;
    let (p, q) = (phi.clone(), psi.clone());
    let (r, r2) = phi.interval();
    let mut bps = phi.breakpoints().to_vec();
    bps.extend_from_slice(psi.breakpoints());
    Ok(Curve::from_map(r, r2, phi.order().min(psi.order()), bps, phi.dim(), move |t: f64, k: usize, side: Side| {
        let pj = p.jet_sided(t, k, side)?;
        let qj = q.jet_sided(t, k, side)?;
        let mu = traj.at(t)?;
        let inv = invert(&mu).map_err(|_| LabError::Singular { at: Some(t) })?;
        let tj = transported_jet(&mu, &inv, &pj, &qj, k);
        Ok(pj.into_iter().zip(tj).map(|(a, b)| a + b).collect())
    }))
}

/// `t ↦ −Ad_{[∫_r^t φ]⁻¹}(φ(t))`, whose integral is `[∫φ]⁻¹`.
pub fn combine_inverse(ctx: &LieContext, phi: &Curve, cfg: &StepperConfig) -> Result<Curve> {
    let traj = Trajectory::over(ctx, phi, cfg)?;
    let p = phi.clone();
    let (r, r2) = phi.interval();
    Ok(Curve::from_map(r, r2, phi.order(), phi.breakpoints().to_vec(), phi.dim(), move |t: f64, k: usize, side: Side| {
        let pj = p.jet_sided(t, k, side)?;
        let mu = traj.at(t)?;
        let inv = invert(&mu).map_err(|_| LabError::Singular { at: Some(t) })?;
        Ok(inverse_transported_jet(&mu, &inv, &pj, &pj, k).into_iter().map(|m| -m).collect())
    }))
}

/// `∫_{t_{n−1}}^{t_n} φ · … · ∫_{t_0}^{t_1} φ`.
pub fn split_evolve(ctx: &LieContext, phi: &Curve, partition: &[f64], cfg: &StepperConfig) -> Result<GroupElement> {
    if partition.len() < 2 {
        return Err(LabError::Argument("partition needs at least two points".into()));
    }
    if partition.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(LabError::Argument("partition must be strictly increasing".into()));
    }
    let mut total = ctx.identity();
    for w in partition.windows(2) {
        total = evolve_matrix(ctx, phi, w[0], w[1], cfg)? * total;
    }
    ctx.group_element(total)
}

/// Polynomial reparametrization `ρ(s) = Σ a_k s^k` on `[ℓ, ℓ′]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reparam {
    pub start: f64,
    pub end: f64,
    pub coefficients: Vec<f64>,
}

impl Reparam {
    pub fn new(start: f64, end: f64, coefficients: Vec<f64>) -> Result<Self> {
        if !(start < end) || coefficients.is_empty() {
            return Err(LabError::Argument("reparametrization needs ℓ < ℓ′ and coefficients".into()));
        }
        Ok(Reparam { start, end, coefficients })
    }

    pub fn identity(start: f64, end: f64) -> Self {
        Reparam {
            start,
            end,
            coefficients: vec![0.0, 1.0],
        }
    }

    /// `s ↦ r + r′ − s`.
    pub fn reversal(start: f64, end: f64) -> Self {
        Reparam {
            start,
            end,
            coefficients: vec![start + end, -1.0],
        }
    }

    pub fn is_affine(&self) -> bool {
        self.coefficients.iter().skip(2).all(|c| *c == 0.0)
    }

    /// `ρ^{(m)}(s)`.
    pub fn eval(&self, s: f64, m: usize) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(m)
            .map(|(k, c)| {
                let falling: f64 = ((k - m + 1)..=k).map(|j| j as f64).product();
                c * falling * s.powi((k - m) as i32)
            })
            .sum()
    }

    fn preimages(&self, value: f64) -> Vec<f64> {
        const N: usize = 1024;
        let g = |s: f64| self.eval(s, 0) - value;
        let mut roots = Vec::new();
        let pts: Vec<f64> = (0..=N).map(|i| self.start + (self.end - self.start) * i as f64 / N as f64).collect();
        for w in pts.windows(2) {
            let (mut a, mut b) = (w[0], w[1]);
            let (mut fa, fb) = (g(a), g(b));
            if fa == 0.0 {
                roots.push(a);
                continue;
            }
            if fa * fb > 0.0 {
                continue;
            }
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = g(m);
                if fm == 0.0 || (b - a) < 1e-15 * (1.0 + m.abs()) {
                    a = m;
                    b = m;
                    break;
                }
                if fa * fm < 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        roots
    }
}

/// `s ↦ ρ̇(s)·φ(ρ(s))` on `[ℓ, ℓ′]`.
///
/// Affine `ρ` keeps the full derivative order of `φ`; other polynomials give
/// a curve of order at most 1.
pub fn substitute(phi: &Curve, rho: &Reparam) -> Result<Curve> {
    let (r, r2) = phi.interval();
    let slack = 1e-12 * (r2 - r).max(1.0);
    for i in 0..=1024 {
        let s = rho.start + (rho.end - rho.start) * i as f64 / 1024.0;
        let u = rho.eval(s, 0);
        if u < r - slack || u > r2 + slack {
            return Err(LabError::Argument(format!(
                "reparametrization leaves the curve interval: ρ({s}) = {u} ∉ [{r}, {r2}]"
            )));
        }
    }
    let affine = rho.is_affine();
    let order = if affine { phi.order() } else { phi.order().min(Order::Finite(1)) };
    let mut bps = Vec::new();
    for b in phi.breakpoints() {
        bps.extend(rho.preimages(*b));
    }
    let (base, rh) = (phi.clone(), rho.clone());
    Ok(Curve::from_map(rho.start, rho.end, order, bps, phi.dim(), move |s: f64, k: usize, side: Side| {
        let u = rh.eval(s, 0).clamp(r, r2);
        let d1 = rh.eval(s, 1);
        let side_u = if d1 >= 0.0 { side } else { flip(side) };
        let jet = base.jet_sided(u, k, side_u)?;
        if affine {
            Ok(jet.into_iter().enumerate().map(|(m, d)| d * d1.powi(m as i32 + 1)).collect())
        } else {
            let mut out = vec![&jet[0] * d1];
            if k >= 1 {
                out.push(&jet[0] * rh.eval(s, 2) + &jet[1] * (d1 * d1));
            }
            Ok(out)
        }
    }))
}

/// `∫_{t_p}^t φ[p] · … · ∫_{t_0}^{t_1} φ[0]` for a curve given by explicit pieces.
pub fn evolve_piecewise(
    ctx: &LieContext,
    knots: &[f64],
    pieces: &[Curve],
    t: f64,
    cfg: &StepperConfig,
) -> Result<GroupElement> {
    if knots.len() != pieces.len() + 1 || pieces.is_empty() {
        return Err(LabError::Argument("piecewise curve needs one more knot than pieces".into()));
    }
    if knots.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(LabError::Argument("knots must be strictly increasing".into()));
    }
    if t < knots[0] || t > *knots.last().unwrap() {
        return Err(LabError::Argument(format!(
            "pieces cover [{}, {}], which does not contain t = {t}",
            knots[0],
            knots.last().unwrap()
        )));
    }
    let mut total = ctx.identity();
    for (p, piece) in pieces.iter().enumerate() {
        let (a, b) = (knots[p], knots[p + 1].min(t));
        if a >= t {
            break;
        }
        let (pa, pb) = piece.interval();
        if pa > a || pb < b {
            return Err(LabError::Argument(format!("piece {p} on [{pa}, {pb}] does not cover [{a}, {b}]")));
        }
        total = evolve_matrix(ctx, piece, a, b, cfg)? * total;
    }
    ctx.group_element(total)
}
