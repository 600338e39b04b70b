//! Adjoint transport along product integrals.
//!
//! The exact transport `Ad_{∫_r^t φ}(Y)` solves `α̇ = [φ, α]`, `α(r) = Y`. The
//! piecewise scheme freezes `φ` at the left node of each of `n` uniform panels
//! and propagates with the truncated series `Λ[X]_N(t, Y) = Σ_{k≤N} t^k/k!·ad_X^k Y`.

use crate::curve::{Curve, Order, Side};
use crate::error::{LabError, Result};
use crate::estimates::EstimateWitness;
use crate::evolution::{evolve_matrix, grid, Trajectory, StepperConfig};
use crate::lie::{commutator, invert, LieContext, Matrix};
use crate::norms::{operator_norm, Seminorm, SeminormFamily};
use crate::quadrature::{integrate, QuadratureConfig};

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `Σ_{k=0}^n t^k/k!·ad_X^k(Y)`.
pub fn lambda_poly(ctx: &LieContext, x: &Matrix, n: usize, t: f64, y: &Matrix) -> Result<Matrix> {
    let x = ctx.project(x)?;
    let mut term = ctx.project(y)?;
    let mut sum = term.clone();
    for k in 1..=n {
        term = commutator(&x, &term) * (t / k as f64);
        if term.iter().all(|v| *v == 0.0) {
            break;
        }
        sum += &term;
    }
    Ok(sum)
}

/// `Ad_{∫_r^t φ}(Y)`.
pub fn transport_exact(ctx: &LieContext, phi: &Curve, y: &Matrix, t: f64, cfg: &StepperConfig) -> Result<Matrix> {
    let y = ctx.project(y)?;
    let mu = evolve_matrix(ctx, phi, phi.start(), t, cfg)?;
    let inv = invert(&mu)?;
    Ok(&mu * y * inv)
}

/// `Ad_{[∫_r^t φ]⁻¹}(Y)`.
pub fn transport_inverse(ctx: &LieContext, phi: &Curve, y: &Matrix, t: f64, cfg: &StepperConfig) -> Result<Matrix> {
    let mu = evolve_matrix(ctx, phi, phi.start(), t, cfg)?;
    let inv = invert(&mu)?;
    Ok(&inv * y * mu)
}

/// Dense classical Runge–Kutta solve of `α̇ = [φ, α]`, `α(r) = Y`, independent of
/// the evolution map.
pub fn solve_adjoint_ode(phi: &Curve, y: &Matrix, t: f64, steps: usize) -> Result<Matrix> {
    let r = phi.start();
    if t == r {
        return Ok(y.clone());
    }
    let pts = grid(phi, r, t, steps.max(1));
    let mut a = y.clone();
    for w in pts.windows(2) {
        let (s, h) = (w[0], w[1] - w[0]);
        let (s0, s1) = if h > 0.0 { (Side::Right, Side::Left) } else { (Side::Left, Side::Right) };
        let f0 = phi.eval_sided(s, 0, s0)?;
        let fm = phi.eval(s + 0.5 * h, 0)?;
        let f1 = phi.eval_sided(s + h, 0, s1)?;
        let k1 = commutator(&f0, &a);
        let k2 = commutator(&fm, &(&a + &k1 * (0.5 * h)));
        let k3 = commutator(&fm, &(&a + &k2 * (0.5 * h)));
        let k4 = commutator(&f1, &(&a + &k3 * h));
        a += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(a)
}

/// Subdivision count `n` and series truncation degree of the piecewise scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransportScheme {
    pub n: usize,
    pub truncation: usize,
}

impl TransportScheme {
    /// Couples the truncation degree to the subdivision count.
    pub fn new(n: usize) -> Self {
        TransportScheme { n, truncation: n }
    }

    pub fn with_truncation(n: usize, truncation: usize) -> Self {
        TransportScheme { n, truncation }
    }
}

/// The glued piecewise transport `ᾱ_{φ,n}(·, Y)`.
#[derive(Debug, Clone)]
pub struct PiecewiseTransport {
    knots: Vec<f64>,
    nodes: Vec<Matrix>,
    /// `powers[p][k] = ad_{X_p}^k(Y_p)`.
    powers: Vec<Vec<Matrix>>,
    end_value: Matrix,
    truncation: usize,
}

/// Per-panel defect `α̇[p](τ) − [φ(τ), α[p](τ)]` and its two-term split.
#[derive(Debug, Clone)]
pub struct PanelDefect {
    pub direct: Matrix,
    /// `Σ_{k<N} (τ−t_p)^k/k!·[X_p − φ(τ), ad_{X_p}^k Y_p]`.
    pub a_term: Matrix,
    /// `−(τ−t_p)^N/N!·[φ(τ), ad_{X_p}^N Y_p]`.
    pub b_term: Matrix,
    /// `Σ_{k<N} |τ−t_p|^k/k!·v(ad_{X_p}^k Y_p)`.
    pub a_factor: f64,
    /// `|τ−t_p|^N/N!·v(ad_{X_p}^N Y_p)`.
    pub b_factor: f64,
}

impl PiecewiseTransport {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn panels(&self) -> usize {
        self.nodes.len()
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// Frozen value `X_p = φ(t_p)`.
    pub fn node(&self, p: usize) -> &Matrix {
        &self.nodes[p]
    }

    /// Start value `Y_p = α[p](t_p)`.
    pub fn start_value(&self, p: usize) -> &Matrix {
        &self.powers[p][0]
    }

    fn panel_of(&self, t: f64, side: Side) -> usize {
        crate::curve::locate_piece(&self.knots, t, side)
    }

    /// `m`-th derivative of the polynomial piece `p` at `t`.
    pub fn piece_derivative(&self, p: usize, t: f64, m: usize) -> Matrix {
        let dt = t - self.knots[p];
        let mut out = Matrix::zeros(self.powers[p][0].nrows(), self.powers[p][0].ncols());
        for (k, pk) in self.powers[p].iter().enumerate().skip(m) {
            out += pk * (dt.powi((k - m) as i32) / factorial(k - m));
        }
        out
    }

    pub fn piece_value(&self, p: usize, t: f64) -> Matrix {
        self.piece_derivative(p, t, 0)
    }

    pub fn eval_sided(&self, t: f64, side: Side) -> Matrix {
        if t >= *self.knots.last().unwrap() {
            return self.end_value.clone();
        }
        self.piece_value(self.panel_of(t, side), t)
    }

    pub fn eval(&self, t: f64) -> Matrix {
        self.eval_sided(t, Side::Right)
    }

    /// Values at `t_0, …, t_n`.
    pub fn node_values(&self) -> Vec<Matrix> {
        let mut v: Vec<Matrix> = self.powers.iter().map(|p| p[0].clone()).collect();
        v.push(self.end_value.clone());
        v
    }

    /// Largest mismatch `α[p](t_{p+1}) − α[p+1](t_{p+1})` between adjacent panels.
    pub fn endpoint_mismatch(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for p in 0..self.panels() {
            let end = self.piece_value(p, self.knots[p + 1]);
            let next = if p + 1 < self.panels() { &self.powers[p + 1][0] } else { &self.end_value };
            worst = worst.max((end - next).abs().max());
        }
        worst
    }

    /// Polynomial pieces as curves on their panels.
    pub fn pieces(&self) -> Vec<Curve> {
        (0..self.panels())
            .map(|p| {
                let me = self.clone();
                let dim = self.end_value.nrows();
                Curve::from_map(self.knots[p], self.knots[p + 1], Order::Smooth, Vec::new(), dim, move |t: f64, k: usize, _s: Side| {
                    Ok((0..=k).map(|m| me.piece_derivative(p, t, m)).collect())
                })
            })
            .collect()
    }

    /// The glued curve `ᾱ`, continuous with breakpoints at the interior nodes.
    pub fn glued(&self) -> Result<Curve> {
        Curve::piecewise(self.knots.clone(), self.pieces())
    }

    pub fn panel_defect(&self, phi: &Curve, p: usize, tau: f64, v: &Seminorm) -> Result<PanelDefect> {
        let side = if tau >= self.knots[p + 1] { Side::Left } else { Side::Right };
        let ph = phi.eval_sided(tau, 0, side)?;
        let alpha = self.piece_value(p, tau);
        let alpha_dot = self.piece_derivative(p, tau, 1);
        let direct = alpha_dot - commutator(&ph, &alpha);
        let n = self.truncation;
        let dt = tau - self.knots[p];
        let diff = &self.nodes[p] - &ph;
        let mut a_term = Matrix::zeros(ph.nrows(), ph.ncols());
        let mut a_factor = 0.0;
        for k in 0..n {
            let c = dt.powi(k as i32) / factorial(k);
            a_term += commutator(&diff, &self.powers[p][k]) * c;
            a_factor += c.abs() * v.eval(&self.powers[p][k]);
        }
        let cn = dt.powi(n as i32) / factorial(n);
        let b_term = -commutator(&ph, &self.powers[p][n]) * cn;
        let b_factor = cn.abs() * v.eval(&self.powers[p][n]);
        Ok(PanelDefect {
            direct,
            a_term,
            b_term,
            a_factor,
            b_factor,
        })
    }
}

/// Runs the piecewise transport scheme from `α(r) = Y`.
pub fn transport_scheme(ctx: &LieContext, phi: &Curve, scheme: TransportScheme, y: &Matrix) -> Result<PiecewiseTransport> {
    if scheme.n == 0 {
        return Err(LabError::Argument("transport scheme needs n ≥ 1".into()));
    }
    let (r, r2) = phi.interval();
    let len = r2 - r;
    let knots: Vec<f64> = (0..=scheme.n).map(|p| r + p as f64 / scheme.n as f64 * len).collect();
    let mut start = ctx.project(y)?;
    let mut nodes = Vec::with_capacity(scheme.n);
    let mut powers = Vec::with_capacity(scheme.n);
    for p in 0..scheme.n {
        let x = phi.eval_sided(knots[p], 0, Side::Right)?;
        let mut pk = vec![start.clone()];
        for _ in 0..scheme.truncation {
            let next = commutator(&x, pk.last().unwrap());
            pk.push(next);
        }
        let dt = knots[p + 1] - knots[p];
        let mut next_start = Matrix::zeros(start.nrows(), start.ncols());
        for (k, m) in pk.iter().enumerate() {
            next_start += m * (dt.powi(k as i32) / factorial(k));
        }
        nodes.push(x);
        powers.push(pk);
        start = next_start;
    }
    Ok(PiecewiseTransport {
        knots,
        nodes,
        powers,
        end_value: start,
        truncation: scheme.truncation,
    })
}

/// Scheme error and defect magnitudes for one subdivision count.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeStudyRow {
    pub n: usize,
    /// `max_p ‖ᾱ(t_p) − Ad_{∫_r^{t_p}φ}(Y)‖`.
    pub sup_node_error: f64,
    /// Sampled sup of the A part of the panel defect.
    pub defect_a: f64,
    /// Sampled sup of the B part of the panel defect.
    pub defect_b: f64,
    /// Largest `‖direct − (A + B)‖` over the samples.
    pub split_gap: f64,
    /// Largest ratio of the measured defect to `w(X_p − φ(τ))·A + w_∞(φ)·B`.
    pub bound_ratio: f64,
}

/// Runs the scheme for each `n` and compares with the exact transport at the nodes.
///
/// Defect bounds use `v` for the measured quantities and `w` for the bracketed
/// factor, which is valid whenever `v([X, Z]) ≤ w(X)·v(Z)`.
pub fn scheme_study(
    ctx: &LieContext,
    phi: &Curve,
    y: &Matrix,
    ns: &[usize],
    v: &Seminorm,
    w: &Seminorm,
    cfg: &StepperConfig,
) -> Result<Vec<SchemeStudyRow>> {
    let mut rows = Vec::new();
    let traj = Trajectory::over(ctx, phi, cfg)?;
    let w_sup = phi.sup_norm(0, 32, |m| w.eval(m))?;
    for &n in ns {
        let pt = transport_scheme(ctx, phi, TransportScheme::new(n), y)?;
        let mut err: f64 = 0.0;
        for (t, val) in pt.knots().iter().zip(pt.node_values()) {
            let mu = traj.at(*t)?;
            let exact = &mu * y * invert(&mu)?;
            err = err.max(v.eval(&(val - exact)));
        }
        let (mut da, mut db, mut gap, mut ratio): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
        for p in 0..pt.panels() {
            for i in 1..=8 {
                let tau = pt.knots[p] + (pt.knots[p + 1] - pt.knots[p]) * i as f64 / 8.0;
                let d = pt.panel_defect(phi, p, tau, v)?;
                da = da.max(v.eval(&d.a_term));
                db = db.max(v.eval(&d.b_term));
                gap = gap.max((&d.direct - &d.a_term - &d.b_term).abs().max());
                let side = if i == 8 { Side::Left } else { Side::Right };
                let ph = phi.eval_sided(tau, 0, side)?;
                let bound = w.eval(&(pt.node(p) - &ph)) * d.a_factor + w_sup * d.b_factor;
                let measured = v.eval(&d.direct);
                if measured > 0.0 {
                    ratio = ratio.max(if bound > 0.0 { measured / bound } else { f64::INFINITY });
                }
            }
        }
        rows.push(SchemeStudyRow {
            n,
            sup_node_error: err,
            defect_a: da,
            defect_b: db,
            split_gap: gap,
            bound_ratio: ratio,
        });
    }
    Ok(rows)
}

/// Half-width of the rounding band used when comparing a fitted order with an integer.
pub const ORDER_SLACK: f64 = 0.05;

/// Least-squares slope of `log(error)` against `log(n)`, negated (order of convergence).
pub fn empirical_order(ns: &[usize], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|n| (*n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.max(1e-300).ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    -sxy / sxx
}

/// Accumulated weighted defect
/// `AI(φ, α)(t) = Σ_{q<p} ∫_{t_q}^{t_{q+1}} (…) + ∫_{t_p}^t Ad_{[∫_r^s φ]⁻¹}(α̇[p](s) − [φ(s), α[p](s)]) ds`.
///
/// `pieces[p]` must be of order ≥ 1 on `[knots[p], knots[p+1]]` and adjacent
/// pieces must agree at the shared knot.
pub fn residual_ai(ctx: &LieContext, phi: &Curve, knots: &[f64], pieces: &[Curve], cfg: &StepperConfig) -> Result<Curve> {
    if knots.len() != pieces.len() + 1 || pieces.is_empty() {
        return Err(LabError::Argument("need one more knot than pieces".into()));
    }
    let (r, r2) = phi.interval();
    if knots[0] != r || *knots.last().unwrap() != r2 || knots.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(LabError::Argument("knots must increase from r to r′".into()));
    }
    for (p, piece) in pieces.iter().enumerate() {
        if !piece.order().allows(1) {
            return Err(LabError::Argument(format!("piece {p} is not of class C¹")));
        }
        if p + 1 < pieces.len() {
            let a = piece.eval_sided(knots[p + 1], 0, Side::Left)?;
            let b = pieces[p + 1].eval_sided(knots[p + 1], 0, Side::Right)?;
            let gap = (&a - &b).abs().max();
            if gap > 1e-12 * a.abs().max().max(1.0) {
                return Err(LabError::Argument(format!(
                    "pieces {p} and {} disagree at t = {} by {gap:e}",
                    p + 1,
                    knots[p + 1]
                )));
            }
        }
    }
    let traj = Trajectory::over(ctx, phi, cfg)?;
    let mut bps: Vec<f64> = traj.knots().to_vec();
    bps.extend_from_slice(phi.breakpoints());
    bps.sort_by(f64::total_cmp);
    let integrand = {
        let traj = traj.clone();
        let phi = phi.clone();
        move |piece: &Curve, s: f64| -> Result<Matrix> {
            let jet = piece.jet(s, 1)?;
            let d = &jet[1] - commutator(&phi.eval(s, 0)?, &jet[0]);
            let mu = traj.at(s)?;
            Ok(invert(&mu)? * d * mu)
        }
    };
    let qcfg = QuadratureConfig::default();
    let mut cumulative = vec![ctx.zero()];
    for (p, piece) in pieces.iter().enumerate() {
        let part = integrate(|s| integrand(piece, s), knots[p], knots[p + 1], &bps, qcfg)?;
        let next = cumulative.last().unwrap() + part;
        cumulative.push(next);
    }
    let knots = knots.to_vec();
    let pieces = pieces.to_vec();
    Ok(Curve::from_map(r, r2, Order::Finite(0), knots[1..knots.len() - 1].to_vec(), ctx.dim(), move |t: f64, _k: usize, side: Side| {
        let p = crate::curve::locate_piece(&knots, t, side);
        let part = integrate(|s| integrand(&pieces[p], s), knots[p], t, &bps, qcfg)?;
        Ok(vec![&cumulative[p] + part])
    }))
}

/// `max_t ‖β(t) − β(r) − AI(φ, α)(t)‖` with `β = Ad_{[∫_r^• φ]⁻¹} ∘ ᾱ`, relative to `max(1, ‖β‖)`.
pub fn ai_identity_gap(
    ctx: &LieContext,
    phi: &Curve,
    knots: &[f64],
    pieces: &[Curve],
    times: &[f64],
    cfg: &StepperConfig,
) -> Result<f64> {
    let ai = residual_ai(ctx, phi, knots, pieces, cfg)?;
    let traj = Trajectory::over(ctx, phi, cfg)?;
    let beta = |t: f64| -> Result<Matrix> {
        let p = crate::curve::locate_piece(knots, t, Side::Right);
        let a = pieces[p].eval(t, 0)?;
        let mu = traj.at(t)?;
        Ok(invert(&mu)? * a * mu)
    };
    let b0 = beta(knots[0])?;
    let mut worst: f64 = 0.0;
    for &t in times {
        let bt = beta(t)?;
        let gap = (&bt - &b0 - ai.eval(t, 0)?).abs().max();
        worst = worst.max(gap / bt.abs().max().max(1.0));
    }
    Ok(worst)
}

/// Partial sums of `Σ_k t^k/k!·ad_X^k(Y)` with their certified remainder.
#[derive(Debug, Clone)]
pub struct DuhamelSum {
    pub value: Matrix,
    pub terms: usize,
    /// `(|t|C)^{n+1}/(n+1)!·e^{|t|C}·w(Y)` for the last partial sum, or 0 if the series terminated.
    pub remainder_bound: f64,
}

/// Truncated series for `Ad_{exp(tX)}(Y)`, stopped once the certified remainder
/// drops below `tol`.
///
/// The constant `C` comes from a constricted witness whose compact sample
/// contains `X`; without one no remainder bound exists and the call fails.
pub fn duhamel_series(
    ctx: &LieContext,
    fam: &SeminormFamily,
    x: &Matrix,
    y: &Matrix,
    t: f64,
    tol: f64,
    witness: Option<&EstimateWitness>,
) -> Result<DuhamelSum> {
    let witness = witness.ok_or_else(|| {
        LabError::Precondition(
            "no certified constricted constant available; run constricted_constants from the estimates module first".into(),
        )
    })?;
    witness.check_applicable(ctx, fam, x)?;
    let x = ctx.project(x)?;
    let y = ctx.project(y)?;
    let v = fam.get(&witness.v_id)?;
    let c = witness.c_v;
    let wy = witness.w_multiplier * v.eval(&y);
    let tc = t.abs() * c;
    let mut term = y.clone();
    let mut sum = y.clone();
    let mut n = 0usize;
    loop {
        let remainder = tc.powi(n as i32 + 1) / factorial(n + 1) * tc.exp() * wy;
        let next = commutator(&x, &term) * (t / (n + 1) as f64);
        if next.iter().all(|v| *v == 0.0) {
            return Ok(DuhamelSum {
                value: sum,
                terms: n + 1,
                remainder_bound: 0.0,
            });
        }
        if remainder < tol {
            return Ok(DuhamelSum {
                value: sum,
                terms: n + 1,
                remainder_bound: remainder,
            });
        }
        if n >= 10_000 {
            return Err(LabError::Precondition(format!(
                "remainder bound still {remainder:e} after {n} terms; |t|·C = {tc} is too large"
            )));
        }
        sum += &next;
        term = next;
        n += 1;
    }
}

/// `t ↦ ∂_t(Ad_{∫_r^t φ}(ψ(t))) − [φ(t), Ad(ψ(t))] − Ad(ψ̇(t))` on `[r+h, r′−h]`
/// with a Richardson-extrapolated central difference of step `h`.
pub fn adjoint_ode_defect(ctx: &LieContext, phi: &Curve, psi: &Curve, h: f64, cfg: &StepperConfig) -> Result<Curve> {
    if phi.interval() != psi.interval() {
        return Err(LabError::Argument("φ and ψ must share their interval".into()));
    }
    if !psi.order().allows(1) {
        return Err(LabError::Argument("ψ must be of class C¹".into()));
    }
    let (r, r2) = phi.interval();
    if !(2.0 * h < r2 - r) || h <= 0.0 {
        return Err(LabError::Argument(format!("difference step {h} too large for [{r}, {r2}]")));
    }
    let traj = Trajectory::over(ctx, phi, cfg)?;
    let (ph, ps) = (phi.clone(), psi.clone());
    let mut bps = phi.breakpoints().to_vec();
    bps.extend_from_slice(psi.breakpoints());
    Ok(Curve::from_map(r + h, r2 - h, Order::Finite(0), bps, ctx.dim(), move |t: f64, _k: usize, side: Side| {
        let transported = |s: f64| -> Result<Matrix> {
            let mu = traj.at(s)?;
            Ok(&mu * ps.eval(s, 0)? * invert(&mu)?)
        };
        let d1 = (transported(t + h)? - transported(t - h)?) / (2.0 * h);
        let d2 = (transported(t + 0.5 * h)? - transported(t - 0.5 * h)?) / h;
        let fd = (d2 * 4.0 - d1) / 3.0;
        let mu = traj.at(t)?;
        let inv = invert(&mu)?;
        let at = &mu * ps.eval_sided(t, 0, side)? * &inv;
        let rhs = commutator(&ph.eval_sided(t, 0, side)?, &at) + &mu * ps.eval_sided(t, 1, side)? * &inv;
        Ok(vec![fd - rhs])
    }))
}

/// One layer `ad_Z^m ∘ Ad_{∫_r^t φ}` of an interleaved chain.
#[derive(Debug, Clone)]
pub struct ChainLayer {
    pub z: Matrix,
    pub power: usize,
    pub phi: Curve,
    pub t: f64,
}

/// `v(ad_{Z₁}^{m₁} ∘ Ad_{∫φ₁} ∘ … ∘ ad_{Z_k}^{m_k} ∘ Ad_{∫φ_k}(Y))` together with
/// the bound `exp(Σ_p ∫ w(φ_p)) · Π_p w(Z_p)^{m_p} · w(Y)`.
pub fn interleaved_chain(
    ctx: &LieContext,
    layers: &[ChainLayer],
    y: &Matrix,
    v: &Seminorm,
    w: &Seminorm,
    cfg: &StepperConfig,
) -> Result<(f64, f64)> {
    let mut acc = y.clone();
    let mut log_bound = w.eval(y).ln();
    for layer in layers.iter().rev() {
        let mu = evolve_matrix(ctx, &layer.phi, layer.phi.start(), layer.t, cfg)?;
        acc = &mu * acc * invert(&mu)?;
        for _ in 0..layer.power {
            acc = commutator(&layer.z, &acc);
        }
        let weight = integrate(
            |s| Ok(Matrix::from_element(1, 1, w.eval(&layer.phi.eval(s, 0)?))),
            layer.phi.start(),
            layer.t,
            layer.phi.breakpoints(),
            QuadratureConfig::default(),
        )?[(0, 0)];
        log_bound += weight.abs() + layer.power as f64 * w.eval(&layer.z).ln();
    }
    Ok((v.eval(&acc), log_bound.exp()))
}

/// Operator-norm helper used by reports.
pub fn op(m: &Matrix) -> f64 {
    operator_norm(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::TrigTerm;
    use crate::evolution::Method;
    use crate::lie::{so3_generator, unit};
    use crate::norms::NormKind;

    fn cf4(n: usize) -> StepperConfig {
        StepperConfig::fixed(Method::CommutatorFree4, n).without_defect()
    }

    #[test]
    fn lambda_poly_examples() {
        let ctx = LieContext::heisenberg();
        let (x, y) = (unit(3, 0, 1), unit(3, 1, 2));
        assert_eq!(lambda_poly(&ctx, &x, 0, 1.0, &y).unwrap(), y);
        assert_eq!(lambda_poly(&ctx, &Matrix::zeros(3, 3), 5, 2.0, &y).unwrap(), y);
        let got = lambda_poly(&ctx, &x, 2, 1.0, &y).unwrap();
        let g = ctx.exp_matrix(&x);
        let exact = &g * &y * invert(&g).unwrap();
        assert_eq!(got, &y + unit(3, 0, 2));
        assert!((got - exact).abs().max() < 1e-15);
    }

    #[test]
    fn transport_exact_examples() {
        let ctx = LieContext::so3();
        let theta = 0.8;
        let phi = Curve::constant(0.0, 1.0, so3_generator(2) * theta);
        let y = so3_generator(0);
        let cfg = cf4(64);
        assert_eq!(transport_exact(&ctx, &phi, &y, 0.0, &cfg).unwrap(), y);
        let got = transport_exact(&ctx, &phi, &y, 1.0, &cfg).unwrap();
        let expect = so3_generator(0) * theta.cos() + so3_generator(1) * theta.sin();
        assert!((got - expect).abs().max() < 1e-13);
        let diag = LieContext::diag2();
        let d = Curve::constant(0.0, 1.0, unit(2, 0, 0));
        let yd = unit(2, 1, 1) * 3.0;
        assert!((transport_exact(&diag, &d, &yd, 0.7, &cfg).unwrap() - &yd).abs().max() < 1e-15);
    }

    #[test]
    fn scheme_examples() {
        let ctx = LieContext::heisenberg();
        let phi = Curve::constant(0.0, 1.0, unit(3, 0, 1) + unit(3, 1, 2) * 0.5);
        let y = unit(3, 1, 2) - unit(3, 0, 2);
        let pt = transport_scheme(&ctx, &phi, TransportScheme::new(2), &y).unwrap();
        let cfg = StepperConfig::accurate(&ctx, 16);
        for (t, val) in pt.knots().iter().zip(pt.node_values()) {
            let exact = transport_exact(&ctx, &phi, &y, *t, &cfg).unwrap();
            assert!((val - exact).abs().max() < 1e-12);
        }
        assert!(pt.endpoint_mismatch() < 1e-12);
        let zero = transport_scheme(&ctx, &phi, TransportScheme::new(4), &ctx.zero()).unwrap();
        assert!(zero.node_values().iter().all(|m| m.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn scheme_converges_on_so3() {
        let ctx = LieContext::so3();
        let phi = Curve::polynomial(0.0, 1.0, vec![so3_generator(2), so3_generator(0)]);
        let y = so3_generator(1);
        let v = Seminorm::new("op", NormKind::Operator, 1.0);
        let w = v.scaled(2.0);
        let ns = [4, 8, 16, 32];
        let rows = scheme_study(&ctx, &phi, &y, &ns, &v, &w, &cf4(1024)).unwrap();
        let errs: Vec<f64> = rows.iter().map(|r| r.sup_node_error).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        let order = empirical_order(&ns, &errs);
        assert!((1.0 - ORDER_SLACK..1.0 + ORDER_SLACK).contains(&order), "{order}");
        for row in &rows {
            assert!(row.split_gap < 1e-12, "{row:?}");
            assert!(row.bound_ratio <= 1.0, "{row:?}");
        }
    }

    #[test]
    fn ai_identity_holds() {
        let ctx = LieContext::so3();
        let phi = Curve::closed_form(0.0, 1.0, vec![so3_generator(2) * 0.7], vec![TrigTerm::sin(2.0, 0.0, so3_generator(0))]);
        let y = so3_generator(1) + so3_generator(0) * 0.3;
        let cfg = cf4(1024);
        let pt = transport_scheme(&ctx, &phi, TransportScheme::new(4), &y).unwrap();
        let gap = ai_identity_gap(&ctx, &phi, pt.knots(), &pt.pieces(), &[0.1, 0.5, 0.77, 1.0], &cfg).unwrap();
        assert!(gap < 1e-8, "gap {gap}");
        // exact transport has zero defect
        let traj = Trajectory::over(&ctx, &phi, &cfg).unwrap();
        let p2 = phi.clone();
        let y2 = y.clone();
        let exact = Curve::from_map(0.0, 1.0, Order::Finite(1), vec![], 3, move |t: f64, k: usize, _s: Side| {
            let mu = traj.at(t)?;
            let a = &mu * &y2 * invert(&mu)?;
            let mut out = vec![a.clone()];
            if k >= 1 {
                out.push(commutator(&p2.eval(t, 0)?, &a));
            }
            Ok(out)
        });
        let ai = residual_ai(&ctx, &phi, &[0.0, 1.0], &[exact], &cfg).unwrap();
        assert!(ai.eval(1.0, 0).unwrap().abs().max() < 1e-9);
        // φ = 0 reduces to α − α(r)
        let zero = Curve::zero(0.0, 1.0, 3);
        let alpha = Curve::polynomial(0.0, 1.0, vec![so3_generator(0), so3_generator(1), so3_generator(2)]);
        let ai0 = residual_ai(&ctx, &zero, &[0.0, 1.0], std::slice::from_ref(&alpha), &cfg).unwrap();
        let expect = alpha.eval(0.6, 0).unwrap() - alpha.eval(0.0, 0).unwrap();
        assert!((ai0.eval(0.6, 0).unwrap() - expect).abs().max() < 1e-13);
        // mismatched pieces
        let a = Curve::constant(0.0, 0.5, so3_generator(0));
        let b = Curve::constant(0.5, 1.0, so3_generator(1));
        assert!(residual_ai(&ctx, &phi, &[0.0, 0.5, 1.0], &[a, b], &cfg).is_err());
    }

    #[test]
    fn adjoint_defect_vanishes() {
        let ctx = LieContext::so3();
        let cfg = cf4(1024);
        let zero = Curve::zero(0.0, 1.0, 3);
        let c = Curve::constant(0.0, 1.0, so3_generator(1));
        let d = adjoint_ode_defect(&ctx, &zero, &c, 1e-4, &cfg).unwrap();
        assert!(d.sup_norm(0, 8, operator_norm).unwrap() < 1e-12);
        let lin = Curve::polynomial(0.0, 1.0, vec![Matrix::zeros(3, 3), so3_generator(1)]);
        let d = adjoint_ode_defect(&ctx, &zero, &lin, 1e-4, &cfg).unwrap();
        assert!(d.sup_norm(0, 8, operator_norm).unwrap() < 1e-10);
        let phi = Curve::closed_form(0.0, 1.0, vec![so3_generator(0), so3_generator(2)], vec![TrigTerm::cos(3.0, 0.0, so3_generator(1))]);
        let psi = Curve::trig(0.0, 1.0, vec![TrigTerm::sin(2.0, 0.4, so3_generator(2) + so3_generator(0))]);
        let d = adjoint_ode_defect(&ctx, &phi, &psi, 1e-4, &cfg).unwrap();
        assert!(d.sup_norm(0, 16, operator_norm).unwrap() < 1e-6);
    }

    #[test]
    fn dense_solver_agrees_with_exact_transport() {
        let ctx = LieContext::gl(3);
        let phi = Curve::closed_form(
            0.0,
            1.0,
            vec![Matrix::from_fn(3, 3, |i, j| 0.1 * (i as f64 - j as f64) + 0.05 * (i * j) as f64)],
            vec![TrigTerm::sin(2.0, 0.0, Matrix::from_fn(3, 3, |i, j| if i == j { 0.2 } else { 0.1 }))],
        );
        let y = Matrix::from_fn(3, 3, |i, j| (i + 2 * j) as f64 * 0.1);
        let dense = solve_adjoint_ode(&phi, &y, 1.0, 2048).unwrap();
        let exact = transport_exact(&ctx, &phi, &y, 1.0, &cf4(512)).unwrap();
        assert!((dense - exact).abs().max() < 1e-8);
    }
}
