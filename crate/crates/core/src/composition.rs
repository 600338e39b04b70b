//! Collapsing ordered products of product integrals into a single integral,
//! rescaling of short stacks, and the derivative bounds of the collapsed curve.

use serde::{Deserialize, Serialize};

use crate::curve::{Curve, Order, Side};
use crate::error::{LabError, Result};
use crate::evolution::{evolve_matrix, transported_jet, StepperConfig, Trajectory};
use crate::lie::{invert, LieContext, Matrix};
use crate::norms::{operator_norm, NormKind, Seminorm, SeminormFamily};

/// Curves `φ₁, …, φₙ` on a common interval.
#[derive(Debug, Clone)]
pub struct CurveStack {
    curves: Vec<Curve>,
}

impl CurveStack {
    pub fn new(curves: Vec<Curve>) -> Result<Self> {
        let first = curves.first().ok_or_else(|| LabError::Argument("stack needs at least one curve".into()))?;
        for (p, c) in curves.iter().enumerate() {
            if c.interval() != first.interval() {
                return Err(LabError::Argument(format!(
                    "curve {} lives on {:?}, expected {:?}",
                    p + 1,
                    c.interval(),
                    first.interval()
                )));
            }
            if c.dim() != first.dim() {
                return Err(LabError::Dimension {
                    expected: first.dim(),
                    rows: c.dim(),
                    cols: c.dim(),
                });
            }
        }
        Ok(CurveStack { curves })
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn interval(&self) -> (f64, f64) {
        self.curves[0].interval()
    }

    pub fn order(&self) -> Order {
        self.curves.iter().fold(Order::Smooth, |o, c| o.min(c.order()))
    }

    /// `∫φₙ · … · ∫φ₁`.
    pub fn ordered_product(&self, ctx: &LieContext, cfg: &StepperConfig) -> Result<Matrix> {
        let (a, b) = self.interval();
        let mut total = ctx.identity();
        for c in &self.curves {
            total = evolve_matrix(ctx, c, a, b, cfg)? * total;
        }
        Ok(total)
    }

    /// `max_p max_{k≤q} sup_t norm(φ_p^{(k)}(t))` on sampled points.
    pub fn sup_norm_upto(&self, q: usize, norm: &Seminorm) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for c in &self.curves {
            if !c.order().allows(q) {
                return Err(LabError::Argument(format!("stack curve has order {:?} < {q}", c.order())));
            }
            worst = worst.max(c.sup_norm_upto(q, 16, |m| norm.eval(m))?);
        }
        Ok(worst)
    }
}

/// `χ{φ₁,…,φₙ} = φₙ + Σ_{p=n−1}^{1} (Ad_{φₙ} ∘ … ∘ Ad_{φ_{p+1}})(φ_p)`, with
/// `Ad_{φ}` evaluated at the same time, so that `∫χ = ∫φₙ · … · ∫φ₁`.
///
/// Evaluated in Horner form `S₁ = φ₁`, `S_p = φ_p + Ad_{∫φ_p}(S_{p−1})`, with
/// derivatives from the product rule `∂_t Ad_μ(g) = [φ, Ad_μ(g)] + Ad_μ(ġ)`.
pub fn chi_compose(ctx: &LieContext, stack: &CurveStack, cfg: &StepperConfig) -> Result<Curve> {
    let trajs: Vec<Trajectory> = stack.curves()[1..]
        .iter()
        .map(|c| Trajectory::over(ctx, c, cfg))
        .collect::<Result<_>>()?;
    let curves = stack.curves().to_vec();
    let (a, b) = stack.interval();
    let mut bps: Vec<f64> = curves.iter().flat_map(|c| c.breakpoints().iter().copied()).collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    let dim = curves[0].dim();
    Ok(Curve::from_map(a, b, stack.order(), bps, dim, move |t: f64, k: usize, side: Side| {
        let mut s = curves[0].jet_sided(t, k, side)?;
        for (c, traj) in curves[1..].iter().zip(&trajs) {
            let phi = c.jet_sided(t, k, side)?;
            let mu = traj.at(t)?;
            let inv = invert(&mu).map_err(|_| LabError::Singular { at: Some(t) })?;
            let ad = transported_jet(&mu, &inv, &phi, &s, k);
            s = phi.into_iter().zip(ad).map(|(x, y)| x + y).collect();
        }
        Ok(s)
    }))
}

/// `φ_p(t) = 1/n·χ_p(t/n)` on `[0, 1]` for `χ₁, …, χₙ` on `[0, 1/n]`.
pub fn rescale_stack(stack: &CurveStack) -> Result<CurveStack> {
    let n = stack.len() as f64;
    let (a, b) = stack.interval();
    if a != 0.0 || ((b - 1.0 / n).abs() > 1e-15 * (1.0 / n)) {
        return Err(LabError::Argument(format!(
            "stack of {} curves must live on [0, 1/{}], found [{a}, {b}]",
            stack.len(),
            stack.len()
        )));
    }
    let curves = stack
        .curves()
        .iter()
        .map(|chi| {
            let chi = chi.clone();
            let bps: Vec<f64> = chi.breakpoints().iter().map(|t| t * n).collect();
            let dim = chi.dim();
            Curve::from_map(0.0, 1.0, chi.order(), bps, dim, move |t: f64, k: usize, side: Side| {
                let s = (t / n).min(chi.end());
                let jet = chi.jet_sided(s, k, side)?;
                Ok(jet.into_iter().enumerate().map(|(m, d)| d * n.powi(-(m as i32 + 1))).collect())
            })
        })
        .collect();
    CurveStack::new(curves)
}

/// Uniform split of every curve into `parts` consecutive pieces, each shifted to
/// start at `0`, in product order (earliest piece of the first curve first).
pub fn split_stack(stack: &CurveStack, parts: usize) -> Result<CurveStack> {
    if parts == 0 {
        return Err(LabError::Argument("split needs at least one part".into()));
    }
    let (a, b) = stack.interval();
    let h = (b - a) / parts as f64;
    let mut out = Vec::with_capacity(stack.len() * parts);
    for c in stack.curves() {
        for l in 0..parts {
            let offset = a + l as f64 * h;
            let c = c.clone();
            let end = if l + 1 == parts { b } else { offset + h };
            let len = end - offset;
            let bps: Vec<f64> = c.breakpoints().iter().filter(|t| **t > offset && **t < end).map(|t| t - offset).collect();
            let dim = c.dim();
            let order = c.order();
            out.push(Curve::from_map(0.0, len, order, bps, dim, move |t: f64, k: usize, side: Side| {
                c.jet_sided((offset + t).min(end), k, side)
            }));
        }
    }
    // pieces share the length h up to rounding; pin them to exactly [0, h]
    let out = out
        .into_iter()
        .map(|c| {
            if c.end() == h {
                c
            } else {
                let dim = c.dim();
                let order = c.order();
                let bps = c.breakpoints().to_vec();
                Curve::from_map(0.0, h, order, bps, dim, move |t: f64, k: usize, side: Side| {
                    c.jet_sided(t.min(c.end()), k, side)
                })
            }
        })
        .collect();
    CurveStack::new(out)
}

/// `n·(n+1)·…·(n+k)`, the number of terms in the `k`-th derivative of `χ`.
pub fn term_count(n: u64, k: u64) -> Result<u128> {
    if n < 1 {
        return Err(LabError::Argument("term count needs n ≥ 1".into()));
    }
    (0..=k).try_fold(1u128, |acc, i| acc.checked_mul(n as u128 + i as u128)).ok_or_else(|| {
        LabError::Argument(format!("term count for n = {n}, k = {k} overflows 128 bits"))
    })
}

/// `e·(n+1)·…·(n+q)/n^q`.
pub fn factorial_bound(n: usize, q: usize) -> f64 {
    let n = n as f64;
    std::f64::consts::E * (1..=q).map(|i| (n + i as f64) / n).product::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    PreconditionSkipped,
}

/// Measured `v^q_∞(χ)` against `e·(n+1)…(n+q)/n^q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupBoundReport {
    pub n: usize,
    pub q: usize,
    /// `max_p w^q_∞(χ_p)` of the input stack.
    pub stack_sup: f64,
    pub measured: f64,
    pub bound: f64,
    pub ratio: f64,
    pub status: CheckStatus,
}

/// Checks `v^q_∞(χ{φ₁,…,φₙ}) ≤ e·(n+1)…(n+q)/n^q` for `φ_p` the rescalings of
/// `χ₁, …, χₙ` on `[0, 1/n]`, where `(v, w)` is a certified asymptotic pair.
///
/// A stack with `w^q_∞(χ_p) > 1` violates the hypothesis and is reported as
/// skipped rather than failed.
pub fn chi_sup_bound_check(
    ctx: &LieContext,
    fam: &SeminormFamily,
    v_id: &str,
    w_id: &str,
    chis: &CurveStack,
    q: usize,
    cfg: &StepperConfig,
) -> Result<SupBoundReport> {
    let v = fam.get(v_id)?;
    let w = fam.get(w_id)?;
    let n = chis.len();
    let bound = factorial_bound(n, q);
    let stack_sup = chis.sup_norm_upto(q, w)?;
    if stack_sup > 1.0 {
        return Ok(SupBoundReport {
            n,
            q,
            stack_sup,
            measured: f64::NAN,
            bound,
            ratio: f64::NAN,
            status: CheckStatus::PreconditionSkipped,
        });
    }
    let chi = chi_compose(ctx, &rescale_stack(chis)?, cfg)?;
    let measured = chi.sup_norm_upto(q, 32, |m| v.eval(m))?;
    let ratio = measured / bound;
    Ok(SupBoundReport {
        n,
        q,
        stack_sup,
        measured,
        bound,
        ratio,
        status: if ratio <= 1.0 { CheckStatus::Pass } else { CheckStatus::Fail },
    })
}

/// `κ` with `operator_norm ≤ κ·norm` on `d×d` matrices.
fn op_domination(norm: &Seminorm, dim: usize) -> f64 {
    match norm.kind {
        NormKind::Operator | NormKind::Frobenius => 1.0 / norm.scale,
        NormKind::MaxEntry => dim as f64 / norm.scale,
    }
}

/// `K` with `norm ≤ K·operator_norm` on `d×d` matrices.
fn op_bound(norm: &Seminorm, dim: usize) -> f64 {
    match norm.kind {
        NormKind::Operator | NormKind::MaxEntry => norm.scale,
        NormKind::Frobenius => norm.scale * (dim as f64).sqrt(),
    }
}

/// Certificate of the panel count for the chart bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdivisionReport {
    /// First certified panel count, absent beyond the cap.
    pub m: Option<usize>,
    /// `K_m·(exp(|r′−r|/m·sup‖φ‖) − 1)` with `m ≤ K_m·op`, the a-priori bound for `m(Ξ∘μ_p)`.
    pub gronwall_bound: f64,
    /// Measured `max_p sup m(Ξ∘μ_p)`.
    pub chart_measured: f64,
    /// Measured `max_p sup q(Ξ∘μ_p)`.
    pub q_measured: f64,
    /// `|r′−r|/m·m_∞(φ)`.
    pub q_bound: f64,
    /// Whether `q∘ω̃ ≤ m` holds on the unit `m`-ball: `K_q·κ_m·(1 + κ_m) ≤ 1` for
    /// `q ≤ K_q·op` and `op ≤ κ_m·m`.
    pub omega_bound_holds: bool,
}

/// Largest panel count tried by [`subdivide_for_chart_bound`].
pub const MAX_SUBDIVISION: usize = 1 << 20;

/// Doubles `m` from `1` until every panel trajectory `μ_p = ∫_{(p−1)/m}^• φ` stays in
/// the unit `m`-ball of the chart and satisfies `q(Ξ∘μ_p) ≤ |r′−r|/m·m_∞(φ)`.
///
/// The Grönwall bound `‖μ_p − 1‖ ≤ exp(|r′−r|/m·sup‖φ‖) − 1` certifies ball
/// membership; on that ball `q(ω̃(x, X)) ≤ m(X)`, which yields the `q` bound.
/// Both are then confirmed by evolving every panel.
pub fn subdivide_for_chart_bound(
    ctx: &LieContext,
    fam: &SeminormFamily,
    phi: &Curve,
    q_id: &str,
    m_id: &str,
    cfg: &StepperConfig,
) -> Result<SubdivisionReport> {
    let qn = fam.get(q_id)?;
    let mn = fam.get(m_id)?;
    let d = ctx.dim();
    let sup_op = phi.sup_norm(0, 32, operator_norm)?;
    let m_sup = phi.sup_norm(0, 32, |x| mn.eval(x))?;
    let len = phi.len();
    let k_m = op_bound(mn, d);
    let kappa_m = op_domination(mn, d);
    let omega_bound_holds = op_bound(qn, d) * kappa_m * (1.0 + kappa_m) <= 1.0;
    let mut m = 1usize;
    loop {
        let growth = (len / m as f64 * sup_op).exp() - 1.0;
        let gronwall = k_m * growth;
        if gronwall < 1.0 && growth < ctx.chart_radius() {
            let q_bound = len / m as f64 * m_sup;
            let (mut chart_measured, mut q_measured): (f64, f64) = (0.0, 0.0);
            let h = len / m as f64;
            for p in 0..m {
                let a0 = phi.start() + p as f64 * h;
                let b0 = if p + 1 == m { phi.end() } else { a0 + h };
                for i in 1..=8 {
                    let t = a0 + (b0 - a0) * i as f64 / 8.0;
                    let x = evolve_matrix(ctx, phi, a0, t, cfg)? - ctx.identity();
                    chart_measured = chart_measured.max(mn.eval(&x));
                    q_measured = q_measured.max(qn.eval(&x));
                }
            }
            if chart_measured <= 1.0 && q_measured <= q_bound * (1.0 + 1e-12) + 1e-15 {
                return Ok(SubdivisionReport {
                    m: Some(m),
                    gronwall_bound: gronwall,
                    chart_measured,
                    q_measured,
                    q_bound,
                    omega_bound_holds,
                });
            }
        }
        if m >= MAX_SUBDIVISION {
            return Ok(SubdivisionReport {
                m: None,
                gronwall_bound: gronwall,
                chart_measured: f64::NAN,
                q_measured: f64::NAN,
                q_bound: len / m as f64 * m_sup,
                omega_bound_holds,
            });
        }
        m *= 2;
    }
}

/// One certified step of the continuity pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCertificate {
    pub stage: String,
    pub claim: String,
    pub measured: f64,
    pub bound: f64,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub m: Option<usize>,
    pub n: usize,
    pub stages: Vec<StageCertificate>,
    /// `e·(n+1)…(n+q̄)/n^q̄` for the final stack.
    pub factorial_bound: f64,
    /// `‖∫φ − 1‖` in the target seminorm.
    pub final_chart_norm: f64,
    pub passed: bool,
}

impl PipelineReport {
    pub fn failed_stage(&self) -> Option<&StageCertificate> {
        self.stages.iter().find(|s| s.status == CheckStatus::Fail)
    }
}

/// Seminorms and sizes used by [`continuity_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Target chart seminorm `p`.
    pub p_id: String,
    /// `v ≥ p` with `(v, w)` a certified asymptotic pair.
    pub v_id: String,
    pub w_id: String,
    /// `q` with `w∘Ω[n] ≤ q^{n+1}` on the unit `m`-ball for `n ≤ q̄`.
    pub q_id: String,
    pub m_id: String,
    /// Derivative order `q̄` of the sup-seminorms.
    pub q_bar: usize,
    /// Number of sub-pieces each straight-line panel curve is split into.
    pub split: usize,
    pub stepper: StepperConfig,
}

impl PipelineConfig {
    /// `p = v = op`, `w = 2·op`, `q = 4·op`, `m = 8·op`, `q̄ = 2`, split `8`.
    pub fn standard(fam: &mut SeminormFamily) -> Result<Self> {
        let w = fam.with_multiple("op", 2.0)?;
        let q = fam.with_multiple("op", 4.0)?;
        let m = fam.with_multiple("op", 8.0)?;
        Ok(PipelineConfig {
            p_id: "op".into(),
            v_id: "op".into(),
            w_id: w,
            q_id: q,
            m_id: m,
            q_bar: 2,
            split: 8,
            stepper: StepperConfig::fixed(crate::evolution::Method::CommutatorFree4, 128).without_defect(),
        })
    }
}

/// Straight-line chart curve `ψ = δ(t ↦ 1 + t·Z)` on `[0, len]`:
/// `ψ^{(n)}(t) = (−1)^n·n!·Z^{n+1}(1 + tZ)^{−(n+1)}`.
pub fn chart_line(z: &Matrix, len: f64) -> Curve {
    let z = z.clone();
    let d = z.nrows();
    Curve::from_map(0.0, len, Order::Smooth, Vec::new(), d, move |t: f64, k: usize, _s: Side| {
        let inv = invert(&(Matrix::identity(d, d) + &z * t)).map_err(|_| LabError::Singular { at: Some(t) })?;
        let base = &z * &inv;
        let mut power = base.clone();
        let mut out = Vec::with_capacity(k + 1);
        let mut fact = 1.0;
        for n in 0..=k {
            if n > 0 {
                fact *= -(n as f64);
                power = &power * &base;
            }
            out.push(&power * fact);
        }
        Ok(out)
    })
}

fn stage(name: &str, claim: &str, measured: f64, bound: f64) -> StageCertificate {
    let ok = measured <= bound;
    StageCertificate {
        stage: name.into(),
        claim: claim.into(),
        measured,
        bound,
        status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
    }
}

/// Runs the continuity argument for one `φ` on `[0, 1]` with `m_∞(φ) ≤ 1`:
/// subdivide, replace each panel by the straight chart line through its endpoint,
/// bound the derivatives of the resulting curves, collapse them into a single
/// `χ` and bound `v^q̄_∞(χ)`, and finally bound `(p∘Ξ)(∫φ)` by `exp(v_∞(χ)) − 1`.
///
/// When the straight-line curves leave the subalgebra, everything after the
/// subdivision runs in the ambient `gl(d)`.
pub fn continuity_pipeline(ctx: &LieContext, fam: &SeminormFamily, phi: &Curve, cfg: &PipelineConfig) -> Result<PipelineReport> {
    if phi.interval() != (0.0, 1.0) {
        return Err(LabError::Argument("pipeline curves live on [0, 1]".into()));
    }
    let p = fam.get(&cfg.p_id)?;
    let v = fam.get(&cfg.v_id)?;
    let w = fam.get(&cfg.w_id)?;
    let q = fam.get(&cfg.q_id)?;
    let mn = fam.get(&cfg.m_id)?;
    let mut stages = Vec::new();
    let m_sup = phi.sup_norm(0, 32, |x| mn.eval(x))?;
    stages.push(stage("input", "m_∞(φ) ≤ 1", m_sup, 1.0));
    let sub = subdivide_for_chart_bound(ctx, fam, phi, &cfg.q_id, &cfg.m_id, &cfg.stepper)?;
    let fail = |stages: Vec<StageCertificate>, m: Option<usize>| PipelineReport {
        m,
        n: 0,
        stages,
        factorial_bound: f64::NAN,
        final_chart_norm: f64::NAN,
        passed: false,
    };
    let Some(m) = sub.m else {
        stages.push(stage("subdivision", "m ≤ 2^20", f64::INFINITY, MAX_SUBDIVISION as f64));
        return Ok(fail(stages, None));
    };
    stages.push(stage("subdivision", "q(Ξ∘μ_p) ≤ m_∞(φ)/m", sub.q_measured, sub.q_bound * (1.0 + 1e-12) + 1e-15));
    stages.push(stage("subdivision-ball", "m(Ξ∘μ_p) ≤ 1", sub.chart_measured, 1.0));
    let omega = if sub.omega_bound_holds { 0.0 } else { 1.0 };
    stages.push(stage("chart-omega", "q∘ω̃ ≤ m on the unit m-ball", omega, 0.0));
    let h = 1.0 / m as f64;
    let mut lines = Vec::with_capacity(m);
    let mut panel_worst: f64 = 0.0;
    for i in 0..m {
        let a = i as f64 * h;
        let b = if i + 1 == m { 1.0 } else { a + h };
        let x = evolve_matrix(ctx, phi, a, b, &cfg.stepper)? - ctx.identity();
        let z = &x * m as f64;
        panel_worst = panel_worst.max(q.eval(&z));
        lines.push(z);
    }
    stages.push(stage("panel-chart", "q(m·X_p) ≤ 1", panel_worst, 1.0));
    let closed = lines.iter().all(|z| ctx.is_algebra_member(z) && ctx.is_algebra_member(&(z * z)));
    let (ambient, ambient_cfg) = if closed {
        (ctx.clone(), cfg.stepper)
    } else {
        let mut sc = cfg.stepper;
        if sc.method == crate::evolution::Method::NilpotentMagnus {
            sc.method = crate::evolution::Method::CommutatorFree4;
        }
        (LieContext::gl(ctx.dim()), sc)
    };
    let psis: Vec<Curve> = lines.iter().map(|z| chart_line(z, h)).collect();
    let mut deriv_worst: f64 = 0.0;
    for (z, psi) in lines.iter().zip(&psis) {
        let qz = q.eval(z);
        for (t, side) in psi.sample_points(16) {
            let jet = psi.jet_sided(t, cfg.q_bar, side)?;
            for (n, d) in jet.iter().enumerate() {
                let bound = qz.powi(n as i32 + 1);
                let measured = w.eval(d);
                deriv_worst = deriv_worst.max(if bound > 0.0 { measured / bound } else if measured > 0.0 { f64::INFINITY } else { 0.0 });
            }
        }
    }
    stages.push(stage("derivative-bound", "w(ψ_p^(n)) ≤ q(m·X_p)^(n+1)", deriv_worst, 1.0));
    let psi_stack = CurveStack::new(psis)?;
    let chis = split_stack(&psi_stack, cfg.split)?;
    let n = chis.len();
    let stack_sup = chis.sup_norm_upto(cfg.q_bar, w)?;
    stages.push(stage("derivative-bound-stack", "w^q̄_∞(χ_j) ≤ 1", stack_sup, 1.0));
    let phis = rescale_stack(&chis)?;
    let chi = chi_compose(&ambient, &phis, &ambient_cfg)?;
    let target = evolve_matrix(ctx, phi, 0.0, 1.0, &cfg.stepper)?;
    let collapsed = evolve_matrix(&ambient, &chi, 0.0, 1.0, &ambient_cfg)?;
    let gap = (&collapsed - &target).abs().max() / target.abs().max().max(1.0);
    stages.push(stage("collapse", "∫χ = ∫φ", gap, 1e-7 * n as f64));
    let fb = factorial_bound(n, cfg.q_bar);
    let measured = chi.sup_norm_upto(cfg.q_bar, 32, |x| v.eval(x))?;
    stages.push(stage("factorial-sup-bound", "v^q̄_∞(χ) ≤ e·(n+1)…(n+q̄)/n^q̄", measured, fb));
    let v_sup = chi.sup_norm(0, 32, |x| v.eval(x))?;
    let final_norm = p.eval(&(&target - ctx.identity()));
    let budget = fb.exp() - 1.0;
    stages.push(stage("chart-bound", "(p∘Ξ)(∫φ) ≤ exp(v_∞(χ)) − 1", final_norm, (v_sup.exp() - 1.0).min(budget) * (1.0 + 1e-9)));
    let passed = stages.iter().all(|s| s.status == CheckStatus::Pass);
    Ok(PipelineReport {
        m: Some(m),
        n,
        stages,
        factorial_bound: fb,
        final_chart_norm: final_norm,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::Method;
    use crate::lie::{so3_generator, unit};
    use crate::sampling::{bounded_trig_curve, rng};

    fn cf4() -> StepperConfig {
        StepperConfig::fixed(Method::CommutatorFree4, 128).without_defect()
    }

    #[test]
    fn term_count_examples() {
        assert_eq!(term_count(5, 0).unwrap(), 5);
        assert_eq!(term_count(3, 2).unwrap(), 60);
        assert_eq!(term_count(2, 3).unwrap(), 120);
        assert!(term_count(0, 1).is_err());
        for n in 1..10 {
            for k in 1..10 {
                assert_eq!(term_count(n, k).unwrap(), term_count(n, k - 1).unwrap() * (n + k) as u128);
            }
        }
        assert!(term_count(u64::MAX, 3).is_err());
    }

    #[test]
    fn factorial_bound_values() {
        assert!((factorial_bound(1, 0) - std::f64::consts::E).abs() < 1e-15);
        assert!((factorial_bound(1, 1) - 2.0 * std::f64::consts::E).abs() < 1e-15);
        assert!((factorial_bound(2, 2) - 3.0 * std::f64::consts::E).abs() < 1e-14);
        assert!((factorial_bound(2, 2) - 8.1548).abs() < 1e-4);
        for q in 1..=3 {
            let seq: Vec<f64> = (2..=64).map(|n| factorial_bound(n, q)).collect();
            assert!(seq.windows(2).all(|w| w[1] < w[0]));
            assert!(factorial_bound(64, q) < 3.0 * std::f64::consts::E);
        }
    }

    #[test]
    fn chi_examples() {
        let h = LieContext::heisenberg();
        let cfg = StepperConfig::accurate(&h, 16);
        let single = Curve::polynomial(0.0, 1.0, vec![unit(3, 0, 1), unit(3, 1, 2)]);
        let chi = chi_compose(&h, &CurveStack::new(vec![single.clone()]).unwrap(), &cfg).unwrap();
        assert_eq!(chi.eval(0.3, 1).unwrap(), single.eval(0.3, 1).unwrap());
        let zeros = CurveStack::new(vec![Curve::zero(0.0, 1.0, 3); 3]).unwrap();
        let chi = chi_compose(&h, &zeros, &cfg).unwrap();
        assert!(chi.eval(0.7, 0).unwrap().iter().all(|v| *v == 0.0));
        let stack = CurveStack::new(vec![Curve::constant(0.0, 1.0, unit(3, 0, 1)), Curve::constant(0.0, 1.0, unit(3, 1, 2))]).unwrap();
        let chi = chi_compose(&h, &stack, &cfg).unwrap();
        let got = evolve_matrix(&h, &chi, 0.0, 1.0, &cfg).unwrap();
        let expect = h.exp_matrix(&unit(3, 1, 2)) * h.exp_matrix(&unit(3, 0, 1));
        assert!((got - expect).abs().max() < 1e-14);
    }

    #[test]
    fn collapse_and_associativity() {
        let so3 = LieContext::so3();
        let mut r = rng(11);
        let curves: Vec<Curve> = (0..3).map(|_| crate::sampling::smooth_curve(&so3, &mut r, 0.0, 1.0, 0.5)).collect();
        let cfg = cf4();
        let stack = CurveStack::new(curves.clone()).unwrap();
        let chi = chi_compose(&so3, &stack, &cfg).unwrap();
        let direct = stack.ordered_product(&so3, &cfg).unwrap();
        let collapsed = evolve_matrix(&so3, &chi, 0.0, 1.0, &cfg).unwrap();
        assert!((&collapsed - &direct).abs().max() < 3e-7);
        let inner = chi_compose(&so3, &CurveStack::new(curves[..2].to_vec()).unwrap(), &cfg).unwrap();
        let nested = chi_compose(&so3, &CurveStack::new(vec![inner, curves[2].clone()]).unwrap(), &cfg).unwrap();
        let nested_end = evolve_matrix(&so3, &nested, 0.0, 1.0, &cfg).unwrap();
        assert!((nested_end - collapsed).abs().max() < 1e-7);
    }

    #[test]
    fn rescale_examples() {
        let so3 = LieContext::so3();
        let cfg = cf4();
        let xs = [so3_generator(0), so3_generator(1) * 0.5, so3_generator(2) * 2.0];
        let n = xs.len() as f64;
        let chis = CurveStack::new(xs.iter().map(|x| Curve::constant(0.0, 1.0 / n, x.clone())).collect()).unwrap();
        let phis = rescale_stack(&chis).unwrap();
        for (phi, x) in phis.curves().iter().zip(&xs) {
            assert!((phi.eval(0.4, 0).unwrap() - x / n).abs().max() < 1e-15);
        }
        let prod = phis.ordered_product(&so3, &cfg).unwrap();
        let expect = xs.iter().fold(so3.identity(), |acc, x| so3.exp_matrix(&(x / n)) * acc);
        assert!((prod - expect).abs().max() < 1e-12);
        let bad = CurveStack::new(vec![Curve::constant(0.0, 1.0, so3_generator(0)); 2]).unwrap();
        assert!(matches!(rescale_stack(&bad), Err(LabError::Argument(_))));
    }

    #[test]
    fn sup_bound_on_unit_stacks() {
        let gl3 = LieContext::gl(3);
        let mut fam = SeminormFamily::standard();
        let w = fam.with_multiple("op", 2.0).unwrap();
        let mut r = rng(4);
        for n in [2usize, 4] {
            let chis = CurveStack::new((0..n).map(|_| bounded_trig_curve(&gl3, &mut r, 0.0, 1.0 / n as f64, 0.5)).collect()).unwrap();
            for q in 0..=3 {
                let rep = chi_sup_bound_check(&gl3, &fam, "op", &w, &chis, q, &cf4()).unwrap();
                assert_eq!(rep.status, CheckStatus::Pass, "{rep:?}");
            }
        }
        let big = CurveStack::new(vec![Curve::constant(0.0, 0.5, unit(3, 0, 1)); 2]).unwrap();
        let rep = chi_sup_bound_check(&gl3, &fam, "op", &w, &big, 1, &cf4()).unwrap();
        assert_eq!(rep.status, CheckStatus::PreconditionSkipped);
    }

    #[test]
    fn subdivision_examples() {
        let so3 = LieContext::so3();
        let mut fam = SeminormFamily::standard();
        let cfg = PipelineConfig::standard(&mut fam).unwrap();
        let zero = Curve::zero(0.0, 1.0, 3);
        let rep = subdivide_for_chart_bound(&so3, &fam, &zero, &cfg.q_id, &cfg.m_id, &cfg.stepper).unwrap();
        assert_eq!(rep.m, Some(1));
        assert!(rep.omega_bound_holds);
        let small = Curve::constant(0.0, 1.0, so3_generator(2) * 0.1);
        let rep = subdivide_for_chart_bound(&so3, &fam, &small, &cfg.q_id, &cfg.m_id, &cfg.stepper).unwrap();
        assert_eq!(rep.m, Some(1));
        let wild = Curve::constant(0.0, 1.0, so3_generator(2) * 10.0);
        let rep = subdivide_for_chart_bound(&so3, &fam, &wild, &cfg.q_id, &cfg.m_id, &cfg.stepper).unwrap();
        let m = rep.m.unwrap();
        assert!(rep.chart_measured <= 1.0 && rep.q_measured <= rep.q_bound);
        assert!(m.is_power_of_two() && m >= 64);
    }

    #[test]
    fn pipeline_examples() {
        let mut fam = SeminormFamily::standard();
        let cfg = PipelineConfig::standard(&mut fam).unwrap();
        let so3 = LieContext::so3();
        let rep = continuity_pipeline(&so3, &fam, &Curve::zero(0.0, 1.0, 3), &cfg).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.final_chart_norm, 0.0);
        let mut r = rng(8);
        let phi = bounded_trig_curve(&so3, &mut r, 0.0, 1.0, 0.125);
        let rep = continuity_pipeline(&so3, &fam, &phi, &cfg).unwrap();
        assert!(rep.passed, "{rep:#?}");
        let h = LieContext::heisenberg();
        let hphi = Curve::trig(0.0, 1.0, vec![crate::curve::TrigTerm::sin(1.0, 0.3, (unit(3, 0, 1) + unit(3, 1, 2)) * 0.125)]);
        let cfg_h = PipelineConfig {
            stepper: StepperConfig::accurate(&h, 64),
            ..cfg.clone()
        };
        let rep = continuity_pipeline(&h, &fam, &hphi, &cfg_h).unwrap();
        assert!(rep.passed, "{rep:#?}");
    }
}
