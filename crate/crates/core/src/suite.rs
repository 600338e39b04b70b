//! Named check suites. Each check yields one report row with its anchor formula,
//! the measured value, the bound it is compared with and the outcome.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adjoint::{
    adjoint_ode_defect, ai_identity_gap, duhamel_series, empirical_order, scheme_study, transport_scheme, TransportScheme,
    ORDER_SLACK,
};
use crate::approx::{confined_pipeline, hull_distance, panel_knots, ConfinedConfig, ConfinedReport, EvidenceRow};
use crate::composition::{
    chi_compose, chi_sup_bound_check, continuity_pipeline, factorial_bound, term_count, CheckStatus, CurveStack, PipelineConfig,
};
use crate::curve::{Curve, TrigTerm};
use crate::error::{LabError, Result};
use crate::estimates::{
    asymptotic_witness, chain, constricted_constants, mu_convexity_check, tame_check, transport_bound_check, EstimateWitness,
    KSample,
};
use crate::evolution::{
    combine_inverse, combine_product, evolve_full, evolve_matrix, inverse_curve, split_evolve, substitute, Method, Reparam,
    StepperConfig,
};
use crate::lie::{invert, so3_generator, LieContext, Matrix};
use crate::norms::{operator_norm, SeminormFamily};
use crate::sampling::{ball_element, bounded_trig_curve, polynomial_curve, rng_stream, smooth_curve, unit_direction, SampleRng};

/// Number of random curves per identity check.
pub const IDENTITY_CURVES: usize = 100;
/// Chain samples per depth for the asymptotic-estimate search.
pub const CHAIN_SAMPLES: usize = 1000;
/// Random `(φ, Y, t)` triples for the transport bound.
pub const TRANSPORT_SAMPLES: usize = 100;
/// Random curves with `m_∞(φ) ≤ 1` fed through the continuity pipeline.
pub const PIPELINE_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    Identities,
    Adjoint,
    Estimates,
    Composition,
    Approx,
    All,
}

impl SuiteName {
    pub const NAMES: [&'static str; 6] = ["identities", "adjoint", "estimates", "composition", "approx", "all"];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::Identities => "identities",
            SuiteName::Adjoint => "adjoint",
            SuiteName::Estimates => "estimates",
            SuiteName::Composition => "composition",
            SuiteName::Approx => "approx",
            SuiteName::All => "all",
        }
    }

    /// The concrete suites run for this name.
    pub fn expand(self) -> Vec<SuiteName> {
        match self {
            SuiteName::All => vec![
                SuiteName::Identities,
                SuiteName::Adjoint,
                SuiteName::Estimates,
                SuiteName::Composition,
                SuiteName::Approx,
            ],
            s => vec![s],
        }
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuiteName {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identities" => SuiteName::Identities,
            "adjoint" => SuiteName::Adjoint,
            "estimates" => SuiteName::Estimates,
            "composition" => SuiteName::Composition,
            "approx" => SuiteName::Approx,
            "all" => SuiteName::All,
            other => {
                return Err(LabError::Lookup(format!(
                    "suite '{other}' (known: {})",
                    SuiteName::NAMES.join(", ")
                )))
            }
        })
    }
}

/// One executed check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub suite: String,
    pub check_id: String,
    pub anchor: String,
    /// Number of samples, or the size parameter of the check.
    pub n: usize,
    pub measured: f64,
    pub bound: f64,
    /// `measured/bound` for upper bounds and `bound/measured` for lower bounds.
    pub ratio: f64,
    pub pass: CheckStatus,
}

/// Scheme convergence row for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub context: String,
    pub curve_id: String,
    pub n: usize,
    pub sup_node_error: f64,
    pub defect_a: f64,
    pub defect_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Csv,
    Jsonl,
}

impl FromStr for ReportFormat {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" | "json-lines" => Ok(ReportFormat::Jsonl),
            other => Err(LabError::Lookup(format!("report format '{other}' (known: csv, jsonl)"))),
        }
    }
}

/// Settings shared by every suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteSettings {
    pub seed: u64,
    /// Replaces the relative tolerance of the identities suite.
    pub tol: Option<f64>,
}

impl SuiteSettings {
    pub fn new(seed: u64) -> Self {
        SuiteSettings { seed, tol: None }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SuiteReport {
    pub rows: Vec<CheckRow>,
    pub convergence: Vec<ConvergenceRecord>,
    pub evidence: Vec<EvidenceRow>,
    /// The constricted witness certified by the estimates suite.
    pub witness: Option<EstimateWitness>,
    /// Error messages of checks that aborted.
    pub notes: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| r.pass == CheckStatus::Fail)
    }

    pub fn write_rows(&self, out: impl Write, format: ReportFormat) -> Result<()> {
        write_rows(&self.rows, out, format)
    }

    pub fn write_convergence(&self, out: impl Write) -> Result<()> {
        write_csv(&self.convergence, out)
    }

    pub fn write_evidence(&self, out: impl Write) -> Result<()> {
        write_csv(&self.evidence, out)
    }

    fn extend(&mut self, other: SuiteReport) {
        self.rows.extend(other.rows);
        self.convergence.extend(other.convergence);
        self.evidence.extend(other.evidence);
        self.notes.extend(other.notes);
        if other.witness.is_some() {
            self.witness = other.witness;
        }
    }
}

pub fn write_rows(rows: &[CheckRow], mut out: impl Write, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Csv => write_csv(rows, out),
        ReportFormat::Jsonl => {
            for row in rows {
                writeln!(out, "{}", serde_json::to_string(row)?)?;
            }
            out.flush()?;
            Ok(())
        }
    }
}

fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the named suite on `ctx`. Context-specific reference instances
/// (rotations on `so(3)`, the `gl(3)` multiplier, Heisenberg chains) run on
/// their builtin contexts regardless of `ctx`.
pub fn run_suite(ctx: &LieContext, suite: SuiteName, settings: &SuiteSettings) -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    for s in suite.expand() {
        let mut rec = Recorder::new(s);
        match s {
            SuiteName::Identities => identities(ctx, settings, &mut rec),
            SuiteName::Adjoint => adjoint(ctx, settings, &mut rec),
            SuiteName::Estimates => estimates(ctx, settings, &mut rec),
            SuiteName::Composition => composition(ctx, settings, &mut rec),
            SuiteName::Approx => approx(ctx, settings, &mut rec),
            SuiteName::All => unreachable!(),
        }
        report.extend(rec.report);
    }
    Ok(report)
}

struct Recorder {
    suite: SuiteName,
    report: SuiteReport,
}

impl Recorder {
    fn new(suite: SuiteName) -> Self {
        Recorder {
            suite,
            report: SuiteReport::default(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn row(&mut self, id: &str, anchor: &str, n: usize, measured: f64, bound: f64, ratio: f64, pass: CheckStatus) {
        self.report.rows.push(CheckRow {
            suite: self.suite.to_string(),
            check_id: id.into(),
            anchor: anchor.into(),
            n,
            measured,
            bound,
            ratio,
            pass,
        });
    }

    /// `measured ≤ bound`.
    fn upper(&mut self, id: &str, anchor: &str, n: usize, measured: f64, bound: f64) {
        let ratio = if bound > 0.0 {
            measured / bound
        } else if measured == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        self.row(id, anchor, n, measured, bound, ratio, status(measured <= bound));
    }

    /// `measured ≥ bound`.
    fn lower(&mut self, id: &str, anchor: &str, n: usize, measured: f64, bound: f64) {
        self.row(id, anchor, n, measured, bound, bound / measured, status(measured >= bound));
    }

    /// Records an aborted check as failed, or as skipped for an unmet precondition.
    fn guard(&mut self, id: &str, anchor: &str, f: impl FnOnce(&mut Self) -> Result<()>) {
        if let Err(err) = f(self) {
            let pass = match err {
                LabError::Precondition(_) => CheckStatus::PreconditionSkipped,
                _ => CheckStatus::Fail,
            };
            self.report.notes.push(format!("{}/{id}: {err}", self.suite));
            self.row(id, anchor, 0, f64::NAN, f64::NAN, f64::NAN, pass);
        }
    }
}

fn status(ok: bool) -> CheckStatus {
    if ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

/// `max|a − b| / max(1, max|b|)`.
pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).abs().max() / b.abs().max().max(1.0)
}

fn stepper(ctx: &LieContext, steps: usize) -> StepperConfig {
    StepperConfig::accurate(ctx, steps)
}

fn nilpotent(ctx: &LieContext) -> bool {
    matches!(ctx.nilpotency_class(), Some(c) if c <= 2)
}

/// Random curve on `[0, 1]`: polynomial for nilpotent contexts, where the
/// class-2 step is exact, and trigonometric-polynomial elsewhere.
fn random_curve(ctx: &LieContext, rng: &mut SampleRng, scale: f64) -> Curve {
    if nilpotent(ctx) {
        polynomial_curve(ctx, rng, 0.0, 1.0, 2, scale)
    } else {
        smooth_curve(ctx, rng, 0.0, 1.0, scale)
    }
}

mod stream {
    pub const IDENTITIES: u64 = 100;
    pub const ADJOINT_DEFECT: u64 = 200;
    pub const AI: u64 = 300;
    pub const SCHEME: u64 = 400;
    pub const DUHAMEL: u64 = 500;
    pub const DUHAMEL_CTX: u64 = 510;
    pub const HEISENBERG: u64 = 600;
    pub const TRANSPORT: u64 = 700;
    pub const COLLAPSE: u64 = 800;
    pub const STACKS: u64 = 900;
    pub const PIPELINE: u64 = 1000;
    pub const APPROX: u64 = 1100;
}

const ANCHOR_PRODUCT: &str = "φ + Ad_{∫_r^•φ}(ψ) ∈ D";
const ANCHOR_INVERSE: &str = "−Ad_{[∫_r^•φ]⁻¹}(φ) ∈ D";
const ANCHOR_SPLIT: &str = "∫_r^t φ = ∫_{t_p}^t φ · ∫_{t_{p−1}}^{t_p} φ · … · ∫_r^{t₁} φ";
const ANCHOR_SUBSTITUTE: &str = "ρ̇·(φ∘ρ) ∈ D_{[ℓ,ℓ′]}";
const ANCHOR_INVERSE_CURVE: &str = "[∫φ]⁻¹ = ∫φ̃";

fn identities(ctx: &LieContext, settings: &SuiteSettings, rec: &mut Recorder) {
    let tol = settings.tol.unwrap_or(if nilpotent(ctx) { 1e-12 } else { 1e-7 });
    let cfg = stepper(ctx, 256);
    let rho = Reparam::new(0.0, 1.0, vec![0.0, 0.0, 1.0]).expect("valid reparametrization");
    let mut worst = [0.0f64; 5];
    let result = (|| -> Result<()> {
        for i in 0..IDENTITY_CURVES {
            let mut rng = rng_stream(settings.seed, stream::IDENTITIES + i as u64);
            let phi = random_curve(ctx, &mut rng, 0.5);
            let psi = random_curve(ctx, &mut rng, 0.5);
            let g_phi = evolve_full(ctx, &phi, &cfg)?;
            let g_psi = evolve_full(ctx, &psi, &cfg)?;
            let prod = evolve_full(ctx, &combine_product(ctx, &phi, &psi, &cfg)?, &cfg)?;
            worst[0] = worst[0].max(relative_error(&prod, &(&g_phi * &g_psi)));
            let inv = evolve_full(ctx, &combine_inverse(ctx, &phi, &cfg)?, &cfg)?;
            worst[1] = worst[1].max(relative_error(&(inv * &g_phi), &ctx.identity()));
            for n in [2usize, 4, 8] {
                let part: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
                let split = split_evolve(ctx, &phi, &part, &cfg)?;
                worst[2] = worst[2].max(relative_error(split.matrix(), &g_phi));
            }
            let sub = substitute(&phi, &rho)?;
            for s in [0.5, 1.0] {
                let lhs = evolve_matrix(ctx, &phi, 0.0, s * s, &cfg)?;
                let rhs = evolve_matrix(ctx, &sub, 0.0, s, &cfg)?;
                worst[3] = worst[3].max(relative_error(&rhs, &lhs));
            }
            let tilde = evolve_full(ctx, &inverse_curve(&phi), &cfg)?;
            worst[4] = worst[4].max(relative_error(&(tilde * &g_phi), &ctx.identity()));
        }
        Ok(())
    })();
    let ids = [
        ("product-curve", ANCHOR_PRODUCT),
        ("inverse-of-integral", ANCHOR_INVERSE),
        ("split-partition", ANCHOR_SPLIT),
        ("substitution", ANCHOR_SUBSTITUTE),
        ("inverse-curve", ANCHOR_INVERSE_CURVE),
    ];
    match result {
        Ok(()) => {
            for (k, (id, anchor)) in ids.iter().enumerate() {
                rec.upper(id, anchor, IDENTITY_CURVES, worst[k], tol);
            }
        }
        Err(err) => {
            for (id, anchor) in ids {
                let msg = format!("{err}");
                rec.guard(id, anchor, |_| Err(LabError::Argument(msg)));
            }
        }
    }
}

/// `exp(θK)·Y·exp(−θK)` for `K = u·ê` with `|u| = 1`, by the Rodrigues formula.
fn rodrigues_action(axis: [f64; 3], theta: f64, y: &Matrix) -> Matrix {
    let k = so3_generator(0) * axis[0] + so3_generator(1) * axis[1] + so3_generator(2) * axis[2];
    let r = Matrix::identity(3, 3) + &k * theta.sin() + &k * &k * (1.0 - theta.cos());
    &r * y * r.transpose()
}

fn adjoint(ctx: &LieContext, settings: &SuiteSettings, rec: &mut Recorder) {
    let fam = SeminormFamily::standard();
    let cfg = stepper(ctx, 1024);
    let trials = 8;
    rec.guard("adjoint-ode-defect", "∂_t Ad_{∫_r^tφ}(ψ) = [φ, Ad(ψ)] + Ad(ψ̇)", |rec| {
        let mut worst: f64 = 0.0;
        for i in 0..trials {
            let mut rng = rng_stream(settings.seed, stream::ADJOINT_DEFECT + i);
            let phi = smooth_curve(ctx, &mut rng, 0.0, 1.0, 0.5);
            let psi = smooth_curve(ctx, &mut rng, 0.0, 1.0, 0.5);
            let d = adjoint_ode_defect(ctx, &phi, &psi, 1e-4, &cfg)?;
            worst = worst.max(d.sup_norm(0, 16, operator_norm)?);
        }
        rec.upper("adjoint-ode-defect", "∂_t Ad_{∫_r^tφ}(ψ) = [φ, Ad(ψ)] + Ad(ψ̇)", trials as usize, worst, 1e-6);
        Ok(())
    });
    let anchor_ai = "β − β(r) = AI(φ,α)";
    rec.guard("ai-identity", anchor_ai, |rec| {
        let mut worst: f64 = 0.0;
        for i in 0..trials {
            let mut rng = rng_stream(settings.seed, stream::AI + i);
            let phi = smooth_curve(ctx, &mut rng, 0.0, 1.0, 0.5);
            let y = unit_direction(ctx, &mut rng);
            let pt = transport_scheme(ctx, &phi, TransportScheme::new(4), &y)?;
            let gap = ai_identity_gap(ctx, &phi, pt.knots(), &pt.pieces(), &[0.1, 0.5, 0.77, 1.0], &cfg)?;
            worst = worst.max(gap);
        }
        rec.upper("ai-identity", anchor_ai, trials as usize, worst, 1e-8);
        Ok(())
    });
    let anchor_scheme = "Λ[X]_n → Ad_{∫_r^•φ}(Y)";
    rec.guard("scheme-monotone", anchor_scheme, |rec| {
        let mut rng = rng_stream(settings.seed, stream::SCHEME);
        let x = unit_direction(ctx, &mut rng);
        let z = unit_direction(ctx, &mut rng);
        let y = unit_direction(ctx, &mut rng);
        let phi = Curve::polynomial(0.0, 1.0, vec![x, z]);
        let v = fam.get("op")?.clone();
        let w = v.scaled(2.0);
        let ns = [4usize, 8, 16, 32];
        let rows = scheme_study(ctx, &phi, &y, &ns, &v, &w, &StepperConfig::fixed(Method::CommutatorFree4, 1024).without_defect())?;
        for r in &rows {
            rec.report.convergence.push(ConvergenceRecord {
                context: ctx.name().into(),
                curve_id: "affine-0".into(),
                n: r.n,
                sup_node_error: r.sup_node_error,
                defect_a: r.defect_a,
                defect_b: r.defect_b,
            });
        }
        let errs: Vec<f64> = rows.iter().map(|r| r.sup_node_error).collect();
        let exact = errs.iter().all(|e| *e <= 1e-13);
        let increases = errs.windows(2).filter(|w| w[1] >= w[0]).count();
        rec.upper("scheme-monotone", anchor_scheme, ns.len(), if exact { 0.0 } else { increases as f64 }, 0.0);
        if exact {
            rec.row("scheme-order", anchor_scheme, ns.len(), f64::INFINITY, 1.0 - ORDER_SLACK, 0.0, CheckStatus::Pass);
        } else {
            rec.lower("scheme-order", anchor_scheme, ns.len(), empirical_order(&ns, &errs), 1.0 - ORDER_SLACK);
        }
        let ratio = rows.iter().map(|r| r.bound_ratio).fold(0.0, f64::max);
        rec.upper("scheme-defect-bound", "w(X_p − φ(τ))·A + w_∞(φ)·B", ns.len(), ratio, 1.0);
        let gap = rows.iter().map(|r| r.split_gap).fold(0.0, f64::max);
        rec.upper("scheme-defect-split", "α̇[p] − [φ, α[p]] = A + B", ns.len(), gap, 1e-12);
        Ok(())
    });
    let anchor_duhamel = "Ad_{exp(tX)}(Y) = Σ_k t^k/k!·ad_X^k(Y)";
    rec.guard("duhamel-so3-rotation", anchor_duhamel, |rec| {
        let so3 = LieContext::so3();
        let witness = constricted_constants(&so3, &fam, "op", &KSample::Ball { radius: 1.0 }, 3, 64, settings.seed)?;
        let mut worst: f64 = 0.0;
        for i in 0..trials {
            let mut rng = rng_stream(settings.seed, stream::DUHAMEL + i);
            let u = unit_direction(&so3, &mut rng);
            let c = so3.coordinates(&u);
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            let axis = [c[0] / norm, c[1] / norm, c[2] / norm];
            let theta: f64 = rand::Rng::random_range(&mut rng, 0.05..1.0);
            let x = so3.from_coordinates(&[axis[0] * theta, axis[1] * theta, axis[2] * theta]);
            let x = if witness.contains(&x) { x } else { &x * (1.0 / operator_norm(&x)) };
            let y = unit_direction(&so3, &mut rng) * 2.0;
            let sum = duhamel_series(&so3, &fam, &x, &y, 1.0, 1e-13, Some(&witness))?;
            let angle = so3.coordinates(&x).iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max((sum.value - rodrigues_action(axis, angle, &y)).abs().max());
        }
        rec.upper("duhamel-so3-rotation", anchor_duhamel, trials as usize, worst, 1e-10);
        Ok(())
    });
    rec.guard("duhamel-context", anchor_duhamel, |rec| {
        let witness = constricted_constants(ctx, &fam, "op", &KSample::Ball { radius: 1.0 }, 3, 64, settings.seed)?;
        let mut worst: f64 = 0.0;
        for i in 0..trials {
            let mut rng = rng_stream(settings.seed, stream::DUHAMEL_CTX + i);
            let x = ball_element(ctx, &mut rng, 1.0);
            let y = unit_direction(ctx, &mut rng);
            let sum = duhamel_series(ctx, &fam, &x, &y, 1.0, 1e-13, Some(&witness))?;
            let g = ctx.exp_matrix(&x);
            worst = worst.max(relative_error(&sum.value, &(&g * &y * invert(&g)?)));
        }
        rec.upper("duhamel-context", anchor_duhamel, trials as usize, worst, 1e-10);
        Ok(())
    });
}

fn estimates(ctx: &LieContext, settings: &SuiteSettings, rec: &mut Recorder) {
    let fam = SeminormFamily::standard();
    let anchor_asym = "v(ad_{X₁}∘…∘ad_{Xₙ}(Y)) ≤ w(X₁)⋯w(Xₙ)·w(Y)";
    rec.guard("asymptotic-context", anchor_asym, |rec| {
        let wit = asymptotic_witness(ctx, &fam, "op", 6, CHAIN_SAMPLES, settings.seed)?;
        let c = wit.multiplier.unwrap_or(f64::INFINITY);
        rec.upper("asymptotic-context", anchor_asym, CHAIN_SAMPLES, c, 2f64.powi(crate::estimates::MAX_EXPONENT as i32));
        Ok(())
    });
    rec.guard("asymptotic-gl3", anchor_asym, |rec| {
        let gl3 = LieContext::gl(3);
        let wit = asymptotic_witness(&gl3, &fam, "op", 6, CHAIN_SAMPLES, settings.seed)?;
        rec.upper("asymptotic-gl3", anchor_asym, CHAIN_SAMPLES, wit.multiplier.unwrap_or(f64::INFINITY), 2.0);
        Ok(())
    });
    rec.guard("heisenberg-chains-vanish", "⟦X₁⟧∘⟦X₂⟧(Y) = 0", |rec| {
        let h = LieContext::heisenberg();
        let mut rng = rng_stream(settings.seed, stream::HEISENBERG);
        let mut worst: f64 = 0.0;
        for depth in 2..=6 {
            for _ in 0..CHAIN_SAMPLES {
                let xs: Vec<Matrix> = (0..depth).map(|_| ball_element(&h, &mut rng, 4.0)).collect();
                let y = ball_element(&h, &mut rng, 4.0);
                worst = worst.max(chain(&xs, &y).abs().max());
            }
        }
        rec.upper("heisenberg-chains-vanish", "⟦X₁⟧∘⟦X₂⟧(Y) = 0", 5 * CHAIN_SAMPLES, worst, 0.0);
        Ok(())
    });
    let anchor_bound = "v(Ad_{[∫_r^tφ]⁻¹}(Y)) ≤ exp(|r′−r|·C_v)·w(Y)";
    rec.guard("transport-bound", anchor_bound, |rec| {
        let cfg = stepper(ctx, 128);
        let mut cases = Vec::with_capacity(TRANSPORT_SAMPLES);
        let mut radius: f64 = 0.0;
        for i in 0..TRANSPORT_SAMPLES {
            let mut rng = rng_stream(settings.seed, stream::TRANSPORT + i as u64);
            let phi = smooth_curve(ctx, &mut rng, 0.0, 1.0, 0.3);
            let y = unit_direction(ctx, &mut rng);
            let t: f64 = rand::Rng::random_range(&mut rng, 0.0..=1.0);
            for (s, side) in phi.sample_points(16) {
                radius = radius.max(operator_norm(&phi.eval_sided(s, 0, side)?));
            }
            cases.push((phi, y, t));
        }
        let witness = constricted_constants(ctx, &fam, "op", &KSample::Ball { radius }, 3, 64, settings.seed)?;
        let mut worst: f64 = 0.0;
        for (phi, y, t) in &cases {
            let r = transport_bound_check(ctx, &fam, &witness, phi, std::slice::from_ref(y), &[*t], &cfg)?;
            worst = worst.max(r.max_ratio);
        }
        rec.upper("transport-bound", anchor_bound, TRANSPORT_SAMPLES, worst, 1.0);
        Ok(())
    });
    let anchor_mu = "(u∘Ξ)(Ξ⁻¹(X₁)⋯Ξ⁻¹(Xₙ)) ≤ o(X₁)+…+o(Xₙ)";
    rec.guard("mu-convexity", anchor_mu, |rec| {
        let r = mu_convexity_check(ctx, &fam, "op", &[1, 2, 4, 8], 64, settings.seed)?;
        rec.upper("mu-convexity", anchor_mu, r.samples, r.multiplier.unwrap_or(f64::INFINITY), 2f64.powi(crate::estimates::MAX_EXPONENT as i32));
        Ok(())
    });
    let anchor_cv = "v(ad_{X₁}∘…∘ad_{Xₙ}(Y)) ≤ C_v^n·w(Y), X_i ∈ K";
    rec.guard("witness-consistency", anchor_cv, |rec| {
        let k = KSample::Ball { radius: 1.0 };
        let witness = constricted_constants(ctx, &fam, "op", &k, 3, 64, settings.seed)?;
        let persisted = witness.to_json()?;
        let loaded = EstimateWitness::from_json(&persisted)?;
        let rerun = constricted_constants(ctx, &fam, "op", &k, 3, 64, settings.seed)?;
        let mut mismatches = 0usize;
        mismatches += usize::from(rerun.to_json()? != persisted);
        mismatches += usize::from(loaded.c_v.to_bits() != rerun.c_v.to_bits());
        let mut rng = rng_stream(settings.seed, stream::DUHAMEL_CTX);
        let x = ball_element(ctx, &mut rng, 1.0);
        let y = unit_direction(ctx, &mut rng);
        let a = duhamel_series(ctx, &fam, &x, &y, 0.5, 1e-12, Some(&loaded))?;
        let b = duhamel_series(ctx, &fam, &x, &y, 0.5, 1e-12, Some(&rerun))?;
        mismatches += usize::from(a.remainder_bound.to_bits() != b.remainder_bound.to_bits() || a.terms != b.terms);
        let curves = vec![Curve::constant(0.0, 1.0, x.clone())];
        let cfg = stepper(ctx, 32);
        let ta = tame_check(ctx, &fam, &curves, "op", std::slice::from_ref(&y), 4, Some(&loaded), &cfg)?;
        let tb = tame_check(ctx, &fam, &curves, "op", &[y], 4, Some(&rerun), &cfg)?;
        let expected = (witness.c_v).exp() * witness.w_multiplier;
        mismatches += usize::from(ta.witness_bound.map(f64::to_bits) != tb.witness_bound.map(f64::to_bits));
        mismatches += usize::from(ta.witness_bound.map(f64::to_bits) != Some(expected.to_bits()));
        rec.upper("witness-consistency", anchor_cv, 5, mismatches as f64, 0.0);
        rec.report.witness = Some(witness);
        Ok(())
    });
}

fn composition(ctx: &LieContext, settings: &SuiteSettings, rec: &mut Recorder) {
    let mut fam = SeminormFamily::standard();
    let cfg = stepper(ctx, 256);
    let anchor_chi = "∫χ{φ₁,…,φₙ} = ∫φₙ · … · ∫φ₁";
    for n in [2usize, 3, 4, 8] {
        let id = format!("collapse-n{n}");
        rec.guard(&id, anchor_chi, |rec| {
            let mut rng = rng_stream(settings.seed, stream::COLLAPSE + n as u64);
            let stack = CurveStack::new((0..n).map(|_| random_curve(ctx, &mut rng, 0.5)).collect())?;
            let chi = chi_compose(ctx, &stack, &cfg)?;
            let collapsed = evolve_full(ctx, &chi, &cfg)?;
            let direct = stack.ordered_product(ctx, &cfg)?;
            rec.upper(&id, anchor_chi, n, relative_error(&collapsed, &direct), 1e-7 * n as f64);
            Ok(())
        });
    }
    let anchor_count = "#terms of χ^{(k)} = n·(n+1)⋯(n+k)";
    rec.guard("term-count", anchor_count, |rec| {
        let mut mismatches = 0usize;
        let mut cases = 0usize;
        for n in 1u64..=32 {
            let mut expect: u128 = n as u128;
            for k in 0u64..=8 {
                if k > 0 {
                    expect *= (n + k) as u128;
                }
                cases += 1;
                mismatches += usize::from(term_count(n, k)? != expect);
            }
        }
        rec.upper("term-count", anchor_count, cases, mismatches as f64, 0.0);
        Ok(())
    });
    let anchor_sup = "v^q_∞(χ) ≤ e·(n+1)⋯(n+q)/n^q";
    let multiplier = asymptotic_witness(ctx, &fam, "op", 4, 200, settings.seed).ok().and_then(|w| w.multiplier);
    let w_id = multiplier.and_then(|c| fam.with_multiple("op", c).ok());
    for n in [2usize, 4, 8, 16] {
        for q in 0..=3usize {
            let id = format!("chi-sup-bound-n{n}-q{q}");
            rec.guard(&id, anchor_sup, |rec| {
                let (Some(c), Some(w_id)) = (multiplier, w_id.as_deref()) else {
                    return Err(LabError::Precondition("no certified asymptotic pair for this context".into()));
                };
                let mut rng = rng_stream(settings.seed, stream::STACKS + (n * 4 + q) as u64);
                let stack = CurveStack::new((0..n).map(|_| bounded_trig_curve(ctx, &mut rng, 0.0, 1.0 / n as f64, 1.0 / c)).collect())?;
                let r = chi_sup_bound_check(ctx, &fam, "op", w_id, &stack, q, &cfg)?;
                rec.row(&id, anchor_sup, n, r.measured, r.bound, r.ratio, r.status);
                Ok(())
            });
        }
    }
    rec.guard("chi-sup-bound-precondition", anchor_sup, |rec| {
        let Some(w_id) = w_id.as_deref() else {
            return Err(LabError::Precondition("no certified asymptotic pair for this context".into()));
        };
        let w = fam.get(w_id)?;
        let mut rng = rng_stream(settings.seed, stream::STACKS);
        let x = unit_direction(ctx, &mut rng);
        let x = &x * (2.0 / w.eval(&x));
        let stack = CurveStack::new(vec![Curve::constant(0.0, 0.5, x); 2])?;
        let r = chi_sup_bound_check(ctx, &fam, "op", w_id, &stack, 1, &cfg)?;
        rec.row("chi-sup-bound-precondition", anchor_sup, 2, r.stack_sup, 1.0, r.ratio, r.status);
        Ok(())
    });
    let anchor_fact = "e·(n+1)⋯(n+q)/n^q ↓, < 3e at n = 64";
    rec.guard("factorial-monotone", anchor_fact, |rec| {
        let mut violations = 0usize;
        for q in 1..=3 {
            let seq: Vec<f64> = (2..=64).map(|n| factorial_bound(n, q)).collect();
            violations += seq.windows(2).filter(|w| w[1] >= w[0]).count();
        }
        rec.upper("factorial-monotone", anchor_fact, 3 * 62, violations as f64, 0.0);
        let top = (1..=3).map(|q| factorial_bound(64, q)).fold(0.0, f64::max);
        rec.upper("factorial-limit", anchor_fact, 3, top, 3.0 * std::f64::consts::E);
        Ok(())
    });
    let anchor_pipe = "(p∘Ξ)(∫φ) ≤ exp(v_∞(χ)) − 1";
    rec.guard("continuity-pipeline", anchor_pipe, |rec| {
        let pcfg = PipelineConfig {
            stepper: if nilpotent(ctx) { stepper(ctx, 64) } else { StepperConfig::fixed(Method::CommutatorFree4, 128).without_defect() },
            ..PipelineConfig::standard(&mut fam)?
        };
        let mut worst: f64 = 0.0;
        let mut failed = 0usize;
        let mut last = (f64::NAN, f64::NAN);
        for i in 0..PIPELINE_SAMPLES {
            let mut rng = rng_stream(settings.seed, stream::PIPELINE + i as u64);
            let phi = bounded_trig_curve(ctx, &mut rng, 0.0, 1.0, 0.125);
            let r = continuity_pipeline(ctx, &fam, &phi, &pcfg)?;
            failed += usize::from(!r.passed);
            if let Some(stage) = r.stages.last() {
                if stage.bound > 0.0 && stage.measured / stage.bound >= worst {
                    worst = stage.measured / stage.bound;
                    last = (stage.measured, stage.bound);
                }
            }
        }
        let (measured, bound) = last;
        let ratio = worst;
        rec.row("continuity-pipeline", anchor_pipe, PIPELINE_SAMPLES, measured, bound, ratio, status(failed == 0));
        Ok(())
    });
}

fn confined_rows(rec: &mut Recorder, prefix: &str, r: &ConfinedReport) {
    let anchor_uniform = "sup_t p(φ_n(t) − φ(t)) ≤ L·|r′−r|/n";
    let worst = r.convergence.iter().map(|c| c.sup_distance / c.modulus_bound.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    let worst = if r.convergence.iter().all(|c| c.sup_distance == 0.0) { 0.0 } else { worst };
    rec.upper(&format!("{prefix}-freeze-uniform"), anchor_uniform, r.convergence.len(), worst, 1.0);
    let anchor_mackey = "p(φ_m − φ_n) ≤ C_p·λ_{m,n}";
    let c = r.sequence.constants.iter().map(|c| c.c).fold(0.0, f64::max);
    rec.row(
        &format!("{prefix}-mackey-cauchy"),
        anchor_mackey,
        r.sequence.evidence.len(),
        c,
        f64::NAN,
        f64::NAN,
        status(r.sequence_ok),
    );
    let anchor_tame = "v∘Ad_{[∫_r^•φ_n]⁻¹} ≤ w";
    let bound = r.tame.witness_bound.unwrap_or(f64::NAN);
    rec.row(
        &format!("{prefix}-tame"),
        anchor_tame,
        r.tame.per_curve.len(),
        r.tame.max_ratio,
        bound,
        r.tame.max_ratio / bound,
        status(r.tame_ok),
    );
}

fn approx(ctx: &LieContext, settings: &SuiteSettings, rec: &mut Recorder) {
    let fam = SeminormFamily::standard();
    let cfg = ConfinedConfig::standard(settings.seed);
    rec.guard("context-confined", "φ_n → φ tame Mackey-Cauchy", |rec| {
        let mut rng = rng_stream(settings.seed, stream::APPROX);
        let phi = smooth_curve(ctx, &mut rng, 0.0, 1.0, 0.5);
        let ccfg = ConfinedConfig {
            stepper: stepper(ctx, 256),
            ..cfg.clone()
        };
        let r = confined_pipeline(ctx, &fam, &phi, 64, &ccfg)?;
        confined_rows(rec, "context", &r);
        let approx = crate::approx::freeze_approximate(&phi, 16, ccfg.mode)?;
        let hull = hull_distance(&approx, &phi, &panel_knots(&phi, 16))?;
        rec.upper("context-freeze-hull", "φ_n(t) ∈ conv φ([r, r′])", 16, hull, 1e-12);
        rec.report.evidence.extend(r.sequence.evidence.iter().cloned());
        Ok(())
    });
    rec.guard("so3-confined", "φ_n → φ tame Mackey-Cauchy", |rec| {
        let so3 = LieContext::so3();
        let phi = Curve::closed_form(
            0.0,
            1.0,
            vec![Matrix::zeros(3, 3), so3_generator(0)],
            vec![TrigTerm::sin(2.0 * std::f64::consts::PI, 0.0, so3_generator(2))],
        );
        let r = confined_pipeline(&so3, &fam, &phi, 64, &cfg)?;
        confined_rows(rec, "so3", &r);
        Ok(())
    });
    rec.guard("gl2-confined", "φ_n → φ tame Mackey-Cauchy", |rec| {
        let gl2 = LieContext::gl(2);
        let a = Matrix::from_row_slice(2, 2, &[0.2, -0.5, 0.3, 0.1]);
        let b = Matrix::from_row_slice(2, 2, &[0.0, 0.4, 0.4, -0.2]);
        let phi = Curve::closed_form(0.0, 1.0, vec![Matrix::zeros(2, 2), a], vec![TrigTerm::cos(3.0, 0.0, b)]);
        let r = confined_pipeline(&gl2, &fam, &phi, 64, &cfg)?;
        confined_rows(rec, "gl2", &r);
        Ok(())
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for name in SuiteName::NAMES {
            assert_eq!(name.parse::<SuiteName>().unwrap().as_str(), name);
        }
        assert!("bogus".parse::<SuiteName>().is_err());
        assert_eq!(SuiteName::All.expand().len(), 5);
        assert_eq!("json-lines".parse::<ReportFormat>().unwrap(), ReportFormat::Jsonl);
    }

    #[test]
    fn rodrigues_matches_exponential() {
        let so3 = LieContext::so3();
        let axis = [0.6, 0.0, 0.8];
        let x = so3.from_coordinates(&[0.6 * 0.9, 0.0, 0.8 * 0.9]);
        let y = so3_generator(1);
        let g = so3.exp_matrix(&x);
        let expect = &g * &y * g.transpose();
        assert!((rodrigues_action(axis, 0.9, &y) - expect).abs().max() < 1e-14);
    }

    #[test]
    fn csv_header_is_fixed() {
        let row = CheckRow {
            suite: "composition".into(),
            check_id: "x".into(),
            anchor: "a".into(),
            n: 1,
            measured: 0.5,
            bound: 1.0,
            ratio: 0.5,
            pass: CheckStatus::PreconditionSkipped,
        };
        let mut buf = Vec::new();
        write_rows(&[row.clone()], &mut buf, ReportFormat::Csv).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "suite,check_id,anchor,n,measured,bound,ratio,pass\ncomposition,x,a,1,0.5,1.0,0.5,precondition-skipped\n");
        let mut buf = Vec::new();
        write_rows(&[row], &mut buf, ReportFormat::Jsonl).unwrap();
        assert!(String::from_utf8(buf).unwrap().ends_with("\"pass\":\"precondition-skipped\"}\n"));
    }
}
