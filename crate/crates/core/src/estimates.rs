//! Sample-based certification of the seminorm estimates: ad-chain domination
//! (asymptotic and constricted), the exponential transport bound, local
//! μ-convexity of the chart, and tameness of curve sequences.
//!
//! Every certification is a finite search over seeded samples; failures are
//! returned as data rather than errors.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curve::{matrix_list, Curve};
use crate::error::{LabError, Result};
use crate::evolution::{StepperConfig, Trajectory};
use crate::lie::{commutator, invert, LieContext, Matrix};
use crate::norms::{operator_norm, Seminorm, SeminormFamily};
use crate::sampling::{ball_element, rng_stream, unit_direction};

/// Largest grid exponent searched for multipliers: `c ≤ 2^MAX_EXPONENT`.
pub const MAX_EXPONENT: u32 = 10;
/// Relative slack granted to floating-point ties when rounding to the grid.
pub const TIE_ALLOWANCE: f64 = 1e-12;
/// Resolution of the constricted-constant grid.
pub const CONSTANT_GRID: f64 = 64.0;

/// `ad_{X₁} ∘ … ∘ ad_{Xₙ}(Y)`.
pub fn chain(xs: &[Matrix], y: &Matrix) -> Matrix {
    xs.iter().rev().fold(y.clone(), |acc, x| commutator(x, &acc))
}

/// Smallest `2^k ≥ value` (with `k ≥ 0`), if `k ≤ max_exp`.
fn grid_multiplier(value: f64, max_exp: u32) -> Option<f64> {
    let v = value * (1.0 - TIE_ALLOWANCE);
    (0..=max_exp).map(|k| 2f64.powi(k as i32)).find(|c| *c >= v)
}

/// All tuples of length `len` over `0..k`, in lexicographic order.
fn tuples(k: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..k).map(move |i| {
                    let mut t = t.clone();
                    t.push(i);
                    t
                })
            })
            .collect();
    }
    out
}

/// Required multiplier of one depth level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRecord {
    pub depth: usize,
    pub samples: usize,
    /// `max (v(chain)/(v(X₁)…v(Xₙ)·v(Y)))^{1/(n+1)}` over the samples.
    pub required: f64,
    /// Smallest grid multiplier covering `required`, if any.
    pub multiplier: Option<f64>,
    /// Number of chains that evaluated to exactly zero.
    pub zero_chains: usize,
}

/// A sampled chain that no grid multiplier certifies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainViolation {
    pub depth: usize,
    pub required: f64,
    #[serde(with = "matrix_list")]
    pub operators: Vec<Matrix>,
    #[serde(with = "matrix_list")]
    pub argument: Vec<Matrix>,
}

/// Result of the search for `w = c·v` with
/// `v(ad_{X₁}…ad_{Xₙ}Y) ≤ w(X₁)…w(Xₙ)·w(Y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticWitness {
    pub context: String,
    pub v_id: String,
    /// Certified multiplier `c`, absent if the search failed.
    pub multiplier: Option<f64>,
    pub depth_max: usize,
    pub seed: u64,
    pub per_depth: Vec<DepthRecord>,
    /// Largest `lhs/rhs` at the certified multiplier.
    pub max_slack: f64,
    /// Deepest chain requiring more than `2^MAX_EXPONENT`.
    pub violation: Option<ChainViolation>,
}

impl AsymptoticWitness {
    pub fn certified(&self) -> bool {
        self.multiplier.is_some()
    }
}

/// Searches the grid `c ∈ {1, 2, 4, …, 2^10}` for the asymptotic-estimate inequality.
///
/// Chains are drawn from all basis tuples up to depth 3 and from `samples`
/// random unit-ball tuples per depth. Each depth uses its own random stream, so
/// enlarging `samples` or `depth_max` only adds samples.
pub fn asymptotic_witness(
    ctx: &LieContext,
    fam: &SeminormFamily,
    v_id: &str,
    depth_max: usize,
    samples: usize,
    seed: u64,
) -> Result<AsymptoticWitness> {
    let v = fam.get(v_id)?;
    let basis = ctx.basis();
    let mut per_depth = Vec::new();
    let mut violation: Option<ChainViolation> = None;
    let mut worst_needed: f64 = 0.0;
    let mut ratios: Vec<(usize, f64)> = Vec::new();
    for depth in 1..=depth_max {
        let mut rng = rng_stream(seed, depth as u64);
        let mut cases: Vec<Vec<Matrix>> = Vec::new();
        if depth <= 3 {
            for t in tuples(basis.len(), depth + 1) {
                cases.push(t.iter().map(|i| basis[*i].clone()).collect());
            }
        }
        for _ in 0..samples {
            cases.push((0..=depth).map(|_| ball_element(ctx, &mut rng, 1.0)).collect());
        }
        let (mut required, mut zeros): (f64, usize) = (0.0, 0);
        let mut worst_case: Option<&Vec<Matrix>> = None;
        for case in &cases {
            let (xs, y) = case.split_at(depth);
            let lhs = v.eval(&chain(xs, &y[0]));
            if lhs == 0.0 {
                zeros += 1;
                continue;
            }
            let denom: f64 = case.iter().map(|m| v.eval(m)).product();
            let ratio = lhs / denom;
            ratios.push((depth, ratio));
            let need = ratio.powf(1.0 / (depth + 1) as f64);
            if need > required {
                required = need;
                worst_case = Some(case);
            }
        }
        let multiplier = grid_multiplier(required, MAX_EXPONENT);
        if multiplier.is_none() {
            let case = worst_case.expect("nonzero chain exists");
            violation = Some(ChainViolation {
                depth,
                required,
                operators: case[..depth].to_vec(),
                argument: vec![case[depth].clone()],
            });
        }
        worst_needed = worst_needed.max(required);
        per_depth.push(DepthRecord {
            depth,
            samples: cases.len(),
            required,
            multiplier,
            zero_chains: zeros,
        });
    }
    let multiplier = if violation.is_some() { None } else { grid_multiplier(worst_needed, MAX_EXPONENT) };
    let max_slack = match multiplier {
        Some(c) => ratios.iter().map(|(n, r)| r / c.powi(*n as i32 + 1)).fold(0.0, f64::max),
        None => f64::INFINITY,
    };
    Ok(AsymptoticWitness {
        context: ctx.name().into(),
        v_id: v_id.into(),
        multiplier,
        depth_max,
        seed,
        per_depth,
        max_slack,
        violation,
    })
}

/// The compact set on which a constricted constant is certified.
#[derive(Debug, Clone, PartialEq)]
pub enum KSample {
    /// Operator-norm ball of the given radius intersected with the algebra.
    Ball { radius: f64 },
    /// Explicit nodes; the certified set is their symmetrization `±nodes`.
    Nodes(Vec<Matrix>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KKind {
    Ball,
    Nodes,
}

/// A certified constant `C_v` with `v(ad_{X₁}…ad_{Xₙ}Y) ≤ C_v^n·w(Y)` for
/// `X_i ∈ K`, where `w = w_multiplier·v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateWitness {
    pub context: String,
    pub v_id: String,
    pub w_multiplier: f64,
    pub c_v: f64,
    pub depth: usize,
    pub seed: u64,
    pub k_kind: KKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty", with = "matrix_list")]
    pub k_nodes: Vec<Matrix>,
    pub samples: usize,
    /// Largest `lhs/(C_v^n·w(Y))` over the samples.
    pub max_slack: f64,
    pub certified: bool,
}

impl EstimateWitness {
    pub fn w(&self, fam: &SeminormFamily) -> Result<Seminorm> {
        Ok(fam.get(&self.v_id)?.scaled(self.w_multiplier))
    }

    /// Whether `x` lies in the certified compact set.
    pub fn contains(&self, x: &Matrix) -> bool {
        match self.k_kind {
            KKind::Ball => operator_norm(x) <= self.k_radius.unwrap_or(0.0) * (1.0 + TIE_ALLOWANCE),
            KKind::Nodes => {
                let scale = operator_norm(x).max(1.0);
                self.k_nodes
                    .iter()
                    .any(|n| (n - x).abs().max() <= 1e-12 * scale || (n + x).abs().max() <= 1e-12 * scale)
            }
        }
    }

    /// Errors unless the witness is certified for this context and seminorm
    /// family and `x` lies in its compact set.
    pub fn check_applicable(&self, ctx: &LieContext, fam: &SeminormFamily, x: &Matrix) -> Result<()> {
        if !self.certified {
            return Err(LabError::Precondition("witness is not certified".into()));
        }
        if self.context != ctx.name() {
            return Err(LabError::Precondition(format!(
                "witness certified for context '{}', not '{}'",
                self.context,
                ctx.name()
            )));
        }
        fam.get(&self.v_id)?;
        if !self.contains(x) {
            return Err(LabError::Precondition(format!(
                "element of operator norm {} lies outside the certified set",
                operator_norm(x)
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Operators drawn from `K`: explicit nodes, or for a ball the scaled basis,
/// normalized pairwise sums and differences of basis elements, and random points.
fn k_points(ctx: &LieContext, k: &KSample, samples: usize, seed: u64) -> Vec<Matrix> {
    let mut pts = Vec::new();
    match k {
        KSample::Nodes(nodes) => pts.extend(nodes.iter().cloned()),
        KSample::Ball { radius } => {
            let basis = ctx.basis();
            let mut push = |m: Matrix| {
                let n = operator_norm(&m);
                if n > 0.0 {
                    pts.push(m * (radius / n));
                }
            };
            for (i, b) in basis.iter().enumerate() {
                push(b.clone());
                for c in &basis[i + 1..] {
                    push(b + c);
                    push(b - c);
                }
            }
            let mut rng = rng_stream(seed, 0);
            for _ in 0..samples {
                pts.push(ball_element(ctx, &mut rng, *radius));
            }
        }
    }
    let neg: Vec<Matrix> = pts.iter().map(|m| -m).collect();
    pts.extend(neg);
    pts
}

/// Certifies a constricted constant on `K` with `w = v`.
///
/// `C_v` is the sampled maximum of `(v(chain)/v(Y))^{1/n}` rounded up to the
/// `1/64` grid; it is marked uncertified beyond `2^10`.
pub fn constricted_constants(
    ctx: &LieContext,
    fam: &SeminormFamily,
    v_id: &str,
    k: &KSample,
    depth_max: usize,
    samples: usize,
    seed: u64,
) -> Result<EstimateWitness> {
    let v = fam.get(v_id)?;
    if let KSample::Nodes(nodes) = k {
        for n in nodes {
            ctx.project(n)?;
        }
    }
    let pts = k_points(ctx, k, samples, seed);
    let mut ys: Vec<Matrix> = ctx.basis().to_vec();
    let mut rng = rng_stream(seed, 1);
    for _ in 0..samples {
        ys.push(unit_direction(ctx, &mut rng));
    }
    let mut raw: f64 = 0.0;
    let mut records: Vec<(usize, f64)> = Vec::new();
    let mut count = 0;
    for depth in 1..=depth_max {
        let mut rng = rng_stream(seed, 100 + depth as u64);
        let exhaustive = (pts.len() as f64).powi(depth as i32) <= 4096.0;
        let operator_sets: Vec<Vec<Matrix>> = if pts.is_empty() {
            Vec::new()
        } else if exhaustive {
            tuples(pts.len(), depth).into_iter().map(|t| t.iter().map(|i| pts[*i].clone()).collect()).collect()
        } else {
            (0..samples.max(1))
                .map(|_| (0..depth).map(|_| pts[rng.random_range(0..pts.len())].clone()).collect())
                .collect()
        };
        for xs in &operator_sets {
            for y in &ys {
                count += 1;
                let wy = v.eval(y);
                if wy == 0.0 {
                    continue;
                }
                let ratio = v.eval(&chain(xs, y)) / wy;
                records.push((depth, ratio));
                raw = raw.max(ratio.powf(1.0 / depth as f64));
            }
        }
    }
    let c_v = (raw * (1.0 - TIE_ALLOWANCE) * CONSTANT_GRID).ceil() / CONSTANT_GRID;
    let certified = c_v <= 2f64.powi(MAX_EXPONENT as i32);
    let max_slack = records
        .iter()
        .map(|(n, r)| if *r == 0.0 { 0.0 } else { r / c_v.powi(*n as i32) })
        .fold(0.0, f64::max);
    let (k_kind, k_radius, k_nodes) = match k {
        KSample::Ball { radius } => (KKind::Ball, Some(*radius), Vec::new()),
        KSample::Nodes(nodes) => (KKind::Nodes, None, nodes.clone()),
    };
    Ok(EstimateWitness {
        context: ctx.name().into(),
        v_id: v_id.into(),
        w_multiplier: 1.0,
        c_v,
        depth: depth_max,
        seed,
        k_kind,
        k_radius,
        k_nodes,
        samples: count,
        max_slack,
        certified,
    })
}

/// Outcome of a sampled inequality `measured ≤ bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub samples: usize,
    pub max_ratio: f64,
    pub bound_factor: f64,
    pub passed: bool,
}

/// Checks `v(Ad_{[∫_r^t φ]⁻¹}(Y)) ≤ exp(|r′−r|·C_v)·w(Y)` on the sampled `t` and `Y`.
///
/// The sampled image of `φ` must lie in the witness's compact set.
pub fn transport_bound_check(
    ctx: &LieContext,
    fam: &SeminormFamily,
    witness: &EstimateWitness,
    phi: &Curve,
    ys: &[Matrix],
    ts: &[f64],
    cfg: &StepperConfig,
) -> Result<BoundReport> {
    for (t, side) in phi.sample_points(16) {
        witness.check_applicable(ctx, fam, &phi.eval_sided(t, 0, side)?)?;
    }
    let v = fam.get(&witness.v_id)?;
    let w = witness.w(fam)?;
    let factor = (phi.len() * witness.c_v).exp();
    let traj = Trajectory::over(ctx, phi, cfg)?;
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for &t in ts {
        let mu = traj.at(t)?;
        let inv = invert(&mu)?;
        for y in ys {
            let wy = w.eval(y);
            if wy == 0.0 {
                continue;
            }
            n += 1;
            worst = worst.max(v.eval(&(&inv * y * &mu)) / (factor * wy));
        }
    }
    Ok(BoundReport {
        samples: n,
        max_ratio: worst,
        bound_factor: factor,
        passed: worst <= 1.0,
    })
}

/// Result of the search for `o = c·u` making the chart locally μ-convex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuConvexityReport {
    pub u_id: String,
    /// Identifier of the certified `o`, absent if no grid multiplier works.
    pub o_id: Option<String>,
    pub multiplier: Option<f64>,
    pub word_lengths: Vec<usize>,
    pub samples: usize,
    /// `max (u∘Ξ)(product)/Σ o(X_i)` at the certified multiplier.
    pub max_ratio: f64,
    /// Number of words shrunk to stay inside the chart domain.
    pub shrink_events: usize,
}

fn word_ratio(ctx: &LieContext, u: &Seminorm, xs: &[Matrix]) -> Result<f64> {
    let mut g = ctx.identity();
    for x in xs {
        g *= ctx.chart_inverse(x)?;
    }
    let y = ctx.chart(&g)?;
    let denom: f64 = xs.iter().map(|x| u.eval(x)).sum();
    Ok(if denom == 0.0 { 0.0 } else { u.eval(&y) / denom })
}

/// Searches `o = c·u` over `c ∈ {1, 2, …, 2^10}` for
/// `(u∘Ξ)(Ξ⁻¹(X₁)…Ξ⁻¹(Xₙ)) ≤ o(X₁)+…+o(Xₙ)` on words with `Σ o(X_i) ≤ 1`.
///
/// Factors are `X_i = exp(Z_i) − 1` for random algebra elements `Z_i`, so every
/// `Ξ⁻¹(X_i)` lies in the group. Each word is scaled so that `Σ o(X_i)` hits a
/// sampled budget in `(0, 1]`; words leaving the chart are halved and logged.
pub fn mu_convexity_check(
    ctx: &LieContext,
    fam: &SeminormFamily,
    u_id: &str,
    word_lengths: &[usize],
    budget_samples: usize,
    seed: u64,
) -> Result<MuConvexityReport> {
    let u = fam.get(u_id)?.clone();
    let mut shrink_events = 0;
    let mut samples = 0;
    for k in 0..=MAX_EXPONENT {
        let c = 2f64.powi(k as i32);
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for &n in word_lengths {
            let mut rng = rng_stream(seed, n as u64);
            for s in 0..budget_samples {
                let zs: Vec<Matrix> = (0..n)
                    .map(|_| unit_direction(ctx, &mut rng) * rng.random_range(0.05..1.0))
                    .collect();
                let budget = if s % 2 == 0 { 1.0 } else { rng.random_range(0.0..1.0f64).max(1e-3) };
                let factors = |lambda: f64| -> Vec<Matrix> {
                    zs.iter().map(|z| ctx.exp_matrix(&(z * lambda)) - ctx.identity()).collect()
                };
                let total = |xs: &[Matrix]| -> f64 { xs.iter().map(|x| c * u.eval(x)).sum() };
                // bisection on the scale of the Z's so that Σ o(X_i) = budget
                let (mut lo, mut hi) = (0.0, 1.0);
                while total(&factors(hi)) < budget && hi < 1e6 {
                    hi *= 2.0;
                }
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if total(&factors(mid)) > budget {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let mut lambda = lo;
                let ratio = loop {
                    match word_ratio(ctx, &u, &factors(lambda)) {
                        Ok(r) => break r,
                        Err(LabError::ChartDomain { .. }) if lambda > 1e-12 => {
                            shrink_events += 1;
                            lambda *= 0.5;
                        }
                        Err(e) => return Err(e),
                    }
                };
                worst = worst.max(ratio / c);
                count += 1;
            }
        }
        samples += count;
        if worst <= 1.0 + TIE_ALLOWANCE {
            return Ok(MuConvexityReport {
                u_id: u_id.into(),
                o_id: Some(u.scaled(c).id),
                multiplier: Some(c),
                word_lengths: word_lengths.to_vec(),
                samples,
                max_ratio: worst,
                shrink_events,
            });
        }
    }
    Ok(MuConvexityReport {
        u_id: u_id.into(),
        o_id: None,
        multiplier: None,
        word_lengths: word_lengths.to_vec(),
        samples,
        max_ratio: f64::INFINITY,
        shrink_events,
    })
}

/// Result of certifying `v∘Ad_{[∫_r^•φ_n]⁻¹} ≤ w` uniformly in `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TameReport {
    pub v_id: String,
    /// `max_{t,Y} v(Ad⁻¹ Y)/v(Y)` for each curve of the sequence.
    pub per_curve: Vec<f64>,
    pub max_ratio: f64,
    /// Smallest `2^k ≥ max_ratio`, absent beyond `2^20`.
    pub multiplier: Option<f64>,
    /// `exp(|r′−r|·C_v)·w_multiplier` from a constricted witness, if one was supplied.
    pub witness_bound: Option<f64>,
    pub certified: bool,
}

/// Largest multiplier accepted by [`tame_check`].
pub const TAME_MAX_EXPONENT: u32 = 20;

/// Finds a single `w = c·v` with `v(Ad_{[∫_r^tφ_n]⁻¹}(Y)) ≤ w(Y)` for every
/// curve, sampled `t` and `Y`. With a witness the sequence must in addition
/// stay below `exp(|r′−r|·C_v)·w`.
#[allow(clippy::too_many_arguments)]
pub fn tame_check(
    ctx: &LieContext,
    fam: &SeminormFamily,
    curves: &[Curve],
    v_id: &str,
    ys: &[Matrix],
    times_per_curve: usize,
    witness: Option<&EstimateWitness>,
    cfg: &StepperConfig,
) -> Result<TameReport> {
    let v = fam.get(v_id)?;
    let mut per_curve = Vec::with_capacity(curves.len());
    for phi in curves {
        let traj = Trajectory::over(ctx, phi, cfg)?;
        let mut worst: f64 = 0.0;
        for i in 0..=times_per_curve {
            let t = phi.start() + phi.len() * i as f64 / times_per_curve.max(1) as f64;
            let mu = traj.at(t)?;
            let inv = invert(&mu)?;
            for y in ys {
                let vy = v.eval(y);
                if vy > 0.0 {
                    worst = worst.max(v.eval(&(&inv * y * &mu)) / vy);
                }
            }
        }
        per_curve.push(worst);
    }
    let max_ratio = per_curve.iter().copied().fold(0.0, f64::max);
    let multiplier = grid_multiplier(max_ratio, TAME_MAX_EXPONENT);
    let witness_bound = match witness {
        Some(wit) => {
            let len = curves.iter().map(Curve::len).fold(0.0, f64::max);
            Some((len * wit.c_v).exp() * wit.w_multiplier)
        }
        None => None,
    };
    let certified = multiplier.is_some() && witness_bound.is_none_or(|b| max_ratio <= b * (1.0 + TIE_ALLOWANCE));
    Ok(TameReport {
        v_id: v_id.into(),
        per_curve,
        max_ratio,
        multiplier,
        witness_bound,
        certified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::Method;
    use crate::lie::{so3_generator, unit};

    fn fam() -> SeminormFamily {
        SeminormFamily::standard()
    }

    #[test]
    fn heisenberg_witness() {
        let ctx = LieContext::heisenberg();
        let w = asymptotic_witness(&ctx, &fam(), "op", 4, 200, 1).unwrap();
        for rec in &w.per_depth[1..] {
            assert_eq!(rec.required, 0.0);
            assert_eq!(rec.zero_chains, rec.samples);
            assert_eq!(rec.multiplier, Some(1.0));
        }
        assert_eq!(w.multiplier, Some(2.0));
        assert!(w.max_slack <= 1.0);
        let x = unit(3, 0, 1) + unit(3, 1, 2);
        let y = unit(3, 0, 1) - unit(3, 1, 2);
        assert_eq!(operator_norm(&commutator(&x, &y)), 2.0);
    }

    #[test]
    fn gl3_certifies_at_two() {
        let ctx = LieContext::gl(3);
        let w = asymptotic_witness(&ctx, &fam(), "op", 6, 300, 5).unwrap();
        assert_eq!(w.multiplier, Some(2.0));
        assert!(w.max_slack <= 1.0);
        assert!(w.violation.is_none());
    }

    #[test]
    fn rescaled_norm_moves_required_multiplier() {
        let ctx = LieContext::gl(3);
        let mut f = fam();
        let lambda = 4.0;
        f.push(f.get("op").unwrap().scaled(lambda));
        let base = asymptotic_witness(&ctx, &f, "op", 4, 100, 9).unwrap();
        let scaled = asymptotic_witness(&ctx, &f, "4*op", 4, 100, 9).unwrap();
        for (a, b) in base.per_depth.iter().zip(&scaled.per_depth) {
            let n = a.depth as f64;
            let expected = a.required * lambda.powf(-n / (n + 1.0));
            assert!((b.required - expected).abs() <= 1e-12 * expected);
        }
        assert_eq!(base.multiplier, Some(2.0));
        assert_ne!(scaled.multiplier, base.multiplier);
    }

    #[test]
    fn abelian_witness_is_one() {
        let ctx = LieContext::diag2();
        let w = asymptotic_witness(&ctx, &fam(), "fro", 3, 50, 2).unwrap();
        assert_eq!(w.multiplier, Some(1.0));
        assert!(w.per_depth.iter().all(|r| r.required == 0.0));
    }

    #[test]
    fn failure_is_reported() {
        let ctx = LieContext::gl(2);
        let mut f = SeminormFamily::new();
        f.push(Seminorm::new("tiny", crate::norms::NormKind::Operator, 1e-9));
        let w = asymptotic_witness(&ctx, &f, "tiny", 2, 20, 3).unwrap();
        assert!(w.multiplier.is_none());
        let viol = w.violation.unwrap();
        assert_eq!(viol.depth, 2);
        assert!(viol.required > 1024.0);
    }

    #[test]
    fn constricted_examples() {
        let f = fam();
        let so3 = LieContext::so3();
        let zero = constricted_constants(&so3, &f, "op", &KSample::Nodes(vec![so3.zero()]), 4, 20, 1).unwrap();
        assert_eq!(zero.c_v, 0.0);
        assert!(zero.certified);
        let ball = constricted_constants(&so3, &f, "op", &KSample::Ball { radius: 1.0 }, 3, 50, 1).unwrap();
        assert_eq!(ball.c_v, 1.0);
        assert!(ball.max_slack <= 1.0);
        let gl2 = LieContext::gl(2);
        let nodes = KSample::Nodes(vec![unit(2, 0, 0), unit(2, 0, 1)]);
        let w = constricted_constants(&gl2, &f, "op", &nodes, 6, 50, 1).unwrap();
        assert!(w.c_v <= 2.0 && w.c_v > 1.0, "{}", w.c_v);
        assert!(w.max_slack <= 1.0);
    }

    #[test]
    fn witness_file_round_trip() {
        let so3 = LieContext::so3();
        let w = constricted_constants(&so3, &fam(), "op", &KSample::Ball { radius: 0.5 }, 2, 10, 9).unwrap();
        let text = w.to_json().unwrap();
        let back = EstimateWitness::from_json(&text).unwrap();
        assert_eq!(back, w);
        assert!(!text.contains("k_nodes"));
        assert!(back.check_applicable(&so3, &fam(), &(so3_generator(0) * 0.5)).is_ok());
        assert!(back.check_applicable(&so3, &fam(), &(so3_generator(0) * 0.6)).is_err());
        assert!(back.check_applicable(&LieContext::gl(3), &fam(), &so3.zero()).is_err());
    }

    #[test]
    fn transport_bound_examples() {
        let so3 = LieContext::so3();
        let f = fam();
        let w = constricted_constants(&so3, &f, "op", &KSample::Ball { radius: 1.0 }, 3, 50, 1).unwrap();
        let ys = vec![so3_generator(0), so3_generator(1) + so3_generator(2)];
        let cfg = StepperConfig::fixed(Method::CommutatorFree4, 128).without_defect();
        let zero = Curve::zero(0.0, 1.0, 3);
        let r = transport_bound_check(&so3, &f, &w, &zero, &ys, &[0.0, 0.5, 1.0], &cfg).unwrap();
        assert!(r.passed && (r.max_ratio - (-1f64).exp()).abs() < 1e-12);
        let phi = Curve::polynomial(0.0, 1.0, vec![so3_generator(2) * 0.5, so3_generator(0) * 0.4]);
        let r = transport_bound_check(&so3, &f, &w, &phi, &ys, &[0.3, 1.0], &cfg).unwrap();
        assert!(r.passed);
        let big = Curve::constant(0.0, 1.0, so3_generator(2) * 2.0);
        let err = transport_bound_check(&so3, &f, &w, &big, &ys, &[1.0], &cfg).unwrap_err();
        assert!(matches!(err, LabError::Precondition(_)));
    }

    #[test]
    fn mu_convexity_examples() {
        let f = fam();
        let diag = LieContext::diag2();
        let single = mu_convexity_check(&diag, &f, "op", &[1], 20, 3).unwrap();
        assert_eq!(single.multiplier, Some(1.0));
        let pairs = mu_convexity_check(&diag, &f, "op", &[1, 2, 4], 40, 3).unwrap();
        assert_eq!(pairs.multiplier, Some(2.0));
        assert!(pairs.max_ratio <= 1.0 + TIE_ALLOWANCE);
    }

    #[test]
    fn tame_examples() {
        let f = fam();
        let gl2 = LieContext::gl(2);
        let cfg = StepperConfig::fixed(Method::CommutatorFree4, 64).without_defect();
        let ys: Vec<Matrix> = gl2.basis().to_vec();
        let zeros: Vec<Curve> = (0..4).map(|_| Curve::zero(0.0, 1.0, 2)).collect();
        let r = tame_check(&gl2, &f, &zeros, "op", &ys, 4, None, &cfg).unwrap();
        assert_eq!(r.multiplier, Some(1.0));
        assert!(r.certified);
        let h = unit(2, 0, 0) - unit(2, 1, 1);
        let blow: Vec<Curve> = (1..=16).map(|n| Curve::constant(0.0, 1.0, &h * n as f64)).collect();
        let r = tame_check(&gl2, &f, &blow, "op", &ys, 4, None, &cfg).unwrap();
        assert!(!r.certified);
        assert!(r.per_curve.windows(2).all(|w| w[1] > w[0]));
    }
}
