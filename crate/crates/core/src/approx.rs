//! Piecewise approximation of curves and certification of Cauchy,
//! Mackey-Cauchy and tame approximating sequences.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::curve::{Curve, Side};
use crate::error::{LabError, Result};
use crate::estimates::{constricted_constants, tame_check, EstimateWitness, KSample, TameReport};
use crate::evolution::StepperConfig;
use crate::lie::{invert, LieContext, Matrix};
use crate::norms::{operator_norm, Seminorm, SeminormFamily};

/// How each panel of a freeze approximation is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreezeMode {
    /// The value `φ(t_{n,p})` held constant.
    Hold,
    /// `τ ↦ ω̃(τ·X, X) = X·(1 + τX)` with `X = φ(t_{n,p})` and `τ = t − t_{n,p}`.
    ChartTransport,
}

/// Panel knots `t_{n,p} = r + p/n·|r′−r|`.
pub fn panel_knots(phi: &Curve, n: usize) -> Vec<f64> {
    let (r, r2) = phi.interval();
    (0..=n).map(|p| if p == n { r2 } else { r + p as f64 / n as f64 * (r2 - r) }).collect()
}

/// Piecewise smooth approximation of `φ` on `n` uniform panels, frozen at the
/// left node of each panel.
pub fn freeze_approximate(phi: &Curve, n: usize, mode: FreezeMode) -> Result<Curve> {
    if n == 0 {
        return Err(LabError::Argument("freeze approximation needs n ≥ 1".into()));
    }
    let knots = panel_knots(phi, n);
    let values: Vec<Matrix> = knots[..n].iter().map(|t| phi.eval_sided(*t, 0, Side::Right)).collect::<Result<_>>()?;
    match mode {
        FreezeMode::Hold => Curve::piecewise_constant(knots, values),
        FreezeMode::ChartTransport => {
            let pieces = values
                .iter()
                .enumerate()
                .map(|(p, x)| {
                    let x2 = x * x;
                    Curve::polynomial(knots[p], knots[p + 1], vec![x - &x2 * knots[p], x2])
                })
                .collect();
            Curve::piecewise(knots, pieces)
        }
    }
}

/// Sampled `sup_t norm(γ(t) − φ(t))`, including one-sided values at every knot of either curve.
pub fn sup_distance(gamma: &Curve, phi: &Curve, per_segment: usize, norm: &Seminorm) -> Result<f64> {
    if gamma.interval() != phi.interval() {
        return Err(LabError::Argument("curves live on different intervals".into()));
    }
    let mut knots = gamma.knots();
    knots.extend(phi.knots());
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut worst: f64 = 0.0;
    for w in knots.windows(2) {
        let mut pts = vec![(w[0], Side::Right)];
        pts.extend((1..=per_segment).map(|i| (w[0] + (w[1] - w[0]) * i as f64 / (per_segment + 1) as f64, Side::Right)));
        pts.push((w[1], Side::Left));
        for (t, side) in pts {
            let d = gamma.eval_sided(t, 0, side)? - phi.eval_sided(t, 0, side)?;
            worst = worst.max(norm.eval(&d));
        }
    }
    Ok(worst)
}

/// Largest distance from a sampled point of `gamma` to the nearest sampled
/// point of `phi` (an upper bound for the distance to the convex hull).
pub fn hull_distance(gamma: &Curve, phi: &Curve, extra_times: &[f64]) -> Result<f64> {
    let mut nodes: Vec<Matrix> = phi
        .sample_points(64)
        .into_iter()
        .map(|(t, s)| phi.eval_sided(t, 0, s))
        .collect::<Result<_>>()?;
    for t in extra_times {
        nodes.push(phi.eval_sided(*t, 0, Side::Right)?);
        nodes.push(phi.eval_sided(*t, 0, Side::Left)?);
    }
    let mut worst: f64 = 0.0;
    for (t, s) in gamma.sample_points(8) {
        let g = gamma.eval_sided(t, 0, s)?;
        let d = nodes.iter().map(|n| operator_norm(&(&g - n))).fold(f64::INFINITY, f64::min);
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Rate `λ_{m,n}` of a Mackey-Cauchy certificate, evaluated at the labels `m, n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Envelope {
    /// `2^{−min(m,n)}`.
    Dyadic,
    /// `1/min(m,n)`.
    Harmonic,
}

impl Envelope {
    pub fn eval(self, m: usize, n: usize) -> f64 {
        let k = m.min(n) as f64;
        match self {
            Envelope::Dyadic => 2f64.powf(-k),
            Envelope::Harmonic => 1.0 / k,
        }
    }
}

/// Members of a sequence: curves (sup distance) or group elements (chart distance `Ξ(g_m⁻¹g_n)`).
#[derive(Debug, Clone)]
pub enum SequenceItems<'a> {
    Curves(&'a [Curve]),
    Group(&'a [Matrix]),
}

impl SequenceItems<'_> {
    fn len(&self) -> usize {
        match self {
            SequenceItems::Curves(c) => c.len(),
            SequenceItems::Group(g) => g.len(),
        }
    }

    fn distance(&self, i: usize, j: usize, norm: &Seminorm) -> Result<f64> {
        match self {
            SequenceItems::Curves(c) => sup_distance(&c[i], &c[j], 16, norm),
            SequenceItems::Group(g) => {
                let d = g[i].nrows();
                Ok(norm.eval(&(invert(&g[i])? * &g[j] - Matrix::identity(d, d))))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceKind {
    Cauchy,
    MackeyCauchy,
    Neither,
}

/// One measured pair of the evidence grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRow {
    pub m: usize,
    pub n: usize,
    pub seminorm: String,
    pub distance: f64,
    pub envelope: f64,
}

/// Fitted `C_p` with start index `N_p` of a Mackey-Cauchy certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MackeyConstant {
    pub seminorm: String,
    pub c: f64,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub kind: SequenceKind,
    pub envelope: Envelope,
    pub constants: Vec<MackeyConstant>,
    pub evidence: Vec<EvidenceRow>,
}

impl SequenceReport {
    /// Re-checks `distance ≤ C_p·λ_{m,n}` on every evidence row.
    pub fn envelope_dominates(&self) -> bool {
        self.evidence.iter().all(|row| {
            let c = self.constants.iter().find(|c| c.seminorm == row.seminorm).map_or(f64::INFINITY, |c| c.c);
            row.distance <= c * row.envelope
        })
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.evidence {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Classifies a sequence from its pairwise distances on the triangular grid.
///
/// With `D_k = max_{i,j ≥ k} d(i, j)` over positions, the sequence counts as
/// Cauchy when `D_1 = 0` or the distance `D_{N−1}` of the last two members is
/// at most half of `D_1`. It is Mackey-Cauchy when it is Cauchy and the constant
/// `C_p = max d(m,n)/λ_{m,n}` fitted on all pairs is at most twice the one
/// fitted on the pairs with an index in the first half. `labels` are the
/// indices `n` passed to the envelope.
pub fn classify_sequence(
    items: SequenceItems<'_>,
    labels: &[usize],
    fam: &SeminormFamily,
    seminorms: &[&str],
    envelope: Envelope,
) -> Result<SequenceReport> {
    let n = items.len();
    if n == 0 {
        return Err(LabError::Argument("empty sequence".into()));
    }
    if labels.len() != n || labels.contains(&0) {
        return Err(LabError::Argument("need one positive label per sequence member".into()));
    }
    let mut evidence = Vec::new();
    let mut constants = Vec::new();
    let mut cauchy = true;
    let mut mackey = true;
    for id in seminorms {
        let norm = fam.get(id)?;
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let dist = items.distance(i, j, norm)?;
                d[i][j] = dist;
                d[j][i] = dist;
                evidence.push(EvidenceRow {
                    m: labels[i],
                    n: labels[j],
                    seminorm: (*id).into(),
                    distance: dist,
                    envelope: envelope.eval(labels[i], labels[j]),
                });
            }
        }
        let diameter = |k: usize| -> f64 {
            let mut worst: f64 = 0.0;
            for (i, row) in d.iter().enumerate().skip(k) {
                for v in row.iter().skip(i + 1) {
                    worst = worst.max(*v);
                }
            }
            worst
        };
        let d1 = diameter(0);
        let tail = diameter(n.saturating_sub(2));
        let is_cauchy = d1 == 0.0 || tail <= 0.5 * d1;
        let fit = |limit: usize| -> f64 {
            let mut c: f64 = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    if i < limit {
                        c = c.max(d[i][j] / envelope.eval(labels[i], labels[j]));
                    }
                }
            }
            c
        };
        let c_all = fit(n);
        let c_head = fit(n.div_ceil(2));
        cauchy &= is_cauchy;
        mackey &= is_cauchy && c_all <= 2.0 * c_head;
        constants.push(MackeyConstant {
            seminorm: (*id).into(),
            c: c_all,
            start: labels[0],
        });
    }
    let kind = if mackey {
        SequenceKind::MackeyCauchy
    } else if cauchy {
        SequenceKind::Cauchy
    } else {
        SequenceKind::Neither
    };
    Ok(SequenceReport {
        kind,
        envelope,
        constants,
        evidence,
    })
}

/// Sampled Lipschitz constant of `φ`: `sup‖φ̇‖` when available, else the
/// largest difference quotient on a fine grid.
pub fn lipschitz_constant(phi: &Curve, norm: &Seminorm) -> Result<f64> {
    if phi.order().allows(1) {
        return phi.sup_norm(1, 64, |m| norm.eval(m));
    }
    let pts = phi.sample_points(256);
    let mut worst: f64 = 0.0;
    for w in pts.windows(2) {
        let dt = w[1].0 - w[0].0;
        if dt > 0.0 {
            let d = phi.eval_sided(w[1].0, 0, Side::Left)? - phi.eval_sided(w[0].0, 0, Side::Right)?;
            worst = worst.max(norm.eval(&d) / dt);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub sup_distance: f64,
    pub modulus_bound: f64,
    pub hull_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfinedReport {
    pub lipschitz: f64,
    pub convergence: Vec<ConvergenceRow>,
    pub uniform_ok: bool,
    pub sequence: SequenceReport,
    pub sequence_ok: bool,
    pub witness: EstimateWitness,
    pub tame: TameReport,
    /// `exp(|r′−r|·C_v)` from the witness.
    pub tame_constant: f64,
    pub tame_ok: bool,
}

impl ConfinedReport {
    pub fn passed(&self) -> bool {
        self.uniform_ok && self.sequence_ok && self.tame_ok
    }
}

/// Settings of [`confined_pipeline`].
#[derive(Debug, Clone)]
pub struct ConfinedConfig {
    pub p_id: String,
    pub mode: FreezeMode,
    pub depth: usize,
    pub samples: usize,
    pub seed: u64,
    pub stepper: StepperConfig,
}

impl ConfinedConfig {
    pub fn standard(seed: u64) -> Self {
        ConfinedConfig {
            p_id: "op".into(),
            mode: FreezeMode::Hold,
            depth: 3,
            samples: 64,
            seed,
            stepper: StepperConfig::fixed(crate::evolution::Method::CommutatorFree4, 256).without_defect(),
        }
    }
}

/// Builds the freeze approximations `φ_n` for `n = 1, 2, 4, …, n_max` and certifies
/// (i) uniform convergence against the modulus bound `L·|r′−r|/n`, (ii) the Cauchy
/// property, Mackey-Cauchy with the `1/min(m,n)` envelope when `φ` is `C¹`, and
/// (iii) tameness with a single constricted witness on the ball containing every
/// sampled value of `φ` and the approximations.
pub fn confined_pipeline(ctx: &LieContext, fam: &SeminormFamily, phi: &Curve, n_max: usize, cfg: &ConfinedConfig) -> Result<ConfinedReport> {
    let p = fam.get(&cfg.p_id)?;
    let ns: Vec<usize> = std::iter::successors(Some(1usize), |n| Some(n * 2)).take_while(|n| *n <= n_max.max(1)).collect();
    let lip = lipschitz_constant(phi, p)?;
    let len = phi.len();
    let radius_phi = phi.sup_norm(0, 64, |m| p.eval(m))?;
    let mut approximations = Vec::with_capacity(ns.len());
    let mut convergence = Vec::with_capacity(ns.len());
    let mut uniform_ok = true;
    for &n in &ns {
        let approx = freeze_approximate(phi, n, cfg.mode)?;
        let dist = sup_distance(&approx, phi, 16, p)?;
        let bound = match cfg.mode {
            FreezeMode::Hold => lip * len / n as f64,
            FreezeMode::ChartTransport => (lip + radius_phi * radius_phi) * len / n as f64,
        };
        let hull = hull_distance(&approx, phi, &panel_knots(phi, n))?;
        uniform_ok &= dist <= bound * (1.0 + 1e-12) + 1e-15;
        convergence.push(ConvergenceRow {
            n,
            sup_distance: dist,
            modulus_bound: bound,
            hull_distance: hull,
        });
        approximations.push(approx);
    }
    let envelope = if phi.order().allows(1) { Envelope::Harmonic } else { Envelope::Dyadic };
    let sequence = classify_sequence(SequenceItems::Curves(&approximations), &ns, fam, &[&cfg.p_id], envelope)?;
    let sequence_ok = match envelope {
        Envelope::Harmonic => sequence.kind == SequenceKind::MackeyCauchy && sequence.envelope_dominates(),
        Envelope::Dyadic => sequence.kind != SequenceKind::Neither,
    };
    let mut radius: f64 = phi.sup_norm(0, 64, operator_norm)?;
    for a in &approximations {
        radius = radius.max(a.sup_norm(0, 8, operator_norm)?);
    }
    let witness = constricted_constants(ctx, fam, &cfg.p_id, &KSample::Ball { radius }, cfg.depth, cfg.samples, cfg.seed)?;
    let mut ys: Vec<Matrix> = ctx.basis().to_vec();
    let mut rng = crate::sampling::rng_stream(cfg.seed, 7);
    for _ in 0..8 {
        ys.push(crate::sampling::unit_direction(ctx, &mut rng));
    }
    let tame = tame_check(ctx, fam, &approximations, &cfg.p_id, &ys, 16, Some(&witness), &cfg.stepper)?;
    let tame_constant = (len * witness.c_v).exp();
    let tame_ok = witness.certified && tame.certified;
    Ok(ConfinedReport {
        lipschitz: lip,
        convergence,
        uniform_ok,
        sequence,
        sequence_ok,
        witness,
        tame,
        tame_constant,
        tame_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::TrigTerm;
    use crate::lie::{so3_generator, unit};
    use std::f64::consts::PI;

    fn op() -> Seminorm {
        Seminorm::new("op", crate::norms::NormKind::Operator, 1.0)
    }

    #[test]
    fn freeze_examples() {
        let x = unit(2, 0, 1) * 3.0;
        let c = Curve::constant(0.0, 1.0, x.clone());
        for n in [1, 3, 8] {
            let f = freeze_approximate(&c, n, FreezeMode::Hold).unwrap();
            assert_eq!(sup_distance(&f, &c, 8, &op()).unwrap(), 0.0);
        }
        let lin = Curve::polynomial(0.0, 1.0, vec![Matrix::zeros(2, 2), x.clone()]);
        for n in [2, 4, 10] {
            let f = freeze_approximate(&lin, n, FreezeMode::Hold).unwrap();
            let d = sup_distance(&f, &lin, 8, &op()).unwrap();
            assert!((d - 3.0 / n as f64).abs() < 1e-12, "{d}");
        }
        let s = Curve::trig(0.0, 1.0, vec![TrigTerm::sin(2.0 * PI, 0.0, x.clone())]);
        let f = freeze_approximate(&s, 16, FreezeMode::Hold).unwrap();
        assert!(sup_distance(&f, &s, 32, &op()).unwrap() <= 2.0 * PI * 3.0 / 16.0);
        assert!(hull_distance(&f, &s, &panel_knots(&s, 16)).unwrap() <= 1e-12);
    }

    #[test]
    fn chart_transport_freeze() {
        let x = so3_generator(2) * 0.3;
        let c = Curve::constant(0.0, 1.0, x.clone());
        let f = freeze_approximate(&c, 4, FreezeMode::ChartTransport).unwrap();
        let tau = 0.1;
        let expect = &x * (Matrix::identity(3, 3) + &x * tau);
        assert!((f.eval(0.25 + tau, 0).unwrap() - expect).abs().max() < 1e-15);
        assert_eq!(f.eval(0.5, 0).unwrap(), x);
    }

    #[test]
    fn classify_examples() {
        let fam = SeminormFamily::standard();
        let x = unit(2, 0, 1);
        let same: Vec<Curve> = (0..5).map(|_| Curve::constant(0.0, 1.0, x.clone())).collect();
        let labels: Vec<usize> = (1..=5).collect();
        let r = classify_sequence(SequenceItems::Curves(&same), &labels, &fam, &["op"], Envelope::Dyadic).unwrap();
        assert_eq!(r.kind, SequenceKind::MackeyCauchy);
        assert_eq!(r.constants[0].c, 0.0);
        let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
        let labels: Vec<usize> = (1..=8).collect();
        let perturbed: Vec<Curve> = labels.iter().map(|n| Curve::constant(0.0, 1.0, &x * (1.0 + 1.0 / fact(*n)))).collect();
        let r = classify_sequence(SequenceItems::Curves(&perturbed), &labels, &fam, &["op"], Envelope::Dyadic).unwrap();
        assert_eq!(r.kind, SequenceKind::MackeyCauchy);
        assert!(r.envelope_dominates());
        let alt: Vec<Curve> = labels.iter().map(|n| Curve::constant(0.0, 1.0, &x * (n % 2) as f64)).collect();
        let r = classify_sequence(SequenceItems::Curves(&alt), &labels, &fam, &["op"], Envelope::Dyadic).unwrap();
        assert_eq!(r.kind, SequenceKind::Neither);
        assert!(classify_sequence(SequenceItems::Curves(&[]), &[], &fam, &["op"], Envelope::Dyadic).is_err());
        let so3 = LieContext::so3();
        let group: Vec<Matrix> = labels.iter().map(|n| so3.exp_matrix(&(so3_generator(0) * (1.0 + 2f64.powi(-(*n as i32)))))).collect();
        let r = classify_sequence(SequenceItems::Group(&group), &labels, &fam, &["op", "fro"], Envelope::Dyadic).unwrap();
        assert_eq!(r.kind, SequenceKind::MackeyCauchy);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("m,n,seminorm,distance,envelope\n"));
    }

    #[test]
    fn confined_examples() {
        let fam = SeminormFamily::standard();
        let cfg = ConfinedConfig::standard(3);
        let so3 = LieContext::so3();
        let zero = Curve::zero(0.0, 1.0, 3);
        let r = confined_pipeline(&so3, &fam, &zero, 8, &cfg).unwrap();
        assert!(r.passed(), "{r:#?}");
        let phi = Curve::closed_form(
            0.0,
            1.0,
            vec![Matrix::zeros(3, 3), so3_generator(0)],
            vec![TrigTerm::sin(2.0 * PI, 0.0, so3_generator(2))],
        );
        let r = confined_pipeline(&so3, &fam, &phi, 64, &cfg).unwrap();
        assert!(r.passed(), "{:#?}", (&r.convergence, &r.sequence.kind, &r.tame));
        assert_eq!(r.tame_constant, r.witness.c_v.exp());
        let gl2 = LieContext::gl(2);
        let a = Matrix::from_row_slice(2, 2, &[0.2, -0.5, 0.3, 0.1]);
        let b = Matrix::from_row_slice(2, 2, &[0.0, 0.4, 0.4, -0.2]);
        let psi = Curve::closed_form(0.0, 1.0, vec![Matrix::zeros(2, 2), a], vec![TrigTerm::cos(3.0, 0.0, b)]);
        let r = confined_pipeline(&gl2, &fam, &psi, 64, &cfg).unwrap();
        assert!(r.passed(), "{:#?}", (&r.convergence, &r.sequence.kind, &r.tame));
        assert_eq!(r.sequence.envelope, Envelope::Harmonic);
    }
}
