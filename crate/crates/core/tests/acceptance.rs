use std::process::ExitCode;

use prodint::adjoint::duhamel_series;
use prodint::composition::CheckStatus;
use prodint::estimates::{constricted_constants, tame_check, EstimateWitness, KSample};
use prodint::evolution::StepperConfig;
use prodint::sampling::{ball_element, rng, unit_direction};
use prodint::suite::{run_suite, CheckRow, ReportFormat, SuiteName, SuiteReport, SuiteSettings};
use prodint::{Curve, LieContext, SeminormFamily};

const SEED: u64 = 20240501;

type Verdict = Result<String, String>;

fn run(ctx: &LieContext, suite: SuiteName) -> Result<SuiteReport, String> {
    run_suite(ctx, suite, &SuiteSettings::new(SEED)).map_err(|e| e.to_string())
}

fn row<'a>(report: &'a SuiteReport, id: &str) -> Result<&'a CheckRow, String> {
    report.rows.iter().find(|r| r.check_id == id).ok_or_else(|| format!("row {id} missing"))
}

fn require(report: &SuiteReport, ctx: &str, ids: &[&str]) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for id in ids {
        let r = row(report, id)?;
        if r.pass != CheckStatus::Pass {
            return Err(format!("{ctx}/{id}: measured {:e} vs bound {:e} ({:?})", r.measured, r.bound, r.pass));
        }
        out.push(format!("{ctx}/{id}={:.3e}", r.measured));
    }
    Ok(out)
}

fn criterion_1() -> Verdict {
    let ids = ["product-curve", "inverse-of-integral", "split-partition", "substitution", "inverse-curve"];
    let mut details = Vec::new();
    for name in ["heisenberg", "so3", "gl3"] {
        let ctx = LieContext::builtin(name).unwrap();
        let report = run(&ctx, SuiteName::Identities)?;
        let bound = if name == "heisenberg" { 1e-12 } else { 1e-7 };
        for id in ids {
            let r = row(&report, id)?;
            if r.bound != bound || r.n != 100 {
                return Err(format!("{name}/{id} ran with bound {} on {} curves", r.bound, r.n));
            }
        }
        let worst = report.rows.iter().map(|r| r.measured).fold(0.0, f64::max);
        require(&report, name, &ids)?;
        details.push(format!("{name} max rel err {worst:.2e} (bound {bound:e})"));
    }
    Ok(details.join("; "))
}

fn criterion_2() -> Verdict {
    let ids = [
        "adjoint-ode-defect",
        "ai-identity",
        "scheme-monotone",
        "scheme-order",
        "duhamel-so3-rotation",
    ];
    let mut details = Vec::new();
    for name in ["so3", "gl3", "heisenberg"] {
        let ctx = LieContext::builtin(name).unwrap();
        let report = run(&ctx, SuiteName::Adjoint)?;
        require(&report, name, &ids)?;
        let order = row(&report, "scheme-order")?.measured;
        details.push(format!(
            "{name}: defect {:.1e}, AI gap {:.1e}, order {order:.3} (accepted band >= {:.2})",
            row(&report, "adjoint-ode-defect")?.measured,
            row(&report, "ai-identity")?.measured,
            row(&report, "scheme-order")?.bound
        ));
    }
    let so3 = run(&LieContext::so3(), SuiteName::Adjoint)?;
    details.push(format!("Duhamel vs rotation {:.1e}", row(&so3, "duhamel-so3-rotation")?.measured));
    Ok(details.join("; "))
}

fn criterion_3() -> Verdict {
    let report = run(&LieContext::gl(3), SuiteName::Estimates)?;
    require(&report, "gl3", &["asymptotic-gl3", "transport-bound", "heisenberg-chains-vanish"])?;
    let c = row(&report, "asymptotic-gl3")?;
    if c.measured != 2.0 || c.n != 1000 {
        return Err(format!("gl3 multiplier {} with {} samples per depth", c.measured, c.n));
    }
    let t = row(&report, "transport-bound")?;
    Ok(format!(
        "gl3 c = {} at depth 6 ({} samples/depth); transport bound max ratio {:.3} over {} cases; Heisenberg chains max |entry| {}",
        c.measured,
        c.n,
        t.measured,
        t.n,
        row(&report, "heisenberg-chains-vanish")?.measured
    ))
}

fn criterion_4() -> Verdict {
    let mut details = Vec::new();
    for name in ["so3", "gl3"] {
        let report = run(&LieContext::builtin(name).unwrap(), SuiteName::Composition)?;
        let mut ids: Vec<String> = ["collapse-n2", "collapse-n3", "collapse-n4", "collapse-n8", "term-count", "factorial-monotone", "factorial-limit"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for n in [2, 4, 8, 16] {
            for q in 0..=3 {
                ids.push(format!("chi-sup-bound-n{n}-q{q}"));
            }
        }
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        require(&report, name, &refs)?;
        if row(&report, "chi-sup-bound-precondition")?.pass != CheckStatus::PreconditionSkipped {
            return Err(format!("{name}: violated precondition not reported as skipped"));
        }
        let collapse = ["collapse-n2", "collapse-n3", "collapse-n4", "collapse-n8"]
            .iter()
            .map(|id| row(&report, id).map(|r| r.ratio))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let sup = report
            .rows
            .iter()
            .filter(|r| r.check_id.starts_with("chi-sup-bound-n"))
            .map(|r| r.ratio)
            .fold(0.0, f64::max);
        details.push(format!("{name}: collapse err/(1e-7 n) <= {collapse:.1e}, sup-bound ratio <= {sup:.3}"));
    }
    Ok(details.join("; "))
}

fn criterion_5() -> Verdict {
    let report = run(&LieContext::so3(), SuiteName::Approx)?;
    let ids = [
        "context-freeze-uniform",
        "context-mackey-cauchy",
        "so3-freeze-uniform",
        "so3-mackey-cauchy",
        "so3-tame",
        "gl2-freeze-uniform",
        "gl2-mackey-cauchy",
        "gl2-tame",
    ];
    require(&report, "so3", &ids)?;
    Ok(format!(
        "sup-distance/modulus <= {:.3} (so3), {:.3} (gl2); tame ratio {:.3}, {:.3}; {} evidence rows",
        row(&report, "so3-freeze-uniform")?.measured,
        row(&report, "gl2-freeze-uniform")?.measured,
        row(&report, "so3-tame")?.ratio,
        row(&report, "gl2-tame")?.ratio,
        report.evidence.len()
    ))
}

fn criterion_6() -> Verdict {
    let fam = SeminormFamily::standard();
    let so3 = LieContext::so3();
    let k = KSample::Ball { radius: 1.0 };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = dir.path().join("first.json");
    let second = dir.path().join("second.json");
    let witness = constricted_constants(&so3, &fam, "op", &k, 3, 64, SEED).map_err(|e| e.to_string())?;
    witness.save(&first).map_err(|e| e.to_string())?;
    let rerun = constricted_constants(&so3, &fam, "op", &k, 3, 64, SEED).map_err(|e| e.to_string())?;
    rerun.save(&second).map_err(|e| e.to_string())?;
    let bytes_a = std::fs::read(&first).map_err(|e| e.to_string())?;
    let bytes_b = std::fs::read(&second).map_err(|e| e.to_string())?;
    if bytes_a != bytes_b {
        return Err("re-run witness file differs".into());
    }
    let loaded = EstimateWitness::load(&first).map_err(|e| e.to_string())?;
    let c_bits = loaded.c_v.to_bits();
    if c_bits != rerun.c_v.to_bits() {
        return Err("persisted C_v differs from the re-run".into());
    }
    let mut r = rng(SEED);
    let x = ball_element(&so3, &mut r, 1.0);
    let y = unit_direction(&so3, &mut r);
    let t = 0.75;
    let sum = duhamel_series(&so3, &fam, &x, &y, t, 1e-12, Some(&loaded)).map_err(|e| e.to_string())?;
    let tc = t * f64::from_bits(c_bits);
    let n = sum.terms;
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    let expected = tc.powi(n as i32) / fact * tc.exp() * loaded.w_multiplier * fam.get("op").unwrap().eval(&so3.project(&y).unwrap());
    if sum.remainder_bound != 0.0 && sum.remainder_bound.to_bits() != expected.to_bits() {
        return Err(format!("Duhamel remainder {} not computed from the persisted C_v ({expected})", sum.remainder_bound));
    }
    let cfg = StepperConfig::fixed(prodint::evolution::Method::CommutatorFree4, 32).without_defect();
    let tame = tame_check(&so3, &fam, &[Curve::constant(0.0, 1.0, x)], "op", &[y], 4, Some(&loaded), &cfg).map_err(|e| e.to_string())?;
    let tame_expected = f64::from_bits(c_bits).exp() * loaded.w_multiplier;
    if tame.witness_bound.map(f64::to_bits) != Some(tame_expected.to_bits()) {
        return Err(format!("tame bound {:?} not computed from the persisted C_v", tame.witness_bound));
    }
    let report = run(&so3, SuiteName::Estimates)?;
    require(&report, "so3", &["witness-consistency"])?;
    Ok(format!(
        "C_v = {} (bits {c_bits:#018x}) identical in file, re-run, Duhamel ({} terms) and tame bound",
        loaded.c_v, sum.terms
    ))
}

fn serialize(report: &SuiteReport) -> Result<Vec<u8>, String> {
    let mut buf = Vec::new();
    report.write_rows(&mut buf, ReportFormat::Csv).map_err(|e| e.to_string())?;
    report.write_rows(&mut buf, ReportFormat::Jsonl).map_err(|e| e.to_string())?;
    report.write_convergence(&mut buf).map_err(|e| e.to_string())?;
    report.write_evidence(&mut buf).map_err(|e| e.to_string())?;
    if let Some(w) = &report.witness {
        buf.extend(w.to_json().map_err(|e| e.to_string())?.into_bytes());
    }
    Ok(buf)
}

fn criterion_7() -> Verdict {
    let mut total = 0;
    for name in ["so3", "heisenberg"] {
        let ctx = LieContext::builtin(name).unwrap();
        let a = serialize(&run(&ctx, SuiteName::All)?)?;
        let b = serialize(&run(&ctx, SuiteName::All)?)?;
        if a != b {
            return Err(format!("{name}: reports differ between runs"));
        }
        total += a.len();
    }
    Ok(format!("two runs of every suite on so3 and heisenberg agree byte for byte ({total} bytes)"))
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Verdict); 7] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
    ];
    let mut failed = 0;
    for (k, f) in criteria {
        match f() {
            Ok(detail) => println!("criterion {k}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {k}: FAIL ({detail})");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
