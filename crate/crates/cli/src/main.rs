use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use prodint::suite::{run_suite, write_rows, ReportFormat, SuiteName, SuiteReport, SuiteSettings};
use prodint::{LabError, LieContext};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Suite {
    Identities,
    Adjoint,
    Estimates,
    Composition,
    Approx,
    All,
}

impl From<Suite> for SuiteName {
    fn from(s: Suite) -> Self {
        match s {
            Suite::Identities => SuiteName::Identities,
            Suite::Adjoint => SuiteName::Adjoint,
            Suite::Estimates => SuiteName::Estimates,
            Suite::Composition => SuiteName::Composition,
            Suite::Approx => SuiteName::Approx,
            Suite::All => SuiteName::All,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

/// Runs the product-integral check suites and writes one report row per check.
#[derive(Debug, Parser)]
#[command(name = "prodint", version)]
struct Args {
    /// Context file, or a builtin name (heisenberg, so3, gl2, gl3, diag2). Relative
    /// paths are resolved against PRODINT_CONTEXT_DIR when set.
    #[arg(long)]
    context: String,

    /// Directory holding context files.
    #[arg(long, env = "PRODINT_CONTEXT_DIR")]
    context_dir: Option<PathBuf>,

    #[arg(long, value_enum)]
    suite: Suite,

    /// Seed of every random stream used by the suites.
    #[arg(long)]
    seed: u64,

    /// Relative tolerance replacing the default of the identities suite.
    #[arg(long)]
    tol: Option<f64>,

    /// Report path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "csv")]
    format: Format,

    /// Writes the transport-scheme convergence rows as CSV.
    #[arg(long)]
    convergence: Option<PathBuf>,

    /// Writes the approximation-sequence evidence grid as CSV.
    #[arg(long)]
    evidence: Option<PathBuf>,

    /// Writes the constricted witness certified by the estimates suite as JSON.
    #[arg(long)]
    witness_out: Option<PathBuf>,
}

fn load_context(name: &str, dir: Option<&Path>) -> Result<LieContext, LabError> {
    let path = Path::new(name);
    let candidates: Vec<PathBuf> = match dir {
        Some(d) if path.is_relative() => vec![d.join(path), d.join(format!("{name}.json")), path.to_path_buf()],
        _ => vec![path.to_path_buf()],
    };
    if let Some(found) = candidates.iter().find(|p| p.is_file()) {
        return LieContext::load(found);
    }
    if let Some(ctx) = LieContext::builtin(name) {
        return Ok(ctx);
    }
    Err(LabError::Io(io::Error::new(
        io::ErrorKind::NotFound,
        format!("context '{name}' is neither a readable file nor a builtin context"),
    )))
}

fn create(path: &Path) -> Result<BufWriter<File>, LabError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn emit(args: &Args, report: &SuiteReport) -> Result<(), LabError> {
    let format = match args.format {
        Format::Csv => ReportFormat::Csv,
        Format::Jsonl => ReportFormat::Jsonl,
    };
    match &args.out {
        Some(path) => report.write_rows(create(path)?, format)?,
        None => report.write_rows(io::stdout().lock(), format)?,
    }
    if let Some(path) = &args.convergence {
        report.write_convergence(create(path)?)?;
    }
    if let Some(path) = &args.evidence {
        report.write_evidence(create(path)?)?;
    }
    if let Some(path) = &args.witness_out {
        match &report.witness {
            Some(w) => w.save(path)?,
            None => {
                return Err(LabError::Argument(
                    "--witness-out needs a suite that certifies a witness (estimates or all)".into(),
                ))
            }
        }
    }
    Ok(())
}

fn run(args: &Args) -> Result<SuiteReport, LabError> {
    if let Some(tol) = args.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(LabError::Argument(format!("--tol must be positive and finite, got {tol}")));
        }
    }
    let ctx = load_context(&args.context, args.context_dir.as_deref())?;
    let settings = SuiteSettings {
        seed: args.seed,
        tol: args.tol,
    };
    let report = run_suite(&ctx, args.suite.into(), &settings)?;
    emit(args, &report)?;
    Ok(report)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&args) {
        Ok(report) => {
            for note in &report.notes {
                eprintln!("note: {note}");
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                let mut err = io::stderr().lock();
                let _ = writeln!(err, "failing checks:");
                let failures: Vec<_> = report.failures().cloned().collect();
                let _ = write_rows(&failures, &mut err, ReportFormat::Csv);
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
