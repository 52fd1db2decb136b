use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plsel_core::harness::lemmas::check_lemmas;
use plsel_core::harness::report::write_json;
use plsel_core::harness::{
    calibrate, check_ledger, emit_calibration, emit_reports, run_experiment, ExperimentConfig, ExperimentSummary,
    ReportPaths,
};
use plsel_core::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_THRESHOLD: u8 = 3;

#[derive(Parser)]
#[command(name = "plsel", version, about = "Penalized partial-likelihood model selection experiments")]
struct Cli {
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the replication count (instances per family for check-lemmas).
    #[arg(long, global = true)]
    replications: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, fit, select and write the ledger, summary and risk curve.
    Run { config: PathBuf },
    /// Calibrate the penalty constant and write the coverage curve.
    Calibrate { config: PathBuf },
    /// Check the loss lemmas on random instances; exit 3 on any violation.
    CheckLemmas {
        /// Density pairs per lambda.
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
    },
    /// Re-check a ledger CSV and print its summary.
    Report { ledger: PathBuf },
}

fn is_validation(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidConfig(_) | Error::InvalidPenaltySpec(_) | Error::InvalidModel(_) | Error::IoFailure(_)
    )
}

fn load(cli: &Cli, path: &Path) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.replications {
        cfg.replications = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out_dir
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.dir.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn prefix(cfg: &ExperimentConfig) -> String {
    cfg.output.prefix.clone().unwrap_or_default()
}

fn execute(cli: &Cli) -> Result<u8, (u8, Error)> {
    let validation = |e: Error| (EXIT_VALIDATION, e);
    let failure = |e: Error| if is_validation(&e) { (EXIT_VALIDATION, e) } else { (EXIT_FAILURE, e) };
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(cli, config).map_err(validation)?;
            let out = run_experiment(&cfg).map_err(failure)?;
            let paths = ReportPaths::in_dir(&out_dir(cli, Some(&cfg)), &prefix(&cfg));
            emit_reports(&out, &paths).map_err(failure)?;
            let s = ExperimentSummary::new(&out).summary;
            println!(
                "{}: n={} replications={} failed={} C={:e} violation_rate={:.4} budget={:.4} mean_risk={:.3e}",
                s.family, s.n, s.replications, s.failed, s.c, s.violation_rate, s.probability_budget, s.mean_risk
            );
            println!("wrote {}", paths.ledger.display());
            Ok(0)
        }
        Command::Calibrate { config } => {
            let cfg = load(cli, config).map_err(validation)?;
            let cal = calibrate(&cfg).map_err(failure)?;
            let path = out_dir(cli, Some(&cfg)).join(format!("{}calibration.json", prefix(&cfg)));
            emit_calibration(&cal, &path).map_err(failure)?;
            println!(
                "calibrated C = {:e} (risk-optimal {:e}) from {} replications, {} failed",
                cal.report.constant,
                cal.report.risk_optimal(),
                cal.replications,
                cal.failures.len()
            );
            Ok(0)
        }
        Command::CheckLemmas { pairs } => {
            let instances = cli.replications.unwrap_or(1000);
            let checks = check_lemmas(cli.seed.unwrap_or(0), instances, *pairs).map_err(failure)?;
            for c in &checks {
                println!(
                    "{} {}: {} violations in {} (max ratio {:.4})",
                    if c.passed() { "PASS" } else { "FAIL" },
                    c.name,
                    c.violations,
                    c.instances,
                    c.max_ratio
                );
            }
            if let Some(dir) = &cli.out_dir {
                std::fs::create_dir_all(dir).map_err(|e| (EXIT_FAILURE, Error::from(e)))?;
                let file = std::fs::File::create(dir.join("lemmas.json")).map_err(|e| (EXIT_FAILURE, Error::from(e)))?;
                write_json(file, &checks).map_err(failure)?;
            }
            Ok(if checks.iter().all(|c| c.passed()) { 0 } else { EXIT_THRESHOLD })
        }
        Command::Report { ledger } => {
            let file = std::fs::File::open(ledger)
                .map_err(|e| (EXIT_VALIDATION, Error::IoFailure(format!("{}: {e}", ledger.display()))))?;
            let check = check_ledger(file).map_err(validation)?;
            write_json(std::io::stdout().lock(), &check).map_err(failure)?;
            if !check.inconsistent_rows.is_empty() {
                eprintln!("error: {} ledger rows fail recomputation", check.inconsistent_rows.len());
                return Ok(EXIT_VALIDATION);
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_VALIDATION);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .expect("global pool is built once");
    }
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err((code, e)) => {
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
