use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use numsmooth::parallel::{with_threads, ExecPolicy};
use numsmooth_cli::config::{presets, ExperimentConfig};
use numsmooth_cli::report::{append_csv, to_csv_string};
use numsmooth_cli::runner::{run_experiment, sweep, RunOutcome};
use numsmooth_cli::{CliError, EXIT_NOT_CONVERGED};

#[derive(Parser)]
#[command(name = "numsmooth", version, about = "Numerical smoothing with ASGQ and MLMC backends")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Override the seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap the worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// CSV file to append results to.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Default directory for CSV output when --out is not given.
    #[arg(long, env = "NUMSMOOTH_OUT_DIR", hide_env_values = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a TOML config file.
    Run {
        target: String,
        /// Override the tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// List the named presets.
    ListPresets,
    /// Work-versus-tolerance sweep for an MLMC preset.
    Sweep {
        preset: String,
        /// Comma-separated, strictly decreasing tolerances.
        #[arg(long, value_delimiter = ',', required = true)]
        tols: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

fn load(target: &str, common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(target)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn emit(cfg: &ExperimentConfig, outcome: &RunOutcome, common: &Common) -> Result<(), CliError> {
    for r in &outcome.rows {
        let rel = r.rel_error.map(|e| format!("{:.3}%", 100.0 * e)).unwrap_or_else(|| "-".into());
        println!("{:<22} {:<24} {:<38} estimate={:<14.8} rel_err={rel}", r.experiment, r.method, r.param, r.estimate);
    }
    let path = common
        .out
        .clone()
        .or_else(|| cfg.output.clone().map(PathBuf::from))
        .or_else(|| common.out_dir.as_ref().map(|d| d.join(format!("{}.csv", cfg.name))));
    match path {
        Some(p) => {
            append_csv(&p, &outcome.rows)?;
            eprintln!("results appended to {}", p.display());
        }
        None => print!("{}", to_csv_string(&outcome.rows)?),
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::ListPresets => {
            for p in presets() {
                println!("{:<24} {:<8} {:?}/{:?}", p.name, p.method.name(), p.model, p.payoff);
            }
            Ok(true)
        }
        Command::Run { target, tol, common } => {
            let mut cfg = load(&target, &common)?;
            if let Some(t) = tol {
                cfg.tol = t;
            }
            let outcome = with_threads(common.threads, || run_experiment(&cfg, ExecPolicy::Parallel))?;
            emit(&cfg, &outcome, &common)?;
            Ok(outcome.converged)
        }
        Command::Sweep { preset, tols, common } => {
            let cfg = load(&preset, &common)?;
            let outcome = with_threads(common.threads, || sweep(&cfg, &tols, ExecPolicy::Parallel))?;
            emit(&cfg, &outcome, &common)?;
            Ok(outcome.converged)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: at least one run did not converge");
            ExitCode::from(EXIT_NOT_CONVERGED as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
