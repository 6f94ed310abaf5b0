//! `semiflow`: configuration-driven experiment runner.
//!
//! ```text
//! semiflow <experiment> --config <file> --out <dir> [--seed N]
//! ```
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or the
//! computation aborts, 2 for configuration and output errors.

mod config;
mod experiments;
mod report;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use config::ConfigFile;
use experiments::Experiment;
use report::RunReport;

#[derive(Debug, Parser)]
#[command(name = "semiflow", version, about = "Run a semiflow experiment and write its report and CSV artifacts")]
struct Cli {
    experiment: Experiment,
    /// Flat `key = value` file; all keys are optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the `seed` key of the config file.
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    ExitCode::from(run(&cli))
}

fn run(cli: &Cli) -> u8 {
    let name = cli.experiment.name();
    let file = match &cli.config {
        Some(path) => match fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return EXIT_CONFIG;
            }
        },
        None => String::new(),
    };
    let prepared = match ConfigFile::parse(&file).and_then(|f| experiments::prepare(cli.experiment, &f, cli.seed)) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create {}: {e}", cli.out.display());
        return EXIT_CONFIG;
    }

    let started = Instant::now();
    let mut report = RunReport::new(name, prepared.seed, &cli.out);
    report.config = prepared.echo.clone();
    match experiments::execute(&prepared, &mut report) {
        Ok(()) => {}
        Err(semiflow::Error::Io(e)) => {
            eprintln!("error: cannot write artifacts to {}: {e}", cli.out.display());
            return EXIT_CONFIG;
        }
        Err(semiflow::Error::Config(msg)) => {
            eprintln!("config error: {msg}");
            return EXIT_CONFIG;
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    let elapsed = started.elapsed().as_secs_f64();
    match report.write(elapsed) {
        Ok(path) => {
            for c in &report.checks {
                println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(e) = &report.error {
                println!("[FAIL] aborted: {e}");
            }
            println!("report: {} ({elapsed:.1} s)", path.display());
        }
        Err(e) => {
            eprintln!("error: cannot write report to {}: {e}", cli.out.display());
            return EXIT_CONFIG;
        }
    }
    if report.passed() {
        0
    } else {
        EXIT_FAIL
    }
}
