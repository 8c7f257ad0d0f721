//! `tldoa`: simulate scenarios, run the four estimators and score them.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 SBL did not
//! converge (only with `--strict`).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tldoa::experiment::{
    self, estimate_and_score, read_estimates, run_experiment, write_artifacts, write_summary, Algorithm,
    ExperimentConfig, ExperimentOutput, MetricsSummary,
};
use tldoa::metrics::DEFAULT_CROSSING_THRESHOLD;
use tldoa::sim::{read_scenario, simulate_trajectory_scenario, write_scenario};
use tldoa::Error;

#[derive(Parser)]
#[command(name = "tldoa", version, about = "DOA trajectory estimation for moving sources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Override the scenario RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Where artifacts are written (default: the config's output_dir, else ./out).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Exit with status 3 if any SBL run hits its iteration cap.
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one of the built-in examples (1-4) with all four estimators.
    Reproduce { example: u8 },
    /// Simulate the scenario of a config file into a scenario directory.
    Simulate { config: PathBuf },
    /// Run the estimators of a config file on an existing scenario directory.
    Estimate { config: PathBuf, scenario: PathBuf },
    /// Simulate, estimate and score in one go.
    Run { config: PathBuf },
    /// Score the estimates in a results directory against a scenario's truth.
    Evaluate {
        scenario: PathBuf,
        results: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CROSSING_THRESHOLD)]
        crossing_threshold: f64,
    },
}

enum Failure {
    Error(Error),
    NotConverged(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) => 2,
        _ => 1,
    }
}

fn load_config(path: &Path, common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.scenario.rng_seed = seed;
    }
    Ok(cfg)
}

fn output_dir(cfg: Option<&ExperimentConfig>, common: &Common) -> PathBuf {
    common
        .output_dir
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn print_summary(summary: &MetricsSummary) {
    for (alg, m) in &summary.algorithms {
        let rmse = m.rmse_deg.map_or("n/a".to_string(), |r| format!("{r:.3}"));
        println!(
            "{:<7} rmse_deg={rmse} scored_blocks={} excluded_blocks={} missed_sources={}",
            alg.name(),
            m.scored_blocks,
            m.excluded_blocks.len(),
            m.missed_sources
        );
    }
}

fn check_convergence(out: &ExperimentOutput, strict: bool) -> Result<(), Failure> {
    let stalled: Vec<String> = out
        .runs
        .iter()
        .filter_map(|r| {
            let blocks = r.non_converged_blocks();
            (!blocks.is_empty()).then(|| format!("{}: {} block(s)", r.algorithm.name(), blocks.len()))
        })
        .collect();
    if stalled.is_empty() {
        return Ok(());
    }
    if strict {
        return Err(Failure::NotConverged(stalled));
    }
    eprintln!("warning: SBL reached its iteration cap ({})", stalled.join(", "));
    Ok(())
}

fn finish(out: &ExperimentOutput, dir: &Path, with_scenario: bool, strict: bool) -> Result<(), Failure> {
    write_artifacts(dir, out, with_scenario)?;
    print_summary(&out.summary);
    println!("artifacts written to {}", dir.display());
    check_convergence(out, strict)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let common = &cli.common;
    match &cli.command {
        Command::Reproduce { example } => {
            let cfg = ExperimentConfig::example(*example, common.seed.unwrap_or(0))?;
            let out = run_experiment(&cfg)?;
            finish(&out, &output_dir(None, common), true, common.strict)
        }
        Command::Simulate { config } => {
            let cfg = load_config(config, common)?;
            let scenario = simulate_trajectory_scenario(&cfg.scenario)?;
            let dir = output_dir(Some(&cfg), common);
            write_scenario(&dir, &scenario)?;
            println!("scenario written to {}", dir.display());
            Ok(())
        }
        Command::Estimate { config, scenario } => {
            let mut cfg = load_config(config, common)?;
            let scenario = read_scenario(scenario)?;
            cfg.scenario = scenario.config.clone();
            let out = estimate_and_score(&cfg, scenario)?;
            finish(&out, &output_dir(Some(&cfg), common), false, common.strict)
        }
        Command::Run { config } => {
            let cfg = load_config(config, common)?;
            let out = run_experiment(&cfg)?;
            finish(&out, &output_dir(Some(&cfg), common), true, common.strict)
        }
        Command::Evaluate {
            scenario,
            results,
            crossing_threshold,
        } => {
            let scenario = read_scenario(scenario)?;
            let blocks = scenario.blocks.len();
            let mut runs = Vec::new();
            for alg in Algorithm::ALL {
                let path = results.join(alg.name()).join("estimates.csv");
                if path.exists() {
                    runs.push((alg, read_estimates(&path, blocks)?, Vec::new()));
                }
            }
            if runs.is_empty() {
                return Err(Error::Validation {
                    field: "results".into(),
                    reason: format!("no <algorithm>/estimates.csv under {}", results.display()),
                }
                .into());
            }
            let (summary, reports) = experiment::evaluate(&runs, &scenario.truth, *crossing_threshold)?;
            for ((alg, _, _), report) in runs.iter().zip(&reports) {
                let path = results.join(alg.name()).join("metrics.csv");
                fs::write(&path, report.to_csv()).map_err(|e| Error::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
            }
            write_summary(results, &summary)?;
            print_summary(&summary);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.common.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::NotConverged(what)) => {
            eprintln!("error: SBL did not converge ({})", what.join(", "));
            ExitCode::from(3)
        }
    }
}
