//! Command-line front end: run configured experiments, search learning-rate
//! grids, time per-step cost, and run the self-check suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use curveball::bench::cost::{DEFAULT_TIMED, DEFAULT_WARMUP};
use curveball::bench::{
    grid_search, load_config, measure_cost, run_experiment, verify, BenchError, CostReport,
    ExperimentResult, GridOutcome, HyperSpec, OptimizerSpec,
};
use curveball::optim::CurveballConfig;

#[derive(Parser)]
#[command(name = "curveball", version, about = "Second-order stochastic optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment and report convergence statistics.
    Run(RunArgs),
    /// Evaluate every grid point of the configured optimizer and pick the best.
    Grid(ConfigArg),
    /// Time the per-step cost of a fixed optimizer panel on the configured problem.
    Cost(CostArgs),
    /// Run the self-check suites; exits nonzero if any fails.
    Verify,
}

#[derive(Args)]
struct ConfigArg {
    /// Path to a JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Override the configuration's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configuration's number of repeated runs.
    #[arg(long)]
    repeats: Option<u64>,
    /// Write summary.csv plus one trace CSV per run into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Untimed steps before measurement starts.
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    warmup: u64,
    /// Timed steps per optimizer.
    #[arg(long, default_value_t = DEFAULT_TIMED)]
    timed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, BenchError> {
    match command {
        Command::Run(args) => {
            let mut config = load_config(&args.config.config)?;
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            if let Some(repeats) = args.repeats {
                config.repeats = repeats;
            }
            if let Some(out) = args.out {
                config.output_dir = Some(out);
            }
            let output = run_experiment(&config)?;
            print_result(&output.result);
            if let Some(dir) = &config.output_dir {
                println!(
                    "wrote summary.csv and {} trace files to {}",
                    output.traces.len(),
                    dir.display()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Grid(args) => {
            let config = load_config(&args.config)?;
            let outcome = grid_search(&config)?;
            print_grid(&outcome);
            Ok(ExitCode::SUCCESS)
        }
        Command::Cost(args) => {
            let config = load_config(&args.config.config)?;
            let problem = config.problem.build(config.seed)?;
            let panel = [
                OptimizerSpec::Curveball {
                    hyper: HyperSpec::Auto,
                    lambda0: CurveballConfig::default().lambda0,
                    curvature: true,
                },
                OptimizerSpec::Sgd { alpha: Some(1e-2), rho: Some(0.9) },
                OptimizerSpec::Adam { alpha: Some(1e-3) },
            ];
            let report =
                measure_cost(problem.as_ref(), &panel, args.warmup, args.timed, config.seed)?;
            print_cost(&report, args.timed);
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            let report = verify();
            print!("{}", report.render());
            Ok(if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn print_result(result: &ExperimentResult) {
    println!(
        "{} on {}: {}/{} runs converged",
        result.optimizer, result.problem, result.converged, result.total
    );
    match (result.mean_iterations, result.std_iterations) {
        (Some(mean), Some(std)) => {
            println!("iterations to tolerance: {mean:.1} +/- {std:.1}");
        }
        (Some(mean), None) => println!("iterations to tolerance: {mean:.1}"),
        _ => println!("no run reached tolerance"),
    }
}

fn print_grid(outcome: &GridOutcome) {
    println!("{:<50} {:>6} {:>12}", "setting", "rate", "mean iters");
    for (spec, result) in &outcome.evaluated {
        let mean = result
            .mean_iterations
            .map_or_else(|| "-".into(), |m| format!("{m:.1}"));
        println!(
            "{:<50} {:>6.2} {:>12}",
            describe(spec),
            result.convergence_rate(),
            mean
        );
    }
    println!("best: {}", describe(&outcome.best));
    print_result(&outcome.best_result);
}

/// Compact single-line rendering of a concrete optimizer setting.
fn describe(spec: &OptimizerSpec) -> String {
    serde_json::to_string(spec).expect("specs serialize")
}

fn print_cost(report: &CostReport, timed: u64) {
    println!(
        "per-step cost on {} ({} warmup, {} timed steps)",
        report.problem, report.warmup, timed
    );
    println!(
        "{:<12} {:>14} {:>9} {:>9} {:>9}",
        "optimizer", "median step", "forward", "fmad", "rmad"
    );
    for entry in &report.entries {
        println!(
            "{:<12} {:>11.1} us {:>9.2} {:>9.2} {:>9.2}",
            entry.optimizer,
            entry.median_step_ns as f64 / 1e3,
            entry.forward_per_step(),
            entry.fmad_per_step(),
            entry.rmad_per_step()
        );
    }
    if let (Some(second), Some(first)) = (report.entry("curveball"), report.entry("sgd")) {
        if first.median_step_ns > 0 {
            println!(
                "curveball / sgd median step ratio: {:.2}",
                second.median_step_ns as f64 / first.median_step_ns as f64
            );
        }
    }
}
