//! Repeated-run experiment driver.
//!
//! Each run gets its own RNG stream `derive(seed, run_index)`, so runs are
//! independent of execution order and can be spread over a worker pool
//! without changing a single output bit. Convergence is judged on the
//! noise-free objective, evaluated out-of-band after every step; that
//! evaluation is never shown to the optimizer and is not counted against
//! its differentiation passes.

use std::path::Path;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::csvio;
use super::BenchError;
use crate::autodiff::{ConvergenceMetric, Problem};
use crate::numerics::{Rng, Tensor};
use crate::optim::Optimizer;

/// Runs whose noise-free loss exceeds this multiple of the starting loss
/// are abandoned as divergent.
const DIVERGENCE_FACTOR: f64 = 1e12;

/// One optimizer step as recorded in a trace CSV. `wall_ns` is part of the
/// schema but the runner always writes 0 there: per-step timing would make
/// otherwise identical runs produce different bytes, and timing questions
/// belong to the cost report.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: u64,
    /// Batch objective at the pre-step iterate (noisy for stochastic runs).
    pub loss: f64,
    /// Noise-free objective at the post-step iterate.
    pub true_loss: f64,
    pub step_norm: f64,
    pub beta: f64,
    pub rho: f64,
    pub lambda: f64,
    /// Trust-region quality ratio, on the steps that computed one.
    pub gamma: Option<f64>,
    pub wall_ns: u64,
    pub forward: u64,
    pub fmad: u64,
    pub rmad: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged { iterations: u64 },
    DidNotConverge,
}

impl RunStatus {
    pub fn iterations(&self) -> Option<u64> {
        match self {
            RunStatus::Converged { iterations } => Some(*iterations),
            RunStatus::DidNotConverge => None,
        }
    }
}

/// Everything one run produced. Row 0 records the starting point, then one
/// row per optimizer step; iteration indexes strictly increase but may skip
/// numbers where a step attempt failed (failed attempts still count toward
/// the iteration total).
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub run: u64,
    pub status: RunStatus,
    pub rows: Vec<TraceRow>,
}

/// Aggregated outcome in the shape of a results-table row: mean and sample
/// standard deviation of iterations-to-tolerance over the converged runs,
/// with non-converged runs counted separately.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub problem: String,
    pub optimizer: String,
    pub per_run: Vec<RunStatus>,
    pub mean_iterations: Option<f64>,
    pub std_iterations: Option<f64>,
    pub converged: u64,
    pub total: u64,
}

impl ExperimentResult {
    pub fn convergence_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.converged as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub result: ExperimentResult,
    pub traces: Vec<RunTrace>,
}

/// Mean and sample (n-1) standard deviation; the std is `None` below two
/// samples, the mean below one.
pub fn mean_std(samples: &[f64]) -> (Option<f64>, Option<f64>) {
    if samples.is_empty() {
        return (None, None);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (Some(mean), None);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

fn noise_free_loss(problem: &dyn Problem, w: &Tensor) -> f64 {
    problem.evaluate(w, &problem.full_batch()).loss()
}

/// Drives one optimizer to tolerance or the iteration cap. The convergence
/// target is the tolerance itself, or `tolerance * f(w0)` for problems that
/// declare relative convergence. With `record` off only the status is kept,
/// which is what grid search wants.
fn drive(
    problem: &dyn Problem,
    optimizer: &mut dyn Optimizer,
    tolerance: f64,
    max_iterations: u64,
    rng: &mut Rng,
    run: u64,
    record: bool,
) -> RunTrace {
    let mut w = problem.initial_point(rng);
    let f0 = noise_free_loss(problem, &w);
    let target = match problem.convergence() {
        ConvergenceMetric::Absolute => tolerance,
        ConvergenceMetric::RelativeToStart => tolerance * f0,
    };
    let ceiling = DIVERGENCE_FACTOR * (1.0 + f0.abs());

    let mut rows = Vec::new();
    if record {
        rows.push(TraceRow {
            iteration: 0,
            loss: f0,
            true_loss: f0,
            step_norm: 0.0,
            beta: 0.0,
            rho: 0.0,
            lambda: 0.0,
            gamma: None,
            wall_ns: 0,
            forward: 0,
            fmad: 0,
            rmad: 0,
        });
    }
    if f0 <= target {
        return RunTrace { run, status: RunStatus::Converged { iterations: 0 }, rows };
    }

    for iteration in 1..=max_iterations {
        let batch = problem.sample_batch(rng);
        let Ok((next, info)) = optimizer.step(problem, &w, &batch) else {
            // Recoverable step failure: the iterate stands, the attempt
            // still counts.
            continue;
        };
        w = next;
        let true_loss = noise_free_loss(problem, &w);
        if record {
            rows.push(TraceRow {
                iteration,
                loss: info.loss,
                true_loss,
                step_norm: info.step_norm,
                beta: info.beta,
                rho: info.rho,
                lambda: info.lambda,
                gamma: info.gamma(),
                wall_ns: 0,
                forward: info.passes.forward,
                fmad: info.passes.fmad,
                rmad: info.passes.rmad,
            });
        }
        if true_loss <= target {
            return RunTrace { run, status: RunStatus::Converged { iterations: iteration }, rows };
        }
        if !true_loss.is_finite() || true_loss > ceiling {
            break;
        }
    }
    RunTrace { run, status: RunStatus::DidNotConverge, rows }
}

/// One seeded run with a full trace.
pub fn single_run(
    problem: &dyn Problem,
    optimizer: &mut dyn Optimizer,
    tolerance: f64,
    max_iterations: u64,
    rng: &mut Rng,
    run: u64,
) -> RunTrace {
    drive(problem, optimizer, tolerance, max_iterations, rng, run, true)
}

/// Runs exactly `iterations` steps with no convergence checks and returns
/// the final iterate with its noise-free loss. This is the fixed-budget
/// protocol for loss-at-equal-iterations comparisons.
pub fn train_fixed_iterations(
    problem: &dyn Problem,
    optimizer: &mut dyn Optimizer,
    iterations: u64,
    rng: &mut Rng,
) -> (Tensor, f64) {
    let mut w = problem.initial_point(rng);
    for _ in 0..iterations {
        let batch = problem.sample_batch(rng);
        if let Ok((next, _)) = optimizer.step(problem, &w, &batch) {
            w = next;
        }
    }
    let loss = noise_free_loss(problem, &w);
    (w, loss)
}

/// Worker pool capped by the `CURVEBALL_THREADS` environment variable;
/// absent or unparsable values fall back to rayon's default pool.
fn capped_pool() -> Option<rayon::ThreadPool> {
    let threads: usize = std::env::var("CURVEBALL_THREADS").ok()?.parse().ok()?;
    if threads == 0 {
        return None;
    }
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().ok()
}

fn execute_with(config: &ExperimentConfig, record: bool) -> Result<ExperimentOutput, BenchError> {
    config.validate()?;
    if config.optimizer.is_grid() {
        // Surface the placeholder error before spawning any runs.
        config.optimizer.build(1)?;
    }
    let problem = config.problem.build(config.seed)?;
    let root = Rng::new(config.seed);

    let run_one = |run: u64| -> Result<RunTrace, BenchError> {
        let mut rng = root.derive(run);
        let mut optimizer = config.optimizer.build(problem.param_count())?;
        Ok(drive(
            problem.as_ref(),
            optimizer.as_mut(),
            config.tolerance,
            config.max_iterations,
            &mut rng,
            run,
            record,
        ))
    };
    let runs: Vec<u64> = (0..config.repeats).collect();
    let traces: Result<Vec<RunTrace>, BenchError> = match capped_pool() {
        Some(pool) => pool.install(|| runs.par_iter().map(|&run| run_one(run)).collect()),
        None => runs.par_iter().map(|&run| run_one(run)).collect(),
    };
    let traces = traces?;

    let per_run: Vec<RunStatus> = traces.iter().map(|t| t.status).collect();
    let iterations: Vec<f64> =
        per_run.iter().filter_map(|s| s.iterations()).map(|i| i as f64).collect();
    let (mean_iterations, std_iterations) = mean_std(&iterations);
    let result = ExperimentResult {
        problem: problem.name().to_string(),
        optimizer: config.optimizer.short_name().to_string(),
        converged: iterations.len() as u64,
        total: per_run.len() as u64,
        per_run,
        mean_iterations,
        std_iterations,
    };
    Ok(ExperimentOutput { result, traces })
}

/// Runs the configured experiment with full traces, without touching the
/// filesystem.
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentOutput, BenchError> {
    execute_with(config, true)
}

/// Status-only execution: statistics are exact, traces carry no rows.
pub(crate) fn execute_lean(config: &ExperimentConfig) -> Result<ExperimentOutput, BenchError> {
    execute_with(config, false)
}

/// Runs the experiment and, when the config names an output directory,
/// writes one trace CSV per run plus the one-row summary.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, BenchError> {
    let output = execute(config)?;
    if let Some(dir) = &config.output_dir {
        write_outputs(dir, &output)?;
    }
    Ok(output)
}

/// Writes `summary.csv` and per-run `{problem}_{optimizer}_run{NNNN}.csv`
/// files; a second invocation with the same output is byte-identical.
pub fn write_outputs(dir: &Path, output: &ExperimentOutput) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir)?;
    let summary = csvio::summary_csv(std::slice::from_ref(&output.result));
    std::fs::write(dir.join("summary.csv"), summary)?;
    for trace in &output.traces {
        let name = format!(
            "{}_{}_run{:04}.csv",
            output.result.problem, output.result.optimizer, trace.run
        );
        std::fs::write(dir.join(name), csvio::trace_csv(&trace.rows))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::config::{HyperSpec, OptimizerSpec, ProblemSpec};
    use crate::problems::NoiseSpec;

    fn curveball_rosenbrock(repeats: u64) -> ExperimentConfig {
        ExperimentConfig {
            problem: ProblemSpec::Rosenbrock { noise: NoiseSpec::DETERMINISTIC },
            optimizer: OptimizerSpec::Curveball {
                hyper: HyperSpec::Auto,
                lambda0: 10.0,
                curvature: true,
            },
            repeats,
            tolerance: 1e-4,
            max_iterations: 1000,
            seed: 11,
            output_dir: None,
        }
    }

    #[test]
    fn mean_std_examples() {
        let (mean, std) = mean_std(&[10.0, 12.0, 14.0]);
        assert_eq!(mean, Some(12.0));
        assert_eq!(std, Some(2.0));
        assert_eq!(mean_std(&[]), (None, None));
        assert_eq!(mean_std(&[5.0]), (Some(5.0), None));
    }

    #[test]
    fn converged_start_reports_zero_iterations() {
        let problem = ProblemSpec::Rosenbrock { noise: NoiseSpec::DETERMINISTIC }
            .build(0)
            .unwrap();
        let spec = OptimizerSpec::Sgd { alpha: Some(1e-3), rho: Some(0.9) };
        let mut opt = spec.build(2).unwrap();
        let mut rng = Rng::new(0);
        // Tolerance above the starting loss: the pre-loop check fires.
        let f0 = problem.evaluate(&problem.initial_point(&mut rng), &problem.full_batch()).loss();
        let trace =
            single_run(problem.as_ref(), opt.as_mut(), f0 + 1.0, 10, &mut rng, 0);
        assert_eq!(trace.status, RunStatus::Converged { iterations: 0 });
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.rows[0].iteration, 0);
    }

    #[test]
    fn repeated_execution_is_identical() {
        let config = curveball_rosenbrock(2);
        let a = execute(&config).unwrap();
        let b = execute(&config).unwrap();
        assert_eq!(a, b);
        let csv_a: Vec<String> = a.traces.iter().map(|t| csvio::trace_csv(&t.rows)).collect();
        let csv_b: Vec<String> = b.traces.iter().map(|t| csvio::trace_csv(&t.rows)).collect();
        assert_eq!(csv_a, csv_b);
        assert_eq!(
            csvio::summary_csv(std::slice::from_ref(&a.result)),
            csvio::summary_csv(std::slice::from_ref(&b.result))
        );
    }

    #[test]
    fn pool_width_does_not_change_results() {
        let config = curveball_rosenbrock(6);
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| execute(&config).unwrap());
        let wide = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| execute(&config).unwrap());
        assert_eq!(serial, wide);
    }

    #[test]
    fn lean_execution_matches_statistics() {
        let config = curveball_rosenbrock(3);
        let full = execute(&config).unwrap();
        let lean = execute_lean(&config).unwrap();
        assert_eq!(full.result, lean.result);
        assert!(lean.traces.iter().all(|t| t.rows.is_empty()));
    }

    #[test]
    fn divergent_run_is_abandoned() {
        let config = ExperimentConfig {
            optimizer: OptimizerSpec::Sgd { alpha: Some(1.0), rho: Some(0.9) },
            repeats: 1,
            max_iterations: 10_000,
            ..curveball_rosenbrock(1)
        };
        let out = execute(&config).unwrap();
        assert_eq!(out.result.converged, 0);
        // The divergence guard fires long before the iteration cap.
        assert!(out.traces[0].rows.len() < 100, "rows: {}", out.traces[0].rows.len());
    }

    #[test]
    fn summary_recomputed_from_traces_matches() {
        for (config, relative) in [
            (curveball_rosenbrock(4), false),
            (
                ExperimentConfig {
                    problem: ProblemSpec::RahimiRecht {
                        d_in: 4,
                        hidden: 4,
                        d_out: 4,
                        n: 32,
                        kappa: 100.0,
                    },
                    max_iterations: 300,
                    ..curveball_rosenbrock(4)
                },
                true,
            ),
        ] {
            let out = execute(&config).unwrap();
            let parsed: Vec<Vec<TraceRow>> = out
                .traces
                .iter()
                .map(|t| csvio::parse_trace_csv(&csvio::trace_csv(&t.rows)).unwrap())
                .collect();
            let recomputed = csvio::summarize_rows(
                &out.result.problem,
                &out.result.optimizer,
                config.tolerance,
                relative,
                &parsed,
            );
            assert_eq!(recomputed, out.result);
        }
    }

    #[test]
    fn trace_iterations_increase_and_match_status() {
        let config = curveball_rosenbrock(2);
        let out = execute(&config).unwrap();
        for trace in &out.traces {
            for pair in trace.rows.windows(2) {
                assert!(pair[1].iteration > pair[0].iteration);
            }
            if let RunStatus::Converged { iterations } = trace.status {
                let last = trace.rows.last().unwrap();
                assert_eq!(last.iteration, iterations);
                assert!(last.true_loss <= config.tolerance);
            }
        }
        assert_eq!(out.result.total, 2);
        assert_eq!(out.result.converged, 2);
    }
}
