//! Per-iteration cost measurement: median wall time and differentiation
//! pass counts per optimizer on one problem. Medians resist scheduler
//! noise; a warmup window absorbs allocator and cache effects. Every
//! optimizer sees the same starting point and the same batch sequence.

use std::time::Instant;

use super::config::OptimizerSpec;
use super::BenchError;
use crate::autodiff::{PassCounts, Problem};
use crate::numerics::Rng;

pub const DEFAULT_WARMUP: u64 = 10;
pub const DEFAULT_TIMED: u64 = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostEntry {
    pub optimizer: String,
    /// Median wall time of one successful step.
    pub median_step_ns: u64,
    /// Successful timed steps (failed attempts are not counted).
    pub steps: u64,
    /// Passes summed over the counted steps.
    pub passes: PassCounts,
}

impl CostEntry {
    /// Mean forward-mode passes per step; trust-region bookkeeping makes
    /// this non-integral for some optimizers.
    pub fn fmad_per_step(&self) -> f64 {
        self.passes.fmad as f64 / self.steps.max(1) as f64
    }

    pub fn rmad_per_step(&self) -> f64 {
        self.passes.rmad as f64 / self.steps.max(1) as f64
    }

    pub fn forward_per_step(&self) -> f64 {
        self.passes.forward as f64 / self.steps.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub problem: String,
    pub warmup: u64,
    pub entries: Vec<CostEntry>,
}

impl CostReport {
    pub fn entry(&self, optimizer: &str) -> Option<&CostEntry> {
        self.entries.iter().find(|e| e.optimizer == optimizer)
    }
}

/// Times `timed` iterations of each optimizer after `warmup` untimed ones.
/// The per-run RNG stream is identical across optimizers, so all of them
/// draw the same batches; the comparison is per-iteration cost, not
/// progress.
pub fn measure_cost(
    problem: &dyn Problem,
    specs: &[OptimizerSpec],
    warmup: u64,
    timed: u64,
    seed: u64,
) -> Result<CostReport, BenchError> {
    let mut entries = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut rng = Rng::new(seed).derive(0);
        let mut optimizer = spec.build(problem.param_count())?;
        let mut w = problem.initial_point(&mut rng);
        let mut samples = Vec::with_capacity(timed as usize);
        let mut passes = PassCounts::default();
        for i in 0..warmup + timed {
            let batch = problem.sample_batch(&mut rng);
            let started = Instant::now();
            let outcome = optimizer.step(problem, &w, &batch);
            let elapsed = started.elapsed();
            if let Ok((next, info)) = outcome {
                w = next;
                if i >= warmup {
                    samples.push(elapsed.as_nanos() as u64);
                    passes = passes + info.passes;
                }
            }
        }
        samples.sort_unstable();
        let median_step_ns = samples.get(samples.len() / 2).copied().unwrap_or(0);
        entries.push(CostEntry {
            optimizer: spec.short_name().to_string(),
            median_step_ns,
            steps: samples.len() as u64,
            passes,
        });
    }
    Ok(CostReport { problem: problem.name().to_string(), warmup, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::config::HyperSpec;
    use crate::numerics::Rng;
    use crate::problems::{make_blobs, make_mlp, Activation};

    #[test]
    fn pass_counts_follow_the_step_contract() {
        let mut rng = Rng::new(5);
        let data = make_blobs(3, 30, 2, 3.0, &mut rng);
        let problem = make_mlp(&[4, 3], Activation::Tanh, data, &mut rng)
            .unwrap()
            .with_batch_size(8);
        let specs = [
            OptimizerSpec::Curveball { hyper: HyperSpec::Auto, lambda0: 10.0, curvature: true },
            OptimizerSpec::Sgd { alpha: Some(1e-2), rho: Some(0.9) },
        ];
        let report = measure_cost(&problem, &specs, 2, 20, 1).unwrap();

        let cb = report.entry("curveball").unwrap();
        assert_eq!(cb.steps, 20);
        assert_eq!(cb.fmad_per_step(), 2.0);
        assert_eq!(cb.rmad_per_step(), 1.0);
        // One objective evaluation per step plus the periodic trust check.
        assert!(cb.forward_per_step() > 1.0 && cb.forward_per_step() <= 1.25);

        let sgd = report.entry("sgd").unwrap();
        assert_eq!(sgd.fmad_per_step(), 0.0);
        assert_eq!(sgd.rmad_per_step(), 1.0);
        assert_eq!(sgd.forward_per_step(), 1.0);
    }
}
