//! Declarative experiment descriptions: which problem, which optimizer,
//! how many repeats, and where the artifacts go. Configs are single JSON
//! documents; every field beyond the problem and optimizer has a default.
//!
//! Baseline learning rates may be left out of the config entirely, which
//! marks them as grid placeholders: `run` refuses such configs and `grid`
//! sweeps them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Problem;
use crate::numerics::Rng;
use crate::optim::{
    Adam, Bfgs, Curveball, CurveballConfig, HyperMode, Levenberg, Optimizer, Sgd,
};
use crate::problems::{
    make_blobs, make_mlp, make_rahimi_recht, Activation, NoiseSpec, ProblemError, Quadratic,
    Rosenbrock,
};

/// Run indexes derive RNG streams `0..repeats`; the dataset stream sits at
/// the far end of the index space so it can never collide with a run.
const DATA_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Which objective to build. Data-backed problems draw their dataset from a
/// stream derived from the experiment seed, so one config names one problem
/// instance and all optimizers given the same seed see the same data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Rosenbrock {
        #[serde(default = "default_noise")]
        noise: NoiseSpec,
    },
    RahimiRecht {
        #[serde(default = "default_rr_dim")]
        d_in: usize,
        #[serde(default = "default_rr_dim")]
        hidden: usize,
        #[serde(default = "default_rr_dim")]
        d_out: usize,
        #[serde(default = "default_rr_samples")]
        n: usize,
        #[serde(default = "default_rr_kappa")]
        kappa: f64,
    },
    MlpBlobs {
        classes: usize,
        per_class: usize,
        dim: usize,
        #[serde(default = "default_separation")]
        separation: f64,
        /// Output widths of each layer; the last must equal `classes`.
        layers: Vec<usize>,
        #[serde(default = "default_activation")]
        activation: Activation,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
    },
    Quadratic { dim: usize },
}

fn default_noise() -> NoiseSpec {
    NoiseSpec::DETERMINISTIC
}
fn default_rr_dim() -> usize {
    10
}
fn default_rr_samples() -> usize {
    1000
}
fn default_rr_kappa() -> f64 {
    1e5
}
fn default_separation() -> f64 {
    3.0
}
fn default_activation() -> Activation {
    Activation::Tanh
}
fn default_batch_size() -> usize {
    128
}

impl ProblemSpec {
    /// Builds the problem instance; all data randomness comes from the
    /// dedicated dataset stream of `seed`.
    pub fn build(&self, seed: u64) -> Result<Box<dyn Problem>, ConfigError> {
        let mut rng = Rng::new(seed).derive(DATA_STREAM);
        match self {
            ProblemSpec::Rosenbrock { noise } => {
                let noise = NoiseSpec::new(noise.lo, noise.hi)?;
                Ok(Box::new(Rosenbrock::new(noise)))
            }
            ProblemSpec::RahimiRecht { d_in, hidden, d_out, n, kappa } => Ok(Box::new(
                make_rahimi_recht(*d_in, *hidden, *d_out, *n, *kappa, &mut rng)?,
            )),
            ProblemSpec::MlpBlobs {
                classes,
                per_class,
                dim,
                separation,
                layers,
                activation,
                batch_size,
            } => {
                if *classes == 0 || *per_class == 0 || *dim == 0 {
                    return Err(ConfigError::Invalid(
                        "blob dataset sizes must be at least 1".into(),
                    ));
                }
                if !separation.is_finite() || *separation < 0.0 {
                    return Err(ConfigError::Invalid(format!(
                        "cluster separation {separation} must be finite and nonnegative"
                    )));
                }
                if *batch_size == 0 {
                    return Err(ConfigError::Invalid("batch size must be at least 1".into()));
                }
                let data = make_blobs(*classes, *per_class, *dim, *separation, &mut rng);
                let mlp = make_mlp(layers, *activation, data, &mut rng)?;
                Ok(Box::new(mlp.with_batch_size(*batch_size)))
            }
            ProblemSpec::Quadratic { dim } => {
                if *dim == 0 {
                    return Err(ConfigError::Invalid("quadratic dimension must be at least 1".into()));
                }
                Ok(Box::new(Quadratic::random_spd(*dim, &mut rng)))
            }
        }
    }
}

/// Fixed or solved-per-step (beta, rho) for the second-order method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum HyperSpec {
    Auto,
    Fixed { beta: f64, rho: f64 },
}

impl Default for HyperSpec {
    fn default() -> HyperSpec {
        HyperSpec::Auto
    }
}

/// Which optimizer to run. `sgd` and `adam` treat absent learning-rate
/// fields as grid placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerSpec {
    Curveball {
        #[serde(default)]
        hyper: HyperSpec,
        #[serde(default = "default_lambda0")]
        lambda0: f64,
        #[serde(default = "default_curvature")]
        curvature: bool,
    },
    Sgd {
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        rho: Option<f64>,
    },
    Adam {
        #[serde(default)]
        alpha: Option<f64>,
    },
    Levenberg {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_levenberg_lambda")]
        lambda0: f64,
    },
    Bfgs,
}

/// Benchmark configs default to light damping, which reproduces the
/// small-problem iteration tables; the library constructor keeps the
/// conservative large-model default.
fn default_lambda0() -> f64 {
    1.0
}
fn default_curvature() -> bool {
    true
}
fn default_alpha() -> f64 {
    1.0
}
fn default_levenberg_lambda() -> f64 {
    1.0
}

impl OptimizerSpec {
    pub fn short_name(&self) -> &'static str {
        match self {
            OptimizerSpec::Curveball { .. } => "curveball",
            OptimizerSpec::Sgd { .. } => "sgd",
            OptimizerSpec::Adam { .. } => "adam",
            OptimizerSpec::Levenberg { .. } => "levenberg",
            OptimizerSpec::Bfgs => "bfgs",
        }
    }

    /// True when some hyperparameter is a grid placeholder.
    pub fn is_grid(&self) -> bool {
        matches!(
            self,
            OptimizerSpec::Sgd { alpha: None, .. }
                | OptimizerSpec::Sgd { rho: None, .. }
                | OptimizerSpec::Adam { alpha: None }
        )
    }

    /// Instantiates the optimizer for a problem of `params` parameters.
    pub fn build(&self, params: usize) -> Result<Box<dyn Optimizer>, ConfigError> {
        match self {
            OptimizerSpec::Curveball { hyper, lambda0, curvature } => {
                let hyper = match hyper {
                    HyperSpec::Auto => HyperMode::Auto,
                    HyperSpec::Fixed { beta, rho } => HyperMode::Fixed { beta: *beta, rho: *rho },
                };
                let config = CurveballConfig {
                    lambda0: *lambda0,
                    hyper,
                    curvature: *curvature,
                    ..CurveballConfig::default()
                };
                Ok(Box::new(Curveball::new(params, config)))
            }
            OptimizerSpec::Sgd { alpha: Some(alpha), rho: Some(rho) } => {
                Ok(Box::new(Sgd::new(params, *alpha, *rho)))
            }
            OptimizerSpec::Adam { alpha: Some(alpha) } => Ok(Box::new(Adam::new(params, *alpha))),
            OptimizerSpec::Sgd { .. } | OptimizerSpec::Adam { .. } => {
                Err(ConfigError::Invalid(format!(
                    "{} has grid placeholders; run it through the grid command",
                    self.short_name()
                )))
            }
            OptimizerSpec::Levenberg { alpha, lambda0 } => {
                Ok(Box::new(Levenberg::new(*alpha, *lambda0)))
            }
            OptimizerSpec::Bfgs => Ok(Box::new(Bfgs::new(params))),
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} must be finite and positive, got {v}")))
            }
        };
        let momentum = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} must lie in [0, 1), got {v}")))
            }
        };
        match self {
            OptimizerSpec::Curveball { hyper, lambda0, .. } => {
                if !lambda0.is_finite() || *lambda0 < 0.0 {
                    return Err(ConfigError::Invalid(format!(
                        "damping must be finite and nonnegative, got {lambda0}"
                    )));
                }
                if let HyperSpec::Fixed { beta, rho } = hyper {
                    if !beta.is_finite() || !rho.is_finite() {
                        return Err(ConfigError::Invalid(
                            "fixed (beta, rho) must be finite".into(),
                        ));
                    }
                }
                Ok(())
            }
            OptimizerSpec::Sgd { alpha, rho } => {
                if let Some(a) = alpha {
                    positive("sgd learning rate", *a)?;
                }
                if let Some(r) = rho {
                    momentum("sgd momentum", *r)?;
                }
                Ok(())
            }
            OptimizerSpec::Adam { alpha } => {
                alpha.map_or(Ok(()), |a| positive("adam learning rate", a))
            }
            OptimizerSpec::Levenberg { alpha, lambda0 } => {
                positive("levenberg step scale", *alpha)?;
                if !lambda0.is_finite() || *lambda0 < 0.0 {
                    return Err(ConfigError::Invalid(format!(
                        "damping must be finite and nonnegative, got {lambda0}"
                    )));
                }
                Ok(())
            }
            OptimizerSpec::Bfgs => Ok(()),
        }
    }
}

/// One benchmark: a problem, an optimizer, and the repeat/stop policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub optimizer: OptimizerSpec,
    #[serde(default = "default_repeats")]
    pub repeats: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u64,
    #[serde(default)]
    pub seed: u64,
    /// Directory for trace and summary CSVs; no files are written when absent.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_repeats() -> u64 {
    100
}
fn default_tolerance() -> f64 {
    1e-4
}
fn default_max_iterations() -> u64 {
    100_000
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.repeats < 1 {
            return Err(ConfigError::Invalid("repeats must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(ConfigError::Invalid(format!(
                "tolerance must be finite and positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations < 1 {
            return Err(ConfigError::Invalid("max_iterations must be at least 1".into()));
        }
        if let ProblemSpec::Rosenbrock { noise } = &self.problem {
            NoiseSpec::new(noise.lo, noise.hi)?;
        }
        self.optimizer.validate()
    }
}

/// Reads, parses, and validates a JSON config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    let config: ExperimentConfig = serde_json::from_str(&text)?;
    config.validate()?;
    Ok(config)
}
