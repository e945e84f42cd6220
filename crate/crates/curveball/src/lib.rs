//! Second-order stochastic optimization built around an interleaved update
//! scheme: instead of solving the Newton system to completion at every
//! iteration, a single preconditioned-gradient step on the Newton system is
//! interleaved with each parameter update. Curvature enters only through
//! Hessian-vector products, so the per-step cost stays within a small constant
//! factor of momentum SGD.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`]: dense row-major tensors, a counter-based deterministic RNG,
//!   and the few small solvers everything else leans on.
//! * [`autodiff`]: a tape of tensor-level primitives with forward-tangent and
//!   reverse sweeps, loss curvature in closed form, and the [`autodiff::Problem`]
//!   abstraction that optimizers consume.
//! * [`problems`]: benchmark objectives, from a two-parameter stochastic
//!   valley to multilayer perceptrons on synthetic and IDX-format data.
//! * [`optim`]: the interleaved second-order method plus momentum SGD, Adam,
//!   a damped Newton baseline, and BFGS with a strong-Wolfe line search.
//! * [`bench`]: experiment configuration, a repeated-run harness with
//!   deterministic per-run seed streams, grid search, cost measurement, CSV
//!   emission, and a self-check suite.

pub mod autodiff;
pub mod bench;
pub mod numerics;
pub mod optim;
pub mod problems;
