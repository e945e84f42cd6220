//! Dense curvature matrices for baselines and oracle tests.
//!
//! The matrix-free product in [`super::Evaluation`] is the production path;
//! these routines exist so that path has something independent to be checked
//! against, and so the damped-Newton baseline can factorize real Hessians on
//! small problems.

use super::problem::{Batch, Evaluation, Problem};
use super::AdError;
use crate::numerics::{matmul, matmul_nt, Tensor};

/// Parameter cap for problems that provide their Hessian in closed form.
pub const HESSIAN_CAP: usize = 10_000;
/// Parameter cap for the finite-difference fallback, which costs two
/// gradient evaluations per column.
pub const FD_HESSIAN_CAP: usize = 500;

/// Dense Hessian of the objective at `(w, batch)`: the problem's closed form
/// when it has one, otherwise central finite differences of the gradient with
/// step `1e-5 * (1 + max|w|)`. The finite-difference route is deliberately
/// independent of the forward-tangent code so it can arbitrate tangent bugs.
pub fn full_hessian(problem: &dyn Problem, w: &Tensor, batch: &Batch) -> Result<Tensor, AdError> {
    let p = problem.param_count();
    if p <= HESSIAN_CAP {
        if let Some(h) = problem.analytic_hessian(w, batch) {
            assert_eq!(h.shape(), &[p, p], "analytic Hessian must be p x p");
            return Ok(h);
        }
    } else {
        return Err(AdError::TooLarge { params: p, cap: HESSIAN_CAP });
    }
    if p > FD_HESSIAN_CAP {
        return Err(AdError::TooLarge { params: p, cap: FD_HESSIAN_CAP });
    }
    let step = 1e-5 * (1.0 + w.norm_inf());
    let mut out = Tensor::zeros(&[p, p]);
    for j in 0..p {
        let mut wp = w.clone();
        wp.data_mut()[j] += step;
        let mut wm = w.clone();
        wm.data_mut()[j] -= step;
        let gp = problem.evaluate(&wp, batch).gradient().clone();
        let gm = problem.evaluate(&wm, batch).gradient().clone();
        for i in 0..p {
            out.set(i, j, (gp.data()[i] - gm.data()[i]) / (2.0 * step));
        }
    }
    Ok(out)
}

/// Explicit Gauss-Newton matrix assembled column by column from basis
/// cotangents: the model Jacobian is materialized with one reverse pass per
/// output coordinate, the loss curvature with one product per coordinate,
/// and the three factors are multiplied densely. Strictly an oracle; cost
/// grows with `p * batch * outputs`.
pub fn brute_force_gauss_newton(eval: &Evaluation) -> Result<Tensor, AdError> {
    let outs = eval.outputs();
    let (batch, width) = (outs.rows(), outs.cols());
    let n = batch * width;
    let p = eval.param_count();

    let mut jphi = Tensor::zeros(&[p, n]);
    for k in 0..n {
        let mut seed = Tensor::zeros(&[batch, width]);
        seed.data_mut()[k] = 1.0;
        let col = eval.vjp(&seed);
        for i in 0..p {
            jphi.set(i, k, col.data()[i]);
        }
    }

    let curvature = eval.loss_curvature();
    let mut hl = Tensor::zeros(&[n, n]);
    for k in 0..n {
        let mut seed = Tensor::zeros(&[batch, width]);
        seed.data_mut()[k] = 1.0;
        let col = curvature.product(&seed)?;
        for i in 0..n {
            hl.set(i, k, col.data()[i]);
        }
    }

    let tmp = matmul(&jphi, &hl);
    Ok(matmul_nt(&tmp, &jphi))
}
