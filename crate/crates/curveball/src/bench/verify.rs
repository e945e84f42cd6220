//! Release-gate self checks: every oracle and reduction the rest of the
//! code base leans on, run as named suites with a human-readable report.
//! These deliberately re-derive results through independent routes (finite
//! differences, dense matrices, brute-force products) rather than calling
//! the code under test twice.

use crate::autodiff::{brute_force_gauss_newton, Batch, Problem};
use crate::numerics::{mat_vec, solve_2x2, solve_symmetric, Rng, Tensor};
use crate::optim::{
    curveball_step, levenberg_step, sgd_momentum_step, Curveball, CurveballConfig,
    CurveballState, HyperMode, LevenbergState, Optimizer, SgdState,
};
use crate::problems::{
    make_blobs, make_mlp, make_rahimi_recht, Activation, NoiseSpec, Quadratic, Rosenbrock,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub suite: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn gauge(suite: &'static str, worst: f64, bound: f64, what: &str) -> Check {
        Check {
            suite,
            passed: worst <= bound,
            detail: format!("{what}: worst {worst:.3e}, bound {bound:.0e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let width = self.checks.iter().map(|c| c.suite.len()).max().unwrap_or(0);
        let mut out = String::new();
        for check in &self.checks {
            let verdict = if check.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!(
                "{verdict}  {:width$}  {}\n",
                check.suite, check.detail
            ));
        }
        out
    }
}

/// Runs every suite. Exit-status handling belongs to the caller.
pub fn verify() -> VerifyReport {
    VerifyReport {
        checks: vec![
            rng_determinism(),
            linear_solvers(),
            adjoint_dot_test(),
            gradient_finite_difference(),
            gauss_newton_oracle(),
            heavy_ball_reduction(),
            quadratic_exactness(),
            pass_budget(),
        ],
    }
}

/// Largest relative adjoint gap `|<F v, u> - <v, G u>|` over paired probes,
/// where `F` and `G` claim to be adjoint linear maps. Public so a corrupted
/// map can be demonstrated to fail the test.
pub fn adjoint_gap(
    forward: &mut dyn FnMut(&Tensor) -> Tensor,
    reverse: &mut dyn FnMut(&Tensor) -> Tensor,
    probes: &[(Tensor, Tensor)],
) -> f64 {
    let mut worst = 0.0f64;
    for (v, u) in probes {
        let lhs = forward(v).dot(u);
        let rhs = v.dot(&reverse(u));
        let gap = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0);
        worst = worst.max(gap);
    }
    worst
}

/// Central-difference gradient with step `h`, one objective pair per
/// coordinate. Independent of every differentiation code path.
pub fn fd_gradient(problem: &dyn Problem, w: &Tensor, batch: &Batch, h: f64) -> Tensor {
    let p = w.len();
    let mut g = Tensor::zeros(&[p]);
    for j in 0..p {
        let mut wp = w.clone();
        wp.data_mut()[j] += h;
        let mut wm = w.clone();
        wm.data_mut()[j] -= h;
        let fp = problem.evaluate(&wp, batch).loss();
        let fm = problem.evaluate(&wm, batch).loss();
        g.data_mut()[j] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Relative disagreement between a gradient and its finite-difference
/// counterpart, guarded at unit scale.
pub fn gradient_gap(problem: &dyn Problem, w: &Tensor, batch: &Batch) -> f64 {
    let eval = problem.evaluate(w, batch);
    let g = eval.gradient();
    let fd = fd_gradient(problem, w, batch, 1e-6);
    let mut diff = fd;
    diff.axpy(-1.0, g);
    diff.norm() / g.norm().max(1.0)
}

fn normal_vector(n: usize, rng: &mut Rng) -> Tensor {
    Tensor::vector((0..n).map(|_| rng.normal()).collect())
}

fn normal_like(reference: &Tensor, rng: &mut Rng) -> Tensor {
    let mut out = Tensor::zeros(reference.shape());
    for x in out.data_mut() {
        *x = rng.normal();
    }
    out
}

fn rng_determinism() -> Check {
    let mut a = Rng::new(97);
    let mut b = Rng::new(97);
    let replay = (0..1000).all(|_| a.next_u64() == b.next_u64());

    // Deriving never advances the parent, so stream contents cannot depend
    // on the order in which runs are launched.
    let parent = Rng::new(97);
    let mut early = parent.derive(3);
    let _ = parent.derive(2).next_u64();
    let mut late = parent.derive(3);
    let order_free = (0..100).all(|_| early.next_u64() == late.next_u64());

    let mut base = Rng::new(97);
    let mut derived = Rng::new(97).derive(0);
    let distinct = (0..100).any(|_| base.next_u64() != derived.next_u64());

    Check {
        suite: "rng-determinism",
        passed: replay && order_free && distinct,
        detail: format!(
            "replay {}, derive order-free {}, streams distinct {}",
            replay, order_free, distinct
        ),
    }
}

fn linear_solvers() -> Check {
    let mut rng = Rng::new(11);
    let mut worst = 0.0f64;

    for _ in 0..20 {
        let a = [[rng.normal() + 3.0, rng.normal()], [rng.normal(), rng.normal() + 3.0]];
        let b = [rng.normal(), rng.normal()];
        if let Ok(x) = solve_2x2(&a, &b) {
            let r0 = a[0][0] * x[0] + a[0][1] * x[1] - b[0];
            let r1 = a[1][0] * x[0] + a[1][1] * x[1] - b[1];
            let scale = b[0].abs().max(b[1].abs()).max(1.0);
            worst = worst.max(r0.abs().max(r1.abs()) / scale);
        }
    }

    for _ in 0..5 {
        let q = Quadratic::random_spd(8, &mut rng);
        let b = normal_vector(8, &mut rng);
        let x = solve_symmetric(q.matrix(), &b).expect("SPD by construction");
        let mut r = mat_vec(q.matrix(), &x);
        r.axpy(-1.0, &b);
        worst = worst.max(r.norm() / b.norm().max(1.0));
    }

    Check::gauge("linear-solvers", worst, 1e-10, "solve residuals")
}

fn adjoint_dot_test() -> Check {
    let mut rng = Rng::new(12);
    let data = make_blobs(3, 24, 2, 3.0, &mut rng);
    let problem = make_mlp(&[5, 3], Activation::Tanh, data, &mut rng).unwrap();
    let w = problem.initial_point(&mut rng);
    let eval = problem.evaluate(&w, &Batch::Full);
    let outputs = eval.outputs();

    let probes: Vec<(Tensor, Tensor)> = (0..10)
        .map(|_| {
            (normal_vector(problem.param_count(), &mut rng), normal_like(&outputs, &mut rng))
        })
        .collect();
    let worst = adjoint_gap(&mut |v| eval.jvp(v), &mut |u| eval.vjp(u), &probes);
    Check::gauge("adjoint-dot-test", worst, 1e-10, "tangent/reverse mismatch")
}

fn gradient_finite_difference() -> Check {
    let mut rng = Rng::new(13);
    let mut worst = 0.0f64;

    let deterministic = Rosenbrock::new(NoiseSpec::DETERMINISTIC);
    let noisy = Rosenbrock::new(NoiseSpec { lo: 0.0, hi: 3.0 });
    let quadratic = Quadratic::random_spd(6, &mut rng);
    let linear = make_rahimi_recht(4, 4, 4, 32, 100.0, &mut rng).unwrap();
    let data = make_blobs(3, 24, 2, 3.0, &mut rng);
    let tanh = make_mlp(&[5, 3], Activation::Tanh, data.clone(), &mut rng).unwrap();
    let relu = make_mlp(&[5, 3], Activation::Relu, data, &mut rng).unwrap();
    let cases: [(&dyn Problem, Batch); 6] = [
        (&deterministic, Batch::Noise(1.0)),
        (&noisy, Batch::Noise(2.37)),
        (&quadratic, Batch::Full),
        (&linear, Batch::Full),
        (&tanh, Batch::Full),
        (&relu, Batch::Full),
    ];
    for (problem, batch) in cases {
        for _ in 0..3 {
            let w = problem.initial_point(&mut rng);
            worst = worst.max(gradient_gap(problem, &w, &batch));
        }
    }
    Check::gauge("gradient-finite-difference", worst, 1e-5, "gradient vs central differences")
}

fn gauss_newton_oracle() -> Check {
    let mut rng = Rng::new(14);
    let data = make_blobs(3, 20, 2, 3.0, &mut rng);
    let problem = make_mlp(&[5, 3], Activation::Tanh, data, &mut rng).unwrap();
    let p = problem.param_count();
    let w = problem.initial_point(&mut rng);
    let eval = problem.evaluate(&w, &Batch::Full);
    let dense = brute_force_gauss_newton(&eval).expect("softmax loss has curvature");

    let mut product_worst = 0.0f64;
    let mut symmetry_worst = 0.0f64;
    let mut psd_worst = 0.0f64;
    for _ in 0..10 {
        let v = normal_vector(p, &mut rng);
        let u = normal_vector(p, &mut rng);
        let (hv, _) = eval.gauss_newton_hvp(&v).unwrap();
        let mut diff = mat_vec(&dense, &v);
        let scale = diff.norm().max(1.0);
        diff.axpy(-1.0, &hv);
        product_worst = product_worst.max(diff.norm() / scale);

        let (hu, _) = eval.gauss_newton_hvp(&u).unwrap();
        let uhv = u.dot(&hv);
        let vhu = v.dot(&hu);
        symmetry_worst =
            symmetry_worst.max((uhv - vhu).abs() / uhv.abs().max(vhu.abs()).max(1.0));
        psd_worst = psd_worst.max((-v.dot(&hv)).max(0.0) / v.dot(&v));
    }

    let passed = product_worst <= 1e-8 && symmetry_worst <= 1e-10 && psd_worst <= 1e-12;
    Check {
        suite: "gauss-newton-oracle",
        passed,
        detail: format!(
            "product {product_worst:.3e} (1e-8), symmetry {symmetry_worst:.3e} (1e-10), \
             negative curvature {psd_worst:.3e} (1e-12)"
        ),
    }
}

fn heavy_ball_reduction() -> Check {
    let mut rng = Rng::new(15);
    let data = make_blobs(3, 24, 2, 3.0, &mut rng);
    let problem =
        make_mlp(&[4, 3], Activation::Tanh, data, &mut rng).unwrap().with_batch_size(8);
    let p = problem.param_count();
    // The velocity scale is a power of two, so scaling commutes with
    // rounding and the two updates agree bit for bit.
    let (beta, rho) = (0.015625, 0.9);

    let config = CurveballConfig {
        lambda0: 0.0,
        hyper: HyperMode::Fixed { beta, rho },
        curvature: false,
        ..CurveballConfig::default()
    };
    let mut cb_state = CurveballState::new(p, &config);
    let mut sgd_state = SgdState::new(p);
    let mut rng_cb = Rng::new(16).derive(0);
    let mut rng_sgd = Rng::new(16).derive(0);
    let mut w_cb = problem.initial_point(&mut rng_cb);
    let mut w_sgd = problem.initial_point(&mut rng_sgd);

    let mut identical = true;
    for _ in 0..50 {
        let batch_cb = problem.sample_batch(&mut rng_cb);
        let batch_sgd = problem.sample_batch(&mut rng_sgd);
        let (next_cb, _) = curveball_step(&mut cb_state, &problem, &w_cb, &batch_cb, &config);
        let (next_sgd, _) =
            sgd_momentum_step(&mut sgd_state, &problem, &w_sgd, &batch_sgd, beta, rho);
        w_cb = next_cb;
        w_sgd = next_sgd;
        identical &= w_cb
            .data()
            .iter()
            .zip(w_sgd.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
    }
    Check {
        suite: "heavy-ball-reduction",
        passed: identical,
        detail: if identical {
            "50 steps bit-identical to momentum descent with curvature off".into()
        } else {
            "iterates drifted from momentum descent".into()
        },
    }
}

fn quadratic_exactness() -> Check {
    let mut rng = Rng::new(17);
    let quadratic = Quadratic::random_spd(20, &mut rng);
    let floor = quadratic.min_value();

    let config = CurveballConfig {
        lambda0: 1e-10,
        lambda_min: 1e-10,
        ..CurveballConfig::default()
    };
    let mut state = CurveballState::new(20, &config);
    let mut w = quadratic.initial_point(&mut rng);
    let mut gap = f64::INFINITY;
    let mut used = 0;
    for iteration in 1..=25 {
        let (next, _) = curveball_step(&mut state, &quadratic, &w, &Batch::Full, &config);
        w = next;
        gap = quadratic.evaluate(&w, &Batch::Full).loss() - floor;
        used = iteration;
        if gap <= 1e-10 {
            break;
        }
    }

    let mut lm_state = LevenbergState::new(0.0);
    let w0 = quadratic.initial_point(&mut rng);
    let (w1, _) =
        levenberg_step(&mut lm_state, &quadratic, &w0, &Batch::Full, 1.0).expect("SPD solve");
    let lm_gap = quadratic.evaluate(&w1, &Batch::Full).loss() - floor;

    let passed = gap <= 1e-10 && lm_gap <= 1e-10;
    Check {
        suite: "quadratic-exactness",
        passed,
        detail: format!(
            "two-term recurrence gap {gap:.3e} after {used} iterations, \
             undamped Newton gap {lm_gap:.3e} after 1"
        ),
    }
}

fn pass_budget() -> Check {
    let mut rng = Rng::new(18);
    let data = make_blobs(3, 24, 2, 3.0, &mut rng);
    let problem =
        make_mlp(&[4, 3], Activation::Tanh, data, &mut rng).unwrap().with_batch_size(8);
    let mut optimizer = Curveball::new(problem.param_count(), CurveballConfig::default());
    let mut w = problem.initial_point(&mut rng);

    let mut ok = true;
    let mut detail = String::new();
    for step in 1..=10u64 {
        let batch = problem.sample_batch(&mut rng);
        let (next, info) = optimizer.step(&problem, &w, &batch).expect("plain step");
        w = next;
        let trust_step = step % 5 == 0;
        let expected_forward = if trust_step { 2 } else { 1 };
        let good = info.passes.fmad == 2
            && info.passes.rmad == 1
            && info.passes.forward == expected_forward;
        if !good && ok {
            ok = false;
            detail = format!(
                "step {step}: forward {} fmad {} rmad {}, expected {expected_forward}/2/1",
                info.passes.forward, info.passes.fmad, info.passes.rmad
            );
        }
    }
    if ok {
        detail = "2 tangent + 1 reverse per step, one extra objective each fifth step".into();
    }
    Check { suite: "pass-budget", passed: ok, detail }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_checkout_passes_every_suite() {
        let report = verify();
        assert!(report.all_passed(), "\n{}", report.render());
        assert!(report.checks.len() >= 6);
    }

    #[test]
    fn report_lists_each_suite_once() {
        let report = verify();
        let mut names: Vec<&str> = report.checks.iter().map(|c| c.suite).collect();
        let rendered = report.render();
        for name in &names {
            assert!(rendered.contains(name), "missing {name} in\n{rendered}");
        }
        names.dedup();
        assert_eq!(names.len(), report.checks.len());
    }

    /// A deliberately corrupted tangent map must trip the adjoint test;
    /// this guards the test's own sensitivity.
    #[test]
    fn sign_flipped_tangent_fails_the_dot_test() {
        let mut rng = Rng::new(19);
        let data = make_blobs(3, 24, 2, 3.0, &mut rng);
        let problem = make_mlp(&[5, 3], Activation::Tanh, data, &mut rng).unwrap();
        let w = problem.initial_point(&mut rng);
        let eval = problem.evaluate(&w, &Batch::Full);
        let outputs = eval.outputs();
        let probes: Vec<(Tensor, Tensor)> = (0..5)
            .map(|_| {
                (
                    normal_vector(problem.param_count(), &mut rng),
                    normal_like(&outputs, &mut rng),
                )
            })
            .collect();

        let honest = adjoint_gap(&mut |v| eval.jvp(v), &mut |u| eval.vjp(u), &probes);
        let flipped =
            adjoint_gap(&mut |v| eval.jvp(v).scale(-1.0), &mut |u| eval.vjp(u), &probes);
        assert!(honest <= 1e-10, "honest gap {honest}");
        assert!(flipped > 1e-2, "flipped gap {flipped} should be large");
    }
}
