//! Scratch measurement harness, not part of the deliverable.

use curveball::bench::config::{HyperSpec, OptimizerSpec, ProblemSpec};
use curveball::bench::train_fixed_iterations;
use curveball::numerics::Rng;

fn main() {
    for sep in [1.0, 1.5] {
        println!("=== separation {sep} ===");
        let spec = ProblemSpec::MlpBlobs {
            classes: 10,
            per_class: 500,
            dim: 32,
            separation: sep,
            layers: vec![128, 64, 32, 10],
            activation: curveball::problems::Activation::Tanh,
            batch_size: 128,
        };
        let problem = spec.build(0).unwrap();
        let params = {
            let mut rng = Rng::new(99);
            problem.initial_point(&mut rng).len()
        };
        let panel: Vec<(String, OptimizerSpec)> = vec![
            (
                "cb l10".into(),
                OptimizerSpec::Curveball { hyper: HyperSpec::Auto, lambda0: 10.0, curvature: true },
            ),
            (
                "cb l1".into(),
                OptimizerSpec::Curveball { hyper: HyperSpec::Auto, lambda0: 1.0, curvature: true },
            ),
            ("sgd 1 r9".into(), OptimizerSpec::Sgd { alpha: Some(1.0), rho: Some(0.9) }),
            ("sgd 1 r99".into(), OptimizerSpec::Sgd { alpha: Some(1.0), rho: Some(0.99) }),
            ("sgd .1 r9".into(), OptimizerSpec::Sgd { alpha: Some(0.1), rho: Some(0.9) }),
            ("sgd .1 r99".into(), OptimizerSpec::Sgd { alpha: Some(0.1), rho: Some(0.99) }),
            ("sgd .01 r99".into(), OptimizerSpec::Sgd { alpha: Some(0.01), rho: Some(0.99) }),
            ("adam 1e-1".into(), OptimizerSpec::Adam { alpha: Some(0.1) }),
            ("adam 1e-2".into(), OptimizerSpec::Adam { alpha: Some(1e-2) }),
            ("adam 1e-3".into(), OptimizerSpec::Adam { alpha: Some(1e-3) }),
        ];
        for (label, spec) in panel {
            let mut optimizer = spec.build(params).unwrap();
            let mut rng = Rng::new(0).derive(1);
            let (_, loss) = train_fixed_iterations(problem.as_ref(), optimizer.as_mut(), 500, &mut rng);
            println!("{label:>12}  loss {loss:.6}");
        }
    }
}
