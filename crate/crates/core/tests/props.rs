//! Property tests for the tensor core, LARS step, and schedules.

use proptest::prelude::*;

use lars_core::nn::{GroupKind, ParamGroup};
use lars_core::optim::{global_lr, lars_step, Decay, OptimizerConfig, OptimizerKind, ScheduleSpec};
use lars_core::tensor::Tensor;

fn values(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, 1..max_len)
}

fn lars_group(value: &[f64], grad: &[f64]) -> ParamGroup {
    let mut g = ParamGroup::new("w", GroupKind::Weight, Tensor::from_slice(value));
    g.grad = Tensor::from_slice(grad);
    g
}

fn bare_lars(base_lr: f64) -> OptimizerConfig {
    OptimizerConfig::new(OptimizerKind::Lars, base_lr, usize::MAX / 2)
}

proptest! {
    #[test]
    fn norm_scale_homogeneity(v in values(32), c in -1000.0f64..1000.0) {
        let t = Tensor::from_slice(&v);
        let direct = t.scale(c).l2_norm().unwrap();
        let expected = c.abs() * t.l2_norm().unwrap();
        let tol = 1e-12 * expected.max(1e-300);
        prop_assert!((direct - expected).abs() <= tol, "{direct} vs {expected}");
    }

    #[test]
    fn norm_zero_iff_all_zero(v in values(32)) {
        let t = Tensor::from_slice(&v);
        let all_zero = v.iter().all(|&x| x == 0.0);
        prop_assert_eq!(t.l2_norm().unwrap() == 0.0, all_zero);
    }

    #[test]
    fn matmul_identity_is_bitwise(v in prop::collection::vec(-100.0f64..100.0, 9)) {
        let t = Tensor::new(vec![3, 3], v).unwrap();
        let i = Tensor::identity(3);
        let left = i.matmul(&t).unwrap();
        let right = t.matmul(&i).unwrap();
        for (a, b) in left.data().iter().zip(t.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in right.data().iter().zip(t.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn lars_update_ignores_gradient_magnitude(
        w in values(16),
        g_seed in values(16),
        c in 1e-3f64..1e3,
    ) {
        let n = w.len().min(g_seed.len());
        let w = &w[..n];
        let g = &g_seed[..n];
        let w_norm = Tensor::from_slice(w).l2_norm().unwrap();
        let g_norm = Tensor::from_slice(g).l2_norm().unwrap();
        prop_assume!(w_norm > 1e-6 && g_norm > 1e-6);

        let scaled: Vec<f64> = g.iter().map(|&x| x * c).collect();
        let cfg = bare_lars(0.4);
        let mut a = vec![lars_group(w, g)];
        let mut b = vec![lars_group(w, &scaled)];
        lars_step(&mut a, &cfg, 0).unwrap();
        lars_step(&mut b, &cfg, 0).unwrap();
        for (x, y) in a[0].value.data().iter().zip(b[0].value.data()) {
            let tol = 1e-12 * x.abs().max(y.abs()).max(1.0);
            prop_assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn lars_update_norm_is_bounded(
        w in values(16),
        g_seed in values(16),
        beta in 0.0f64..0.01,
        lr in 1e-3f64..2.0,
    ) {
        let n = w.len().min(g_seed.len());
        let w = &w[..n];
        let g = &g_seed[..n];
        let w_norm = Tensor::from_slice(w).l2_norm().unwrap();
        let g_norm = Tensor::from_slice(g).l2_norm().unwrap();
        prop_assume!(w_norm > 1e-6 && g_norm > 1e-6);

        let mut cfg = bare_lars(lr);
        cfg.weight_decay = beta;
        let mut groups = vec![lars_group(w, g)];
        let report = lars_step(&mut groups, &cfg, 0).unwrap();
        let bound = lr * cfg.trust_coeff * w_norm;
        let delta = report.groups[0].update_norm;
        prop_assert!(delta <= bound * (1.0 + 1e-12), "{delta} > {bound}");
        if beta == 0.0 {
            prop_assert!((delta - bound).abs() <= 1e-12 * bound, "{delta} vs {bound}");
        }
    }

    #[test]
    fn polynomial_schedule_is_monotone_after_warmup(
        base_lr in 1e-3f64..10.0,
        warmup in 0usize..50,
        extra in 10usize..200,
        power in 0.5f64..4.0,
    ) {
        let total = warmup + extra;
        let mut cfg = OptimizerConfig::new(OptimizerKind::Sgd, base_lr, total);
        cfg.schedule = ScheduleSpec {
            warmup_steps: warmup,
            warmup_init_lr: base_lr / 10.0,
            decay: Decay::Polynomial { power },
        };
        prop_assert_eq!(global_lr(&cfg, warmup).unwrap(), base_lr);
        prop_assert_eq!(global_lr(&cfg, total).unwrap(), 0.0);
        let mut prev = base_lr;
        for t in warmup..=total {
            let lr = global_lr(&cfg, t).unwrap();
            prop_assert!(lr <= prev + 1e-15);
            prev = lr;
        }
    }
}
