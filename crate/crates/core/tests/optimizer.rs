//! RAdam against a straight-line scalar reimplementation of the published rule.

use clickseg::train::{radam_step, OptimizerConfig, OptimizerState, ParamSlot};

/// Scalar RAdam, written out step by step.
struct ScalarRadam {
    m: f64,
    v: f64,
    t: i32,
}

impl ScalarRadam {
    fn step(&mut self, x: f64, g: f64, lr: f64) -> (f64, bool) {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
        self.t += 1;
        let t = self.t;
        self.m = b1 * self.m + (1.0 - b1) * g;
        self.v = b2 * self.v + (1.0 - b2) * g * g;
        let m_hat = self.m / (1.0 - b1.powi(t));
        let rho_inf = 2.0 / (1.0 - b2) - 1.0;
        let rho_t = rho_inf - 2.0 * f64::from(t) * b2.powi(t) / (1.0 - b2.powi(t));
        if rho_t > 4.0 {
            let v_hat = (self.v / (1.0 - b2.powi(t))).sqrt();
            let r_t = ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt();
            (x - lr * r_t * m_hat / (v_hat + eps), true)
        } else {
            (x - lr * m_hat, false)
        }
    }
}

#[test]
fn quadratic_trajectory_matches_scalar_reference() {
    // f(x) = 1.5 (x - 1)^2
    let f = |x: f64| 1.5 * (x - 1.0) * (x - 1.0);
    let grad = |x: f64| 3.0 * (x - 1.0);
    let lr = 0.01;
    let mut reference = ScalarRadam { m: 0.0, v: 0.0, t: 0 };
    let mut state = OptimizerState::new(OptimizerConfig::default());
    let mut x_ref = 3.0;
    let mut x = [3.0f64];
    let mut last_value = f(x[0]);
    let mut warmup_over = false;
    for step in 1..=400 {
        let g = [grad(x[0])];
        let (next, rectified) = reference.step(x_ref, grad(x_ref), lr);
        x_ref = next;
        let mut slots = [ParamSlot {
            name: "x",
            weight_decay: 0.0,
            value: &mut x,
            grad: &g,
        }];
        radam_step(&mut slots, &mut state, lr).unwrap();
        assert_eq!(state.last_rectified, Some(rectified), "branch differs at step {step}");
        assert!((x[0] - x_ref).abs() <= 1e-10, "step {step}: {} vs {x_ref}", x[0]);
        let value = f(x[0]);
        if warmup_over {
            assert!(value < last_value, "step {step}: {value} >= {last_value}");
        }
        warmup_over |= rectified;
        last_value = value;
    }
    assert!(warmup_over);
    assert!(f(x[0]) < f(3.0) * 0.5);
}
