//! Adam optimizer with bias-corrected moment estimates, over the named
//! parameter tensors of a model.

use super::model::{ModelParams, PARAM_NAMES};
use super::tensor::Tensor;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AdamState {
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new() -> AdamState {
        AdamState::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One optimizer step. `lr_of` maps a parameter name to its learning rate,
/// supporting the two-group student schedule.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &BTreeMap<&'static str, Tensor>,
    state: &mut AdamState,
    hyper: &AdamHyper,
    lr_of: &dyn Fn(&str) -> f64,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for name in PARAM_NAMES {
        let Some(grad) = grads.get(name) else {
            continue;
        };
        let lr = lr_of(name);
        let p = params.get_mut(name);
        let m = state
            .m
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(grad.shape()));
        let v = state
            .v
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(grad.shape()));
        for ((pv, gv), (mv, vv)) in p
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut()))
        {
            *mv = hyper.beta1 * *mv + (1.0 - hyper.beta1) * gv;
            *vv = hyper.beta2 * *vv + (1.0 - hyper.beta2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::ModelConfig;

    fn tiny_params() -> ModelParams {
        ModelParams::init(
            ModelConfig {
                num_sensors: 5,
                feature_dim: 4,
                visual_adapter_dim: 2,
                hidden_size: 3,
            },
            1,
        )
    }

    fn grads_with(name: &'static str, t: Tensor) -> BTreeMap<&'static str, Tensor> {
        let mut g = BTreeMap::new();
        g.insert(name, t);
        g
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = tiny_params();
        let before = p.clone();
        let grads = grads_with("head.b", Tensor::zeros(p.head_b.shape()));
        let mut state = AdamState::new();
        adam_step(&mut p, &grads, &mut state, &AdamHyper::default(), &|_| 1e-3);
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_magnitude_is_lr_signed() {
        let mut p = tiny_params();
        let before = p.log_var_pose.item();
        let grads = grads_with("log_var.pose", Tensor::scalar(0.37));
        let mut state = AdamState::new();
        let lr = 1e-3;
        adam_step(&mut p, &grads, &mut state, &AdamHyper::default(), &|_| lr);
        let delta = p.log_var_pose.item() - before;
        // Bias correction gives m_hat/sqrt(v_hat) ~ sign(g) on step one.
        assert!((delta + lr).abs() < 1e-6, "delta {delta}");

        let mut p2 = tiny_params();
        let grads = grads_with("log_var.pose", Tensor::scalar(-2.2));
        let mut state = AdamState::new();
        adam_step(&mut p2, &grads, &mut state, &AdamHyper::default(), &|_| lr);
        let delta = p2.log_var_pose.item() - before;
        assert!((delta - lr).abs() < 1e-6, "delta {delta}");
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut p = tiny_params();
        let mut state = AdamState::new();
        let grads = grads_with("log_var.trans", Tensor::scalar(1.0));
        let mut prev = p.log_var_trans.item();
        for _ in 0..100 {
            adam_step(&mut p, &grads, &mut state, &AdamHyper::default(), &|_| 1e-2);
            let now = p.log_var_trans.item();
            assert!(now < prev, "{now} !< {prev}");
            prev = now;
        }
        assert_eq!(state.step_count(), 100);
    }

    #[test]
    fn per_group_learning_rates() {
        let mut p = tiny_params();
        let before_enc = p.enc_b1.clone();
        let before_head = p.head_b.clone();
        let mut grads = BTreeMap::new();
        grads.insert("enc.b1", Tensor::row(vec![1.0; before_enc.cols()]));
        grads.insert("head.b", Tensor::row(vec![1.0; before_head.cols()]));
        let mut state = AdamState::new();
        adam_step(
            &mut p,
            &grads,
            &mut state,
            &AdamHyper::default(),
            &|name| if name.starts_with("enc.") { 1e-3 } else { 1e-4 },
        );
        let d_enc = (p.enc_b1.data()[0] - before_enc.data()[0]).abs();
        let d_head = (p.head_b.data()[0] - before_head.data()[0]).abs();
        assert!((d_enc / d_head - 10.0).abs() < 1e-6);
    }
}
