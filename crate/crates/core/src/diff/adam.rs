use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::DiffError;
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-15,
        }
    }
}

/// First/second moment accumulators with a per-tensor learning rate.
#[derive(Debug, Clone)]
pub struct OptState<T> {
    pub config: AdamConfig,
    lrs: Vec<f64>,
    m: ParamSet<T>,
    v: ParamSet<T>,
    step: u64,
}

impl<T: Real> OptState<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        Self {
            config,
            lrs: vec![config.lr; params.len()],
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    /// Overrides the learning rate of every tensor whose name starts with
    /// `prefix`.
    pub fn with_lr(mut self, prefix: &str, lr: f64) -> Self {
        for (i, p) in self.m.params().iter().enumerate() {
            if p.name.starts_with(prefix) {
                self.lrs[i] = lr;
            }
        }
        self
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn lr_of(&self, index: usize) -> f64 {
        self.lrs[index]
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Real>(params: &mut ParamSet<T>, grads: &ParamSet<T>, state: &mut OptState<T>) -> Result<(), DiffError> {
    if !params.same_layout(grads) || !params.same_layout(&state.m) {
        return Err(DiffError::ShapeMismatch("adam_step".into()));
    }
    state.step += 1;
    let c = state.config;
    let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
    let one = T::one();
    let t = state.step as i32;
    let bc1 = one - b1.powi(t);
    let bc2 = one - b2.powi(t);
    let eps = T::lit(c.eps);
    let lrs = state.lrs.clone();
    let (m_all, v_all) = (state.m.params_mut(), state.v.params_mut());
    for (i, ((p, g), (m, v))) in params
        .params_mut()
        .iter_mut()
        .zip(grads.params())
        .zip(m_all.iter_mut().zip(v_all.iter_mut()))
        .enumerate()
    {
        let lr = T::lit(lrs[i]);
        for (((x, &gk), mk), vk) in p
            .values
            .iter_mut()
            .zip(&g.values)
            .zip(m.values.iter_mut())
            .zip(v.values.iter_mut())
        {
            *mk = b1 * *mk + (one - b1) * gk;
            *vk = b2 * *vk + (one - b2) * gk * gk;
            let m_hat = *mk / bc1;
            let v_hat = *vk / bc2;
            *x -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
