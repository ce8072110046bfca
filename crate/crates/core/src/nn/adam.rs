//! Adam optimizer with per-parameter first/second moment state.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub adam_m: Tensor,
    pub adam_v: Tensor,
    pub step_count: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let shape = value.shape.clone();
        Parameter {
            name: name.into(),
            value,
            adam_m: Tensor::zeros(shape.clone()),
            adam_v: Tensor::zeros(shape),
            step_count: 0,
        }
    }

    /// Accumulate a gradient contribution into the value's grad buffer.
    pub fn accumulate_grad(&mut self, grad: &[f32]) {
        debug_assert_eq!(grad.len(), self.value.numel());
        let g = self.value.ensure_grad();
        for (dst, &src) in g.iter_mut().zip(grad) {
            *dst += src;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update over every parameter. Requires each
/// parameter to carry a gradient; clears gradients and bumps step counts.
pub fn adam_step<'a>(
    params: impl IntoIterator<Item = &'a mut Parameter>,
    cfg: AdamConfig,
) -> Result<()> {
    for p in params {
        let grad = p
            .value
            .grad
            .take()
            .ok_or_else(|| Error::MissingGrad { name: p.name.clone() })?;
        p.step_count += 1;
        let t = p.step_count as f64;
        let bc1 = 1.0 - (cfg.beta1 as f64).powi(t as i32);
        let bc2 = 1.0 - (cfg.beta2 as f64).powi(t as i32);
        for i in 0..grad.len() {
            let g = grad[i];
            let m = cfg.beta1 * p.adam_m.data[i] + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * p.adam_v.data[i] + (1.0 - cfg.beta2) * g * g;
            p.adam_m.data[i] = m;
            p.adam_v.data[i] = v;
            let m_hat = m / bc1 as f32;
            let v_hat = v / bc2 as f32;
            p.value.data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
