use ndarray::{ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamEntry, ParamTree};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// One bias-corrected Adam update of a single tensor.
pub fn adam_update(entry: &mut ParamEntry, grad: ArrayView2<f64>, cfg: &AdamConfig) -> Result<()> {
    if grad.dim() != entry.value.dim() {
        return Err(Error::config(format!(
            "gradient shape {:?} does not match parameter shape {:?}",
            grad.dim(),
            entry.value.dim()
        )));
    }
    entry.step += 1;
    let t = entry.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2, lr, eps) = (cfg.beta1, cfg.beta2, cfg.learning_rate, cfg.epsilon);
    Zip::from(&mut entry.value)
        .and(&mut entry.m)
        .and(&mut entry.v)
        .and(&grad)
        .for_each(|p, m, v, &g| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        });
    Ok(())
}

/// Applies [`adam_update`] to every address of `params`.
pub fn adam_step(params: &mut ParamTree, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::config(format!(
            "gradient set has {} tensors, parameters have {}",
            grads.len(),
            params.len()
        )));
    }
    for ((_, entry), (_, g)) in params.iter_mut().zip(grads.iter()) {
        adam_update(entry, g.view(), cfg)?;
    }
    Ok(())
}
