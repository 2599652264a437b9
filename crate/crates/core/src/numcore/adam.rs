use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{ParameterSet, Tensor};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Tensor,
    pub v: Tensor,
}

/// Optimizer state: per-parameter moments plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub moments: BTreeMap<String, Moments>,
}

impl AdamState {
    /// Zeroed moments for every parameter in `params`.
    pub fn new(params: &ParameterSet, config: AdamConfig) -> Self {
        let moments = params
            .iter()
            .map(|(name, p)| {
                (
                    name.to_string(),
                    Moments {
                        m: Tensor::zeros(p.value.shape()),
                        v: Tensor::zeros(p.value.shape()),
                    },
                )
            })
            .collect();
        AdamState {
            config,
            step: 0,
            moments,
        }
    }
}

/// One bias-corrected Adam update of every parameter, then zeroes the
/// gradients.
pub fn adam_step(params: &mut ParameterSet, state: &mut AdamState, lr: f64) -> Result<()> {
    for (name, p) in params.iter() {
        match state.moments.get(name) {
            None => return Err(Error::StateCorruption(format!("no moment tensors for {name}"))),
            Some(mo) if mo.m.shape() != p.value.shape() || mo.v.shape() != p.value.shape() => {
                return Err(Error::StateCorruption(format!(
                    "moment shape {:?} does not match parameter {name} {:?}",
                    mo.m.shape(),
                    p.value.shape()
                )))
            }
            Some(_) => {}
        }
    }
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (name, p) in params.iter_mut() {
        let mo = state.moments.get_mut(name).expect("checked above");
        let g = p.grad.data();
        let (m, v) = (mo.m.data_mut(), mo.v.data_mut());
        let w = p.value.data_mut();
        for i in 0..w.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    params.zero_grads();
    Ok(())
}
