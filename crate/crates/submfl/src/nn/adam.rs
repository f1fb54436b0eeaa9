//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::error::{Error, Result};

/// Optimizer and local-training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            batch_size: 64,
            local_epochs: 3,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be in [0, 1), got {b}"
                )));
            }
        }
        if self.epsilon <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::InvalidArgument(
                "epsilon must be > 0 and weight_decay >= 0".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Adam accumulators, congruent to the parameters they optimize.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        AdamState {
            m: ParamSet::zeros_like(params),
            v: ParamSet::zeros_like(params),
            t: 0,
        }
    }
}

/// One bias-corrected Adam step, in place. The step counter increments by
/// exactly one. With `weight_decay > 0` the decay term is added to the
/// gradient before the moment updates.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut AdamState,
    hyper: &Hyperparams,
) -> Result<()> {
    params.check_congruent(grads, "adam gradients")?;
    params.check_congruent(&state.m, "adam first moment")?;
    params.check_congruent(&state.v, "adam second moment")?;
    hyper.validate()?;
    if !grads.all_finite() {
        return Err(Error::NonFinite("gradients"));
    }

    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - hyper.beta1.powi(t);
    let bias2 = 1.0 - hyper.beta2.powi(t);

    for (l, layer) in params.layers_mut().iter_mut().enumerate() {
        let g = &grads.layers()[l];
        let m = &mut state.m.layers_mut()[l];
        let v = &mut state.v.layers_mut()[l];
        update_slice(
            &mut layer.weights,
            &g.weights,
            &mut m.weights,
            &mut v.weights,
            hyper,
            bias1,
            bias2,
        );
        update_slice(
            &mut layer.biases,
            &g.biases,
            &mut m.biases,
            &mut v.biases,
            hyper,
            bias1,
            bias2,
        );
    }
    Ok(())
}

fn update_slice(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    hyper: &Hyperparams,
    bias1: f64,
    bias2: f64,
) {
    for i in 0..p.len() {
        let grad = g[i] + hyper.weight_decay * p[i];
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * grad;
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * grad * grad;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        p[i] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
    }
}
