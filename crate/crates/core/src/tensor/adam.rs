//! Adam optimizer with bias correction.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::param::Param;
use crate::tensor::Tensor;

/// Optimizer hyperparameters. Defaults are the community-standard
/// beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates plus the shared step counter.
#[derive(Default)]
pub struct AdamState {
    pub step: u64,
    moments: HashMap<usize, (Tensor, Tensor)>,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState::default()
    }

    /// Moment tensors for a parameter, creating zeroed state on first use.
    pub fn moments_mut(&mut self, p: &Param) -> &mut (Tensor, Tensor) {
        let shape = p.shape();
        self.moments
            .entry(p.key())
            .or_insert_with(|| (Tensor::zeros(&shape), Tensor::zeros(&shape)))
    }

    pub fn moments_of(&self, p: &Param) -> Option<&(Tensor, Tensor)> {
        self.moments.get(&p.key())
    }

    pub fn set_moments(&mut self, p: &Param, m: Tensor, v: Tensor) {
        self.moments.insert(p.key(), (m, v));
    }
}

/// One Adam update over `(param, grad)` pairs. Parameters without a gradient
/// this step are skipped (their moments stay untouched); the step counter
/// advances once per call. Deterministic given identical inputs.
pub fn adam_step(
    pairs: &[(Param, Tensor)],
    state: &mut AdamState,
    hp: &AdamParams,
) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for (p, grad) in pairs {
        if !grad.is_finite() {
            return Err(Error::Train(format!(
                "non-finite gradient for parameter `{}`",
                p.name()
            )));
        }
        if grad.shape() != p.shape() {
            return Err(Error::Dimension(format!(
                "gradient shape {:?} does not match parameter `{}` {:?}",
                grad.shape(),
                p.name(),
                p.shape()
            )));
        }
        let (m, v) = state.moments_mut(p);
        for ((mv, vv), &gv) in m
            .data_mut()
            .iter_mut()
            .zip(v.data_mut().iter_mut())
            .zip(grad.data())
        {
            *mv = hp.beta1 * *mv + (1.0 - hp.beta1) * gv;
            *vv = hp.beta2 * *vv + (1.0 - hp.beta2) * gv * gv;
        }
        let (m, v) = (&state.moments[&p.key()].0, &state.moments[&p.key()].1);
        p.update(|tensor| {
            for ((xv, &mv), &vv) in tensor.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
                let mhat = mv / bc1;
                let vhat = vv / bc2;
                *xv -= hp.lr * mhat / (vhat.sqrt() + hp.eps);
            }
        });
    }
    Ok(())
}
