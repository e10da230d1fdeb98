//! RMSProp and global-norm gradient clipping.

use super::params::ParamSet;
use crate::error::{Error, Result};

pub const DEFAULT_DECAY: f64 = 0.9;
pub const DEFAULT_EPS: f64 = 1e-8;
pub const DEFAULT_CLIP: f64 = 5.0;

/// One RMSProp update over flat slices.
///
/// `s <- decay*s + (1-decay)*g^2`, `theta <- theta - lr*g/(sqrt(s)+eps)`.
pub fn rmsprop_step(params: &mut [f64], grads: &[f64], state: &mut [f64], lr: f64, decay: f64, eps: f64) {
    debug_assert!(params.len() == grads.len() && grads.len() == state.len());
    for ((p, &g), s) in params.iter_mut().zip(grads).zip(state.iter_mut()) {
        *s = decay * *s + (1.0 - decay) * g * g;
        *p -= lr * g / (s.sqrt() + eps);
    }
}

/// RMSProp over every tensor of a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    state: ParamSet,
}

impl RmsProp {
    pub fn new(params: &ParamSet, lr: f64, decay: f64, eps: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&decay) || eps.is_nan() || eps <= 0.0 {
            return Err(Error::Config(format!("invalid RMSProp decay {decay} or eps {eps}")));
        }
        Ok(RmsProp {
            lr,
            decay,
            eps,
            state: params.zeros_like(),
        })
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) {
        for ((p, g), s) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(self.state.tensors_mut()) {
            rmsprop_step(p, g, s, self.lr, self.decay, self.eps);
        }
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ParamSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}
