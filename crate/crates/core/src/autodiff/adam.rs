use crate::autodiff::ParamSet;
use crate::error::{Error, Result};

/// Adam moments and hyperparameters for one [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ParamSet,
    pub v: ParamSet,
    /// Number of updates applied so far.
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zero moments with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new(like: &ParamSet, lr: f64) -> Self {
        AdamState {
            m: ParamSet::zeros_like(like),
            v: ParamSet::zeros_like(like),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update.
///
/// Non-finite gradients leave `net` and `state` untouched and are reported
/// with the index of the step that would have been taken.
pub fn adam_step(net: &mut ParamSet, grads: &ParamSet, state: &mut AdamState) -> Result<()> {
    if !net.same_shape(grads) || !net.same_shape(&state.m) {
        return Err(Error::Config("gradient or optimizer shape does not match the network".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Diverged {
            step: state.t as usize,
            reason: "non-finite gradient".into(),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (lr, eps) = (state.lr, state.eps);
    for (((p, g), m), v) in net
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Plain gradient descent: `net -= lr * grads`.
pub fn sgd_step(net: &mut ParamSet, grads: &ParamSet, lr: f64) -> Result<()> {
    if !net.same_shape(grads) {
        return Err(Error::Config("gradient shape does not match the network".into()));
    }
    net.add_scaled(grads, -lr);
    Ok(())
}
