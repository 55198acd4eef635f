use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Interpretation of the `decay` hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    /// L2 penalty folded into the gradient: `g = grad + decay * param`.
    #[default]
    CoupledL2,
    /// Weight decay applied directly to the parameter, outside the moments.
    Decoupled,
    /// Learning-rate decay: `lr_t = lr / (1 + decay * (t - 1))`.
    LrDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamaxHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub decay_mode: DecayMode,
}

impl Default for AdamaxHyper {
    fn default() -> Self {
        AdamaxHyper {
            lr: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.001,
            decay_mode: DecayMode::CoupledL2,
        }
    }
}

/// Per-parameter optimizer state: first moment and infinity-norm accumulator.
#[derive(Debug, Clone)]
pub struct AdamaxState {
    pub m: Tensor,
    pub u: Tensor,
}

impl AdamaxState {
    pub fn for_param(param: &Tensor) -> AdamaxState {
        AdamaxState {
            m: Tensor::zeros(param.shape()),
            u: Tensor::zeros(param.shape()),
        }
    }
}

/// One Adamax update on a single parameter tensor. `t` is the 1-based step
/// counter (incremented by the caller before the first use).
///
/// With coupled L2 decay:
/// ```text
/// g = grad + decay * param
/// m = beta1 m + (1 - beta1) g
/// u = max(beta2 u, |g|)
/// param -= lr / (1 - beta1^t) * m / (u + eps)
/// ```
pub fn adamax_step(
    name: &str,
    param: &mut Tensor,
    grad: &Tensor,
    state: &mut AdamaxState,
    hyper: &AdamaxHyper,
    t: u64,
) -> Result<()> {
    if grad.shape() != param.shape() {
        return Err(Error::Shape(format!(
            "adamax: grad {:?} vs param {:?} for {name}",
            grad.shape(),
            param.shape()
        )));
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }
    debug_assert!(t >= 1, "adamax step counter must be incremented before use");
    let lr = match hyper.decay_mode {
        DecayMode::LrDecay => hyper.lr / (1.0 + hyper.weight_decay * (t - 1) as f64),
        _ => hyper.lr,
    };
    let bias_fix = 1.0 - hyper.beta1.powi(t as i32);
    let scale = lr / bias_fix;
    let p = param.data_mut();
    let g = grad.data();
    let m = state.m.data_mut();
    let u = state.u.data_mut();
    for i in 0..p.len() {
        let gi = match hyper.decay_mode {
            DecayMode::CoupledL2 => g[i] + hyper.weight_decay * p[i],
            _ => g[i],
        };
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
        u[i] = (hyper.beta2 * u[i]).max(gi.abs());
        if hyper.decay_mode == DecayMode::Decoupled {
            p[i] -= lr * hyper.weight_decay * p[i];
        }
        p[i] -= scale * m[i] / (u[i] + hyper.eps);
    }
    Ok(())
}
