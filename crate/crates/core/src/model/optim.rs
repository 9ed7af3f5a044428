use super::{Gradients, ModelParams};
use crate::error::{contract, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Multiplicative decay after the Adam step (`true`) or an L2 term added
    /// to the gradient (`false`).
    pub decoupled_decay: bool,
    pub ema_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.02,
            decoupled_decay: true,
            ema_decay: 0.999,
        }
    }
}

/// Adam moments, step counter and the EMA copy of the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step: u64,
    pub ema: ModelParams,
}

impl OptimizerState {
    /// Zero moments; the EMA starts from `params`.
    pub fn new(config: OptimizerConfig, params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect();
        Self {
            config,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
            ema: params.clone(),
        }
    }
}

fn check_shapes(params: &ModelParams, other: &[Vec<f64>], what: &str) -> Result<()> {
    if params.tensors.len() != other.len()
        || params.tensors.iter().zip(other).any(|(t, g)| t.data.len() != g.len())
    {
        return Err(contract(format!("{what} shapes do not match the parameters")));
    }
    Ok(())
}

/// Bias-corrected Adam step followed by weight decay.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut OptimizerState) -> Result<()> {
    check_shapes(params, grads, "gradient")?;
    check_shapes(params, &state.first_moment, "moment")?;
    let cfg = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let shrink = if cfg.decoupled_decay { 1.0 - cfg.lr * cfg.weight_decay } else { 1.0 };
    let l2 = if cfg.decoupled_decay { 0.0 } else { cfg.weight_decay };
    for (((tensor, g), m), v) in params
        .tensors
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        for (((theta, &g), m), v) in tensor.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            let g = g + l2 * *theta;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *theta -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            *theta *= shrink;
        }
    }
    params.bump_version();
    Ok(())
}

/// `ema <- d * ema + (1 - d) * params`.
pub fn ema_update(state: &mut OptimizerState, params: &ModelParams) -> Result<()> {
    let d = state.config.ema_decay;
    if state.ema.tensors.len() != params.tensors.len() {
        return Err(contract("EMA shapes do not match the parameters"));
    }
    for (e, p) in state.ema.tensors.iter_mut().zip(&params.tensors) {
        if e.data.len() != p.data.len() {
            return Err(contract("EMA shapes do not match the parameters"));
        }
        for (a, &b) in e.data.iter_mut().zip(&p.data) {
            *a = d * *a + (1.0 - d) * b;
        }
    }
    state.ema.bump_version();
    Ok(())
}
