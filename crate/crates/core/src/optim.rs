//! First-order optimizers over flat lists of parameter tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
    },
    Rmsprop {
        lr: f64,
        #[serde(default = "default_decay")]
        decay: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_decay() -> f64 {
    0.9
}
fn default_eps() -> f64 {
    1e-8
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}

impl OptimizerConfig {
    pub fn rmsprop(lr: f64, decay: f64) -> Self {
        OptimizerConfig::Rmsprop { lr, decay, eps: default_eps() }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam { lr, beta1: default_beta1(), beta2: default_beta2(), eps: default_eps() }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr } | OptimizerConfig::Rmsprop { lr, .. } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let lr = self.lr();
        if !(lr >= 0.0 && lr.is_finite()) {
            return bad(format!("optimizer.lr must be finite and non-negative, got {lr}"));
        }
        match *self {
            OptimizerConfig::Sgd { .. } => Ok(()),
            OptimizerConfig::Rmsprop { decay, eps, .. } => {
                if !(0.0..1.0).contains(&decay) {
                    return bad(format!("optimizer.decay must lie in [0, 1), got {decay}"));
                }
                if !(eps > 0.0) {
                    return bad(format!("optimizer.eps must be positive, got {eps}"));
                }
                Ok(())
            }
            OptimizerConfig::Adam { beta1, beta2, eps, .. } => {
                for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
                    if !(0.0..1.0).contains(&b) {
                        return bad(format!("optimizer.{name} must lie in [0, 1), got {b}"));
                    }
                }
                if !(eps > 0.0) {
                    return bad(format!("optimizer.eps must be positive, got {eps}"));
                }
                Ok(())
            }
        }
    }
}

/// Optimizer with its per-parameter state.
#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    step: u64,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, params: &[Tensor<f32>]) -> Result<Self> {
        cfg.validate()?;
        let zeros = || params.iter().map(|p| vec![0.0; p.len()]).collect();
        Ok(Self { cfg, step: 0, first: zeros(), second: zeros() })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [Tensor<f32>], grads: &[Tensor<f32>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer holds {} tensors, got {} params and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::shape("optimizer step", p.shape(), g.shape()));
            }
        }
        self.step += 1;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            match self.cfg {
                OptimizerConfig::Sgd { lr } => sgd_step(p.data_mut(), g.data(), lr as f32),
                OptimizerConfig::Rmsprop { lr, decay, eps } => {
                    rmsprop_step(p.data_mut(), g.data(), &mut self.second[i], lr, decay, eps)
                }
                OptimizerConfig::Adam { lr, beta1, beta2, eps } => adam_step(
                    p.data_mut(),
                    g.data(),
                    &mut self.first[i],
                    &mut self.second[i],
                    self.step,
                    AdamHyper { lr, beta1, beta2, eps },
                ),
            }
        }
        Ok(())
    }
}

pub fn sgd_step(params: &mut [f32], grads: &[f32], lr: f32) {
    for (p, &g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

/// `v ← ρv + (1 − ρ)g²`, `θ ← θ − lr·g / (√v + ε)`.
pub fn rmsprop_step(params: &mut [f32], grads: &[f32], v: &mut [f32], lr: f64, decay: f64, eps: f64) {
    let (lr, rho, eps) = (lr as f32, decay as f32, eps as f32);
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(v.iter_mut()) {
        *v = rho * *v + (1.0 - rho) * g * g;
        *p -= lr * g / (v.sqrt() + eps);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Adam with bias correction; `t` counts steps from 1.
pub fn adam_step(params: &mut [f32], grads: &[f32], m: &mut [f32], v: &mut [f32], t: u64, h: AdamHyper) {
    let c1 = 1.0 - h.beta1.powf(t as f64);
    let c2 = 1.0 - h.beta2.powf(t as f64);
    let (b1, b2) = (h.beta1 as f32, h.beta2 as f32);
    let (c1, c2, lr, eps) = (c1 as f32, c2 as f32, h.lr as f32, h.eps as f32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}
