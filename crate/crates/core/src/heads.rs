//! Prediction heads over the network output `o`: the closed-world softmax
//! and the open-world radial prediction layer (RPL).
//!
//! The RPL places one fixed prototype per class on the coordinate axes,
//! `p_j = a·e_j`, and scores class `j` by `exp(−β‖o − p_j‖₂)`. At inference
//! a class whose distance reaches the threshold `c′` gets probability 0, so
//! the class probabilities may sum to less than one; the deficit
//! ([`open_world_mass`]) measures how novel the input looks. Training uses
//! the unthresholded negative log-likelihood `β‖o − p_k‖₂`.
//!
//! Class indices are zero-based throughout.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Hyperparameters of a radial prediction layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RplConfig {
    /// Distance of every prototype from the origin.
    #[serde(default = "default_a")]
    pub a: f64,
    /// Sharpness of the exponential decay.
    pub beta: f64,
    /// Inference threshold; `None` means `c = √2·a`, the prototype spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_prime: Option<f64>,
    pub classes: usize,
}

fn default_a() -> f64 {
    1.0
}

impl RplConfig {
    pub fn new(classes: usize, a: f64, beta: f64) -> Result<Self> {
        let cfg = Self { a, beta, c_prime: None, classes };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Distance between any two prototypes, `√2·a`.
    pub fn prototype_spacing(&self) -> f64 {
        // Same rounding as the distance between two prototypes, so a point
        // sitting on a prototype cuts every other class exactly.
        (2.0 * (self.a * self.a)).sqrt()
    }

    pub fn threshold(&self) -> f64 {
        self.c_prime.unwrap_or_else(|| self.prototype_spacing())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.a > 0.0 && self.a.is_finite()) {
            return bad(format!("rpl.a must be positive, got {}", self.a));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("rpl.beta must be positive, got {}", self.beta));
        }
        if self.classes < 2 {
            return bad(format!("rpl.classes must be at least 2, got {}", self.classes));
        }
        if let Some(c) = self.c_prime {
            let c_max = self.prototype_spacing();
            if !(c > 0.0 && c <= c_max * (1.0 + 1e-12)) {
                return bad(format!("rpl.c_prime must lie in (0, {c_max}], got {c}"));
            }
        }
        Ok(())
    }

    pub fn prototypes(&self) -> Prototypes {
        Prototypes { classes: self.classes, a: self.a }
    }
}

/// The fixed class prototypes `p_j = a·e_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prototypes {
    classes: usize,
    a: f64,
}

impl Prototypes {
    pub fn get(&self, j: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.classes];
        p[j] = self.a;
        p
    }

    pub fn len(&self) -> usize {
        self.classes
    }

    pub fn is_empty(&self) -> bool {
        self.classes == 0
    }

    /// One prototype per target, stacked as a `(targets × classes)` tensor.
    pub fn rows<T: Real>(&self, targets: &[usize]) -> Result<Tensor<T>> {
        let mut data = vec![T::zero(); targets.len() * self.classes];
        for (r, &k) in targets.iter().enumerate() {
            if k >= self.classes {
                return Err(Error::LabelOutOfRange { label: k, classes: self.classes });
            }
            data[r * self.classes + k] = T::lit(self.a);
        }
        Ok(Tensor::from_parts(vec![targets.len(), self.classes], data))
    }
}

/// Which head sits on top of the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Head {
    Softmax { classes: usize },
    Rpl(RplConfig),
}

impl Head {
    pub fn classes(&self) -> usize {
        match self {
            Head::Softmax { classes } => *classes,
            Head::Rpl(cfg) => cfg.classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Head::Softmax { classes } if *classes < 2 => Err(Error::InvalidArgument(format!(
                "softmax.classes must be at least 2, got {classes}"
            ))),
            Head::Softmax { .. } => Ok(()),
            Head::Rpl(cfg) => cfg.validate(),
        }
    }

    pub fn rpl(&self) -> Option<&RplConfig> {
        match self {
            Head::Rpl(cfg) => Some(cfg),
            Head::Softmax { .. } => None,
        }
    }

    /// Class probabilities for one output row. RPL probabilities are thresholded.
    pub fn probabilities(&self, o: &[f64]) -> Result<Vec<f64>> {
        match self {
            Head::Softmax { .. } => softmax_probabilities(o),
            Head::Rpl(cfg) => Ok(rpl_probabilities(&rpl_distances(o, cfg)?, cfg)),
        }
    }

    /// Like [`Head::probabilities`] but RPL scores skip the threshold.
    pub fn unthresholded_probabilities(&self, o: &[f64]) -> Result<Vec<f64>> {
        match self {
            Head::Softmax { .. } => softmax_probabilities(o),
            Head::Rpl(cfg) => Ok(rpl_unthresholded(&rpl_distances(o, cfg)?, cfg)),
        }
    }

    /// Predicted class: softmax argmax, or the nearest prototype for RPL.
    /// Ties go to the lowest index.
    pub fn predict(&self, o: &[f64]) -> usize {
        match self {
            Head::Softmax { .. } => argmax(o),
            Head::Rpl(cfg) => {
                let d: Vec<f64> = distances_unchecked(o, cfg).into_iter().map(|d| -d).collect();
                argmax(&d)
            }
        }
    }

    /// Summed training loss over a batch of outputs `(rows × classes)`.
    pub fn loss<'t, T: Real>(&self, o: Var<'t, T>, targets: &[usize]) -> Result<Var<'t, T>> {
        match self {
            Head::Softmax { .. } => softmax_nll_batch(o, targets),
            Head::Rpl(cfg) => rpl_nll_batch(o, targets, cfg),
        }
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `exp(o_j) / Σ_i exp(o_i)`, computed after subtracting `max(o)`.
pub fn softmax_probabilities(o: &[f64]) -> Result<Vec<f64>> {
    if o.is_empty() || o.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax_probabilities"));
    }
    let m = o.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = o.iter().map(|&v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / z).collect())
}

/// `d_j = ‖p_j − o‖₂` for every class.
pub fn rpl_distances(o: &[f64], cfg: &RplConfig) -> Result<Vec<f64>> {
    if o.len() != cfg.classes {
        return Err(Error::shape("rpl_distances", &[o.len()], &[cfg.classes]));
    }
    if o.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rpl_distances"));
    }
    Ok(distances_unchecked(o, cfg))
}

fn distances_unchecked(o: &[f64], cfg: &RplConfig) -> Vec<f64> {
    (0..o.len())
        .map(|j| {
            o.iter()
                .enumerate()
                .map(|(i, &v)| {
                    let diff = v - if i == j { cfg.a } else { 0.0 };
                    diff * diff
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Thresholded RPL probabilities: `exp(−β d_k)` if `d_k < c′`, else 0.
pub fn rpl_probabilities(d: &[f64], cfg: &RplConfig) -> Vec<f64> {
    let c = cfg.threshold();
    d.iter()
        .map(|&dk| if dk < c { (-cfg.beta * dk).exp() } else { 0.0 })
        .collect()
}

/// `exp(−β d_k)` without the threshold, as used during training.
pub fn rpl_unthresholded(d: &[f64], cfg: &RplConfig) -> Vec<f64> {
    d.iter().map(|&dk| (-cfg.beta * dk).exp()).collect()
}

/// `1 − Σ probs`: the probability mass left for "none of the known classes".
/// It can be negative when `β·a < ln K`.
pub fn open_world_mass(probs: &[f64]) -> f64 {
    1.0 - probs.iter().sum::<f64>()
}

/// Unthresholded RPL negative log-likelihood `β‖o − p_k‖₂` of one output.
pub fn rpl_nll(o: &[f64], k: usize, cfg: &RplConfig) -> Result<f64> {
    if k >= cfg.classes {
        return Err(Error::LabelOutOfRange { label: k, classes: cfg.classes });
    }
    Ok(cfg.beta * rpl_distances(o, cfg)?[k])
}

/// Softmax cross-entropy of one output against class `k`.
pub fn softmax_nll(o: &[f64], k: usize) -> Result<f64> {
    if k >= o.len() {
        return Err(Error::LabelOutOfRange { label: k, classes: o.len() });
    }
    if o.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax_nll"));
    }
    let m = o.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + o.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
    Ok(lse - o[k])
}

/// `Σ_i β‖o_i − p_{k_i}‖₂` over a batch of outputs.
pub fn rpl_nll_batch<'t, T: Real>(o: Var<'t, T>, targets: &[usize], cfg: &RplConfig) -> Result<Var<'t, T>> {
    let shape = o.shape();
    if shape.len() != 2 || shape[1] != cfg.classes || shape[0] != targets.len() {
        return Err(Error::shape("rpl_nll", &shape, &[targets.len(), cfg.classes]));
    }
    let tape: &'t Tape<T> = o.tape;
    let protos = tape.constant(cfg.prototypes().rows(targets)?);
    let dist = o.sub(protos)?.l2_norm_rows()?;
    Ok(dist.sum().scale(T::lit(cfg.beta)))
}

/// Summed softmax cross-entropy over a batch of logits.
pub fn softmax_nll_batch<'t, T: Real>(o: Var<'t, T>, targets: &[usize]) -> Result<Var<'t, T>> {
    o.softmax_cross_entropy(targets)
}
