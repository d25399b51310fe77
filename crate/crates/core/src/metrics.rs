//! Accuracy, confidence histograms and the fast gradient sign attack.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::bayes;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::heads::argmax;
use crate::layers::{forward, Network, Regime};
use crate::tensor::Tensor;

const CHUNK: usize = 1024;

/// Per-example head output summaries.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Head probabilities (RPL thresholded).
    pub probabilities: Vec<Vec<f64>>,
    /// Ranking scores used for top-k (RPL unthresholded).
    pub scores: Vec<Vec<f64>>,
    pub predictions: Vec<usize>,
}

impl Evaluation {
    /// Confidence of each example: its largest class probability.
    pub fn confidences(&self) -> Vec<f64> {
        self.probabilities.iter().map(|p| p.iter().copied().fold(0.0, f64::max)).collect()
    }

    pub fn accuracy(&self, labels: &[usize]) -> f64 {
        if labels.is_empty() {
            return 0.0;
        }
        let hits = self.predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
        hits as f64 / labels.len() as f64
    }

    /// Fraction of examples whose label is among the `k` highest scores
    /// (earlier classes rank first on ties).
    pub fn topk_accuracy(&self, labels: &[usize], k: usize) -> f64 {
        if labels.is_empty() {
            return 0.0;
        }
        let hits = self
            .scores
            .iter()
            .zip(labels)
            .filter(|(s, &y)| {
                let better = s.iter().enumerate().filter(|&(j, &v)| v > s[y] || (v == s[y] && j < y)).count();
                better < k
            })
            .count();
        hits as f64 / labels.len() as f64
    }
}

fn summarise(net: &Network, outputs: &Tensor<f32>, eval: &mut Evaluation) -> Result<()> {
    for r in 0..outputs.shape()[0] {
        let o: Vec<f64> = outputs.row(r).iter().map(|&v| v as f64).collect();
        eval.probabilities.push(net.head().probabilities(&o)?);
        eval.scores.push(net.head().unthresholded_probabilities(&o)?);
        eval.predictions.push(net.head().predict(&o));
    }
    Ok(())
}

/// Evaluates a deterministic network on `inputs` in eval mode.
pub fn evaluate_inputs(net: &Network, inputs: &Tensor<f32>) -> Result<Evaluation> {
    net.require_deterministic("evaluation")?;
    let mut eval = Evaluation { probabilities: Vec::new(), scores: Vec::new(), predictions: Vec::new() };
    let outputs = net.outputs_chunked(inputs, CHUNK)?;
    summarise(net, &outputs, &mut eval)?;
    Ok(eval)
}

pub fn evaluate(net: &Network, ds: &Dataset) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("cannot evaluate on an empty dataset".into()));
    }
    evaluate_inputs(net, ds.inputs())
}

/// Monte-Carlo evaluation of a Bayesian network: probabilities are the
/// posterior predictive means, predictions the argmax of the mean
/// unthresholded scores.
pub fn evaluate_bayesian(net: &Network, ds: &Dataset, samples: usize, seed: u64) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("cannot evaluate on an empty dataset".into()));
    }
    let probs = bayes::mc_predict_with(net, ds.inputs(), samples, seed, false, true)?.mean;
    let scores = bayes::mc_predict_with(net, ds.inputs(), samples, seed, false, false)?.mean;
    let predictions = scores.iter().map(|s| argmax(s)).collect();
    Ok(Evaluation { probabilities: probs, scores, predictions })
}

/// Evaluates with the network's own regime; `samples`/`seed` only matter for Bayesian networks.
pub fn evaluate_any(net: &Network, ds: &Dataset, samples: usize, seed: u64) -> Result<Evaluation> {
    match net.regime() {
        Regime::Deterministic => evaluate(net, ds),
        Regime::Bayesian => evaluate_bayesian(net, ds, samples, seed),
    }
}

pub fn accuracy(net: &Network, ds: &Dataset) -> Result<f64> {
    Ok(evaluate(net, ds)?.accuracy(ds.labels()))
}

pub fn topk_accuracy(net: &Network, ds: &Dataset, k: usize) -> Result<f64> {
    Ok(evaluate(net, ds)?.topk_accuracy(ds.labels(), k))
}

/// Confidence counts of correct and wrong predictions over equal-width bins of `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramRecord {
    pub edges: Vec<f64>,
    pub correct: Vec<usize>,
    pub wrong: Vec<usize>,
    /// Raw confidences, kept for medians.
    #[serde(skip)]
    pub correct_confidences: Vec<f64>,
    #[serde(skip)]
    pub wrong_confidences: Vec<f64>,
}

impl HistogramRecord {
    pub fn bins(&self) -> usize {
        self.correct.len()
    }

    pub fn total(&self) -> usize {
        self.correct.iter().sum::<usize>() + self.wrong.iter().sum::<usize>()
    }

    pub fn median_correct(&self) -> Option<f64> {
        median(&self.correct_confidences)
    }

    pub fn median_wrong(&self) -> Option<f64> {
        median(&self.wrong_confidences)
    }

    /// Rows `bin_lo, bin_hi, correct_count, wrong_count`.
    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bin_lo", "bin_hi", "correct_count", "wrong_count"])?;
        for b in 0..self.bins() {
            out.write_record([
                format!("{}", self.edges[b]),
                format!("{}", self.edges[b + 1]),
                self.correct[b].to_string(),
                self.wrong[b].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Bins `confidences` by whether `predictions` match `labels`. A confidence
/// of exactly 1 falls into the last bin.
pub fn histogram_from(confidences: &[f64], predictions: &[usize], labels: &[usize], bins: usize) -> Result<HistogramRecord> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset("cannot build a histogram of an empty dataset".into()));
    }
    let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let mut rec = HistogramRecord {
        edges,
        correct: vec![0; bins],
        wrong: vec![0; bins],
        correct_confidences: Vec::new(),
        wrong_confidences: Vec::new(),
    };
    for ((&c, &p), &y) in confidences.iter().zip(predictions).zip(labels) {
        let bin = ((c * bins as f64).floor() as usize).min(bins - 1);
        if p == y {
            rec.correct[bin] += 1;
            rec.correct_confidences.push(c);
        } else {
            rec.wrong[bin] += 1;
            rec.wrong_confidences.push(c);
        }
    }
    Ok(rec)
}

pub fn confidence_histogram(net: &Network, ds: &Dataset, bins: usize) -> Result<HistogramRecord> {
    let eval = evaluate(net, ds)?;
    histogram_from(&eval.confidences(), &eval.predictions, ds.labels(), bins)
}

/// Perturbation strengths and the valid input range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_clamp")]
    pub clamp: [f64; 2],
}

pub fn default_epsilons() -> Vec<f64> {
    (0..=10).map(|i| i as f64 * 0.05).collect()
}

fn default_clamp() -> [f64; 2] {
    [0.0, 1.0]
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { epsilons: default_epsilons(), clamp: default_clamp() }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::InvalidArgument("attack.epsilons is empty".into()));
        }
        if self.epsilons.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
            return Err(Error::InvalidArgument("attack.epsilons must be finite and non-negative".into()));
        }
        if self.epsilons.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("attack.epsilons must be sorted ascending".into()));
        }
        if !(self.clamp[0] < self.clamp[1]) {
            return Err(Error::InvalidArgument(format!("attack.clamp {:?} is not an interval", self.clamp)));
        }
        Ok(())
    }
}

/// Sign of `∇ₓ loss(net(x), y)` for a batch, using the head's training loss.
pub fn input_gradient_sign(net: &Network, x: &Tensor<f32>, y: &[usize]) -> Result<Tensor<f32>> {
    net.require_deterministic("the gradient attack")?;
    let tape = Tape::<f32>::new();
    let weights: Vec<_> = net.buffers().iter().map(|b| tape.constant(b.clone())).collect();
    let xv = tape.param(x.clone());
    let o = forward(net.spec(), &weights, xv, None)?;
    let loss = net.head().loss(o, y)?;
    let mut grads = tape.backward(loss)?;
    Ok(grads.take(xv).map(crate::autodiff::sign))
}

fn perturb(x: &Tensor<f32>, sign: &Tensor<f32>, eps: f64, clamp: [f64; 2]) -> Tensor<f32> {
    let (lo, hi) = (clamp[0] as f32, clamp[1] as f32);
    let e = eps as f32;
    let data = x.data().iter().zip(sign.data()).map(|(&v, &s)| (v + e * s).clamp(lo, hi)).collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

/// `clamp(x + ε·sign(∇ₓ loss))`.
pub fn fgsm(net: &Network, x: &Tensor<f32>, y: &[usize], eps: f64, clamp: [f64; 2]) -> Result<Tensor<f32>> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be non-negative, got {eps}")));
    }
    let s = input_gradient_sign(net, x, y)?;
    Ok(perturb(x, &s, eps, clamp))
}

/// Accuracy on FGSM-perturbed inputs at each ε. The gradient is taken once
/// per example at the clean input, as the attack prescribes.
pub fn accuracy_vs_epsilon(net: &Network, ds: &Dataset, cfg: &AttackConfig) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset("cannot attack an empty dataset".into()));
    }
    let mut hits = vec![0usize; cfg.epsilons.len()];
    let n = ds.len();
    let mut start = 0;
    while start < n {
        let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
        let x = ds.inputs().select_rows(&idx);
        let y: Vec<usize> = idx.iter().map(|&i| ds.labels()[i]).collect();
        let sign = input_gradient_sign(net, &x, &y)?;
        for (e, &eps) in cfg.epsilons.iter().enumerate() {
            let adv = perturb(&x, &sign, eps, cfg.clamp);
            let eval = evaluate_inputs(net, &adv)?;
            hits[e] += eval.predictions.iter().zip(&y).filter(|(p, t)| p == t).count();
        }
        start += CHUNK;
    }
    Ok(cfg.epsilons.iter().zip(hits).map(|(&e, h)| (e, h as f64 / n as f64)).collect())
}

pub fn write_curve_csv(curve: &[(f64, f64)], w: impl std::io::Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epsilon", "accuracy"])?;
    for (e, a) in curve {
        out.write_record([format!("{e}"), format!("{a}")])?;
    }
    out.flush()?;
    Ok(())
}
