//! Minibatch training loops for deterministic and Bayesian networks.
//!
//! Deterministic networks minimise the batch-mean head loss. Bayesian
//! networks minimise the minibatch objective of [`crate::bayes`] as written
//! (summed likelihood term plus the `1/M`-weighted complexity term).

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::bayes::{self, BayesConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::{forward, Network, Regime};
use crate::metrics;
use crate::optim::{Optimizer, OptimizerConfig};
use crate::rng::{self, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Set from the run seed; not part of the JSON form.
    #[serde(skip)]
    pub seed: u64,
    /// Required for Bayesian networks, ignored otherwise.
    #[serde(default)]
    pub bayes: Option<BayesConfig>,
    /// Test accuracy is computed every this many epochs and on the last one.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
}

fn default_eval_every() -> usize {
    1
}

impl TrainConfig {
    pub fn new(optimizer: OptimizerConfig, epochs: usize, minibatch_size: usize, seed: u64) -> Self {
        Self { optimizer, epochs, minibatch_size, seed, bayes: None, eval_every: 1 }
    }

    /// Spiral setup: RMSprop (lr 0.0005, decay 0.9), 25000 epochs, minibatch 50.
    pub fn spiral(seed: u64) -> Self {
        Self::new(OptimizerConfig::rmsprop(0.0005, 0.9), 25_000, 50, seed)
    }

    /// MNIST setup: Adam (lr 1e-4), 10 epochs, minibatch 1024.
    pub fn mnist(seed: u64) -> Self {
        Self::new(OptimizerConfig::adam(1e-4), 10, 1024, seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("train.epochs must be at least 1".into()));
        }
        if self.minibatch_size == 0 {
            return Err(Error::InvalidArgument("train.minibatch_size must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidArgument("train.eval_every must be at least 1".into()));
        }
        if let Some(b) = &self.bayes {
            b.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's steps of the minimised loss.
    pub train_loss: f64,
    /// Fraction of training examples predicted correctly during the epoch (train mode).
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

pub fn write_epoch_log(log: &[EpochRecord], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epoch", "train_loss", "train_acc", "test_acc"])?;
    for r in log {
        out.write_record([
            r.epoch.to_string(),
            format!("{}", r.train_loss),
            format!("{}", r.train_acc),
            r.test_acc.map(|a| format!("{a}")).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Test accuracy; Bayesian networks are scored with their posterior mean weights.
pub fn test_accuracy(net: &Network, ds: &Dataset) -> Result<f64> {
    match net.regime() {
        Regime::Deterministic => metrics::accuracy(net, ds),
        Regime::Bayesian => metrics::accuracy(&bayes::mean_network(net)?, ds),
    }
}

/// Trains `net` in place. `on_epoch` sees every record as it is produced.
pub fn train_with(
    net: &mut Network,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("training set is empty".into()));
    }
    if train.feature_shape() != net.spec().input_shape.as_slice() {
        return Err(Error::shape("train", train.feature_shape(), &net.spec().input_shape));
    }
    if train.classes() != net.head().classes() {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} classes, head has {}",
            train.classes(),
            net.head().classes()
        )));
    }
    let bayes_cfg = match net.regime() {
        Regime::Bayesian => Some(cfg.bayes.unwrap_or_default()),
        Regime::Deterministic => None,
    };

    let mut opt = Optimizer::new(cfg.optimizer, net.buffers())?;
    let mut shuffle = rng::stream(cfg.seed, Stream::Shuffle);
    let mut dropout = rng::stream(cfg.seed, Stream::Dropout);
    let mut noise = rng::stream(cfg.seed, Stream::WeightNoise);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        let mut hits = 0usize;
        for (step, idx) in order.chunks(cfg.minibatch_size).enumerate() {
            let x = train.inputs().select_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| train.labels()[i]).collect();
            let tape = Tape::<f32>::new();
            let params: Vec<_> = net.buffers().iter().map(|b| tape.param(b.clone())).collect();
            let xv = tape.constant(x);
            let (loss, outputs) = match &bayes_cfg {
                None => {
                    let o = forward(net.spec(), &params, xv, Some(&mut dropout))?;
                    let l = net.head().loss(o, &y)?.scale(1.0 / y.len() as f32);
                    (l, o)
                }
                Some(b) => bayes::elbo_with_outputs(
                    net.spec(),
                    &params,
                    xv,
                    &y,
                    b.kl_weight,
                    b.train_samples,
                    &b.prior.into(),
                    &mut noise,
                )?,
            };
            let value = loss.value().item() as f64;
            if !value.is_finite() {
                return Err(Error::Divergence { epoch, step, loss: value });
            }
            let ov = outputs.value();
            for (r, &t) in y.iter().enumerate() {
                let o: Vec<f64> = ov.row(r).iter().map(|&v| v as f64).collect();
                hits += (net.head().predict(&o) == t) as usize;
            }
            let mut grads = tape.backward(loss)?;
            let g: Vec<_> = params.iter().map(|&p| grads.take(p)).collect();
            if g.iter().any(|t| !t.all_finite()) {
                return Err(Error::Divergence { epoch, step, loss: f64::NAN });
            }
            drop(grads);
            opt.step(net.buffers_mut(), &g)?;
            loss_sum += value;
            steps += 1;
        }
        let test_acc = match test {
            Some(ds) if epoch % cfg.eval_every == 0 || epoch == cfg.epochs => Some(test_accuracy(net, ds)?),
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / steps as f64,
            train_acc: hits as f64 / train.len() as f64,
            test_acc,
        };
        on_epoch(&record);
        log.push(record);
    }
    Ok(log)
}

pub fn train(net: &mut Network, train: &Dataset, test: Option<&Dataset>, cfg: &TrainConfig) -> Result<Vec<EpochRecord>> {
    train_with(net, train, test, cfg, |_| {})
}
