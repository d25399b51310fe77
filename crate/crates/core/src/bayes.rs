//! Bayes by backprop: factorised Gaussian posteriors over every weight,
//! a scale-mixture prior, the minibatch objective and Monte-Carlo prediction.
//!
//! Each weight tensor carries `(μ, ρ)` with `σ = softplus(ρ)`. A training
//! step draws `w = μ + σ·ε`, runs the network on `w` and minimises
//!
//! ```text
//! F = (1/M)·[ln q(w | θ) − ln p(w)] − Σᵢ ln p(yᵢ | xᵢ, w)
//! ```

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::layers::{forward, Network, NetworkSpec, Regime};
use crate::rng::{self, Rng, Stream};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleMixturePrior {
    pub pi: f64,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
}

impl Default for ScaleMixturePrior {
    fn default() -> Self {
        Self { pi: 0.35, sigma1_sq: 1.0, sigma2_sq: 0.0183 }
    }
}

impl ScaleMixturePrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(Error::InvalidArgument(format!("prior.pi must lie in (0, 1), got {}", self.pi)));
        }
        for (name, v) in [("sigma1_sq", self.sigma1_sq), ("sigma2_sq", self.sigma2_sq)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("prior.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Weight prior. The single Gaussian exists for closed-form checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Prior {
    ScaleMixture(ScaleMixturePrior),
    Gaussian { var: f64 },
}

impl From<ScaleMixturePrior> for Prior {
    fn from(p: ScaleMixturePrior) -> Self {
        Prior::ScaleMixture(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BayesConfig {
    /// KL weighting `M`.
    #[serde(default = "default_kl_weight")]
    pub kl_weight: f64,
    #[serde(default)]
    pub prior: ScaleMixturePrior,
    /// Weight samples averaged per training step.
    #[serde(default = "default_one")]
    pub train_samples: usize,
    /// Weight samples averaged at prediction time.
    #[serde(default = "default_predict_samples")]
    pub predict_samples: usize,
}

fn default_kl_weight() -> f64 {
    40.0
}

fn default_one() -> usize {
    1
}

fn default_predict_samples() -> usize {
    200
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self {
            kl_weight: default_kl_weight(),
            prior: ScaleMixturePrior::default(),
            train_samples: 1,
            predict_samples: default_predict_samples(),
        }
    }
}

impl BayesConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kl_weight >= 1.0) {
            return Err(Error::InvalidArgument(format!("bayes.kl_weight must be at least 1, got {}", self.kl_weight)));
        }
        if self.train_samples == 0 || self.predict_samples == 0 {
            return Err(Error::InvalidArgument("bayes.train_samples and bayes.predict_samples must be at least 1".into()));
        }
        self.prior.validate()
    }
}

/// Variational parameters of one weight tensor, living on a tape.
#[derive(Clone, Copy, Debug)]
pub struct VariationalParam<'t, T: Real> {
    pub mu: Var<'t, T>,
    pub rho: Var<'t, T>,
}

impl<'t, T: Real> VariationalParam<'t, T> {
    pub fn sigma(&self) -> Var<'t, T> {
        self.rho.softplus()
    }
}

/// Pairs up interleaved `[μ₁, ρ₁, μ₂, ρ₂, …]` variables.
pub fn pair_up<'t, T: Real>(vars: &[Var<'t, T>]) -> Result<Vec<VariationalParam<'t, T>>> {
    if vars.len() % 2 != 0 {
        return Err(Error::InvalidArgument(format!("expected (mu, rho) pairs, got {} tensors", vars.len())));
    }
    Ok(vars.chunks_exact(2).map(|c| VariationalParam { mu: c[0], rho: c[1] }).collect())
}

/// `w = μ + softplus(ρ)·ε`, `ε ~ N(0, I)` drawn from `rng`.
pub fn sample_weights<'t, T: Real>(vp: VariationalParam<'t, T>, rng: &mut Rng) -> Result<Var<'t, T>> {
    let shape = vp.mu.shape();
    let n = shape.iter().product();
    let eps = (0..n).map(|_| T::lit(StandardNormal.sample(rng))).collect();
    let eps = vp.mu.tape.constant(Tensor::new(shape, eps)?);
    vp.mu.add(vp.sigma().mul(eps)?)
}

/// `Σₖ ln[π·N(wₖ | 0, σ₁²) + (1 − π)·N(wₖ | 0, σ₂²)]`.
pub fn log_prior<'t, T: Real>(w: Var<'t, T>, prior: &Prior) -> Var<'t, T> {
    match *prior {
        Prior::ScaleMixture(p) => w.mixture_log_density(T::lit(p.pi), T::lit(p.sigma1_sq), T::lit(p.sigma2_sq)),
        Prior::Gaussian { var } => w.mixture_log_density(T::one(), T::lit(var), T::lit(var)),
    }
}

/// `Σₖ ln N(wₖ | μₖ, σₖ²)`.
pub fn log_variational_posterior<'t, T: Real>(w: Var<'t, T>, vp: VariationalParam<'t, T>) -> Result<Var<'t, T>> {
    let n = w.value().len() as f64;
    let sigma = vp.sigma();
    let z = w.sub(vp.mu)?.div(sigma)?;
    let quad = z.square().sum().scale(T::lit(-0.5));
    let log_sigma = sigma.log().sum();
    Ok(quad.sub(log_sigma)?.add_scalar(T::lit(-0.5 * n * std::f64::consts::TAU.ln())))
}

/// Single-sample estimate of `ln q(w | θ) − ln p(w)` summed over all tensors,
/// together with the sampled weights.
pub fn sample_with_complexity<'t, T: Real>(
    params: &[VariationalParam<'t, T>],
    prior: &Prior,
    rng: &mut Rng,
) -> Result<(Vec<Var<'t, T>>, Var<'t, T>)> {
    let mut weights = Vec::with_capacity(params.len());
    let mut complexity: Option<Var<'t, T>> = None;
    for &vp in params {
        let w = sample_weights(vp, rng)?;
        let term = log_variational_posterior(w, vp)?.sub(log_prior(w, prior))?;
        complexity = Some(match complexity {
            Some(c) => c.add(term)?,
            None => term,
        });
        weights.push(w);
    }
    let complexity = complexity.ok_or_else(|| Error::InvalidArgument("network has no parameters".into()))?;
    Ok((weights, complexity))
}

/// The minibatch objective `F` for the network described by `net`, with
/// variational parameters `params` (interleaved `μ, ρ` as stored).
/// With `cfg.train_samples > 1`, `F` is averaged over independent draws.
pub fn elbo_minibatch_loss<'t, T: Real>(
    net: &NetworkSpec,
    params: &[Var<'t, T>],
    x: Var<'t, T>,
    targets: &[usize],
    cfg: &BayesConfig,
    rng: &mut Rng,
) -> Result<Var<'t, T>> {
    let prior = cfg.prior.into();
    Ok(elbo_with_outputs(net, params, x, targets, cfg.kl_weight, cfg.train_samples, &prior, rng)?.0)
}

/// [`elbo_minibatch_loss`] with an explicit prior; also returns the network
/// outputs under the first weight draw.
#[allow(clippy::too_many_arguments)]
pub fn elbo_with_outputs<'t, T: Real>(
    net: &NetworkSpec,
    params: &[Var<'t, T>],
    x: Var<'t, T>,
    targets: &[usize],
    kl_weight: f64,
    samples: usize,
    prior: &Prior,
    rng: &mut Rng,
) -> Result<(Var<'t, T>, Var<'t, T>)> {
    let vps = pair_up(params)?;
    let mut total: Option<Var<'t, T>> = None;
    let mut first = None;
    for _ in 0..samples.max(1) {
        let (weights, complexity) = sample_with_complexity(&vps, prior, rng)?;
        let o = forward(net, &weights, x, None)?;
        first.get_or_insert(o);
        let nll = net.head.loss(o, targets)?;
        let f = complexity.scale(T::lit(1.0 / kl_weight)).add(nll)?;
        total = Some(match total {
            Some(t) => t.add(f)?,
            None => f,
        });
    }
    let total = total.expect("at least one sample");
    let loss = if samples > 1 { total.scale(T::lit(1.0 / samples as f64)) } else { total };
    Ok((loss, first.expect("at least one sample")))
}

/// Monte-Carlo predictive distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct McPrediction {
    /// `(1/n)·Σₗ p(y | x, w⁽ˡ⁾)`, one row per input.
    pub mean: Vec<Vec<f64>>,
    /// Per-sample probabilities, indexed `[sample][input]`.
    pub samples: Vec<Vec<Vec<f64>>>,
}

impl McPrediction {
    /// Max-class probability of each sample for input `row`.
    pub fn sample_max(&self, row: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[row].iter().copied().fold(0.0, f64::max)).collect()
    }
}

/// Draws one weight sample from a Bayesian network's posterior.
pub fn sample_network(net: &Network, rng: &mut Rng) -> Result<Network> {
    require_bayesian(net)?;
    let mut spec = net.spec().clone();
    spec.regime = Regime::Deterministic;
    let buffers = net
        .buffers()
        .chunks_exact(2)
        .map(|pair| {
            let (mu, rho) = (&pair[0], &pair[1]);
            let data = mu
                .data()
                .iter()
                .zip(rho.data())
                .map(|(&m, &r)| {
                    let eps: f64 = StandardNormal.sample(rng);
                    (m as f64 + crate::autodiff::softplus(r as f64) * eps) as f32
                })
                .collect();
            Tensor::new(mu.shape().to_vec(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    Network::from_buffers(spec, buffers)
}

/// The posterior mean network (every `w = μ`).
pub fn mean_network(net: &Network) -> Result<Network> {
    require_bayesian(net)?;
    let mut spec = net.spec().clone();
    spec.regime = Regime::Deterministic;
    Network::from_buffers(spec, net.buffers().iter().step_by(2).cloned().collect())
}

fn require_bayesian(net: &Network) -> Result<()> {
    match net.regime() {
        Regime::Bayesian => Ok(()),
        Regime::Deterministic => Err(Error::RegimeMismatch(
            "Monte-Carlo prediction needs a Bayesian network; this one is deterministic".into(),
        )),
    }
}

/// Averages head probabilities over `n` posterior samples. Sample `l` uses
/// its own stream derived from `seed`, so results do not depend on `n`'s
/// other draws.
pub fn mc_predict(net: &Network, inputs: &Tensor<f32>, n: usize, seed: u64) -> Result<McPrediction> {
    mc_predict_with(net, inputs, n, seed, true, true)
}

/// Like [`mc_predict`]; `keep_samples = false` drops the per-sample list
/// (large grids), `thresholded = false` skips the RPL threshold.
pub fn mc_predict_with(
    net: &Network,
    inputs: &Tensor<f32>,
    n: usize,
    seed: u64,
    keep_samples: bool,
    thresholded: bool,
) -> Result<McPrediction> {
    require_bayesian(net)?;
    if n == 0 {
        return Err(Error::InvalidArgument("Monte-Carlo prediction needs at least one sample".into()));
    }
    let rows = inputs.shape()[0];
    let k = net.head().classes();
    let mut mean = vec![vec![0.0; k]; rows];
    let mut samples = Vec::new();
    for l in 0..n {
        let mut rng = rng::substream(seed, Stream::Predict, l as u64);
        let sampled = sample_network(net, &mut rng)?;
        let o = sampled.outputs_chunked(inputs, 4096)?;
        let mut probs = Vec::with_capacity(if keep_samples { rows } else { 0 });
        for (r, acc) in mean.iter_mut().enumerate() {
            let row: Vec<f64> = o.row(r).iter().map(|&v| v as f64).collect();
            let p = if thresholded {
                net.head().probabilities(&row)?
            } else {
                net.head().unthresholded_probabilities(&row)?
            };
            for (a, v) in acc.iter_mut().zip(&p) {
                *a += v;
            }
            if keep_samples {
                probs.push(p);
            }
        }
        if keep_samples {
            samples.push(probs);
        }
    }
    for row in &mut mean {
        for v in row.iter_mut() {
            *v /= n as f64;
        }
    }
    Ok(McPrediction { mean, samples })
}

/// Builds tape variables for every stored buffer of a Bayesian network.
pub fn tape_params<'t>(tape: &'t Tape<f32>, net: &Network) -> Vec<Var<'t, f32>> {
    net.buffers().iter().map(|b| tape.param(b.clone())).collect()
}
