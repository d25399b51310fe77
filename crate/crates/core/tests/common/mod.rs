//! Checks shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::path::PathBuf;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rpl::autodiff::{finite_difference_check, graph_fn, Tape, Var};
use rpl::bayes::{self, BayesConfig, Prior, VariationalParam};
use rpl::data::{self, Dataset, SpiralConfig};
use rpl::heads::{self, Head, RplConfig};
use rpl::layers::{self, Activation, LayerSpec, Network, NetworkSpec, Regime};
use rpl::metrics;
use rpl::optim::OptimizerConfig;
use rpl::rng::{self, Stream};
use rpl::trainer::{self, TrainConfig};
use rpl::{Result, Tensor};

pub const FD_STEP: f64 = 1e-4;

/// MNIST location: `$RPL_MNIST_DIR`, else `data/mnist` at the workspace root.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("RPL_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn t64(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    t64(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect())
}

// keeps ReLU and max kinks out of reach of ±h
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    t64(
        shape,
        (0..n)
            .map(|_| {
                let m = rng.gen_range(0.1..2.0);
                if rng.gen_bool(0.5) { m } else { -m }
            })
            .collect(),
    )
}

fn weighted_sum<'t>(tape: &'t Tape<f64>, v: Var<'t, f64>) -> Result<Var<'t, f64>> {
    let shape = v.shape();
    let n: usize = shape.iter().product();
    let w = (0..n).map(|i| 0.3 + 0.17 * (i % 7) as f64).collect();
    v.mul(tape.constant(t64(&shape, w))).map(Var::sum)
}

type Graph = Box<dyn for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>>;
type Case = fn(&mut ChaCha8Rng) -> (Vec<Tensor<f64>>, Graph);

fn op_cases() -> Vec<(&'static str, Case)> {
    vec![
        ("matmul", |r| (vec![random(r, &[3, 4], -1.0, 1.0), random(r, &[4, 2], -1.0, 1.0)], Box::new(|t, v| weighted_sum(t, v[0].matmul(v[1])?)))),
        ("affine", |r| {
            (
                vec![random(r, &[3, 4], -1.0, 1.0), random(r, &[4, 2], -1.0, 1.0), random(r, &[2], -1.0, 1.0)],
                Box::new(|t, v| weighted_sum(t, v[0].affine(v[1], v[2])?)),
            )
        }),
        ("conv2d", |r| (vec![random(r, &[2, 2, 6, 6], -1.0, 1.0), random(r, &[3, 2, 5, 5], -1.0, 1.0)], Box::new(|t, v| weighted_sum(t, v[0].conv2d(v[1])?)))),
        ("maxpool2d", |r| {
            let mut vals: Vec<f64> = (0..32).map(|i| i as f64 * 0.1).collect();
            for i in (1..vals.len()).rev() {
                vals.swap(i, r.gen_range(0..=i));
            }
            (vec![t64(&[1, 2, 4, 4], vals)], Box::new(|t, v| weighted_sum(t, v[0].maxpool2d()?)))
        }),
        ("relu", |r| (vec![away_from_zero(r, &[2, 5])], Box::new(|t, v| weighted_sum(t, v[0].relu())))),
        ("exp", |r| (vec![random(r, &[7], -2.0, 2.0)], Box::new(|t, v| weighted_sum(t, v[0].exp())))),
        ("log", |r| (vec![random(r, &[7], 0.2, 3.0)], Box::new(|t, v| weighted_sum(t, v[0].log())))),
        ("sum", |r| (vec![random(r, &[2, 3], -2.0, 2.0)], Box::new(|_, v| Ok(v[0].square().sum())))),
        ("mean", |r| (vec![random(r, &[2, 3], -2.0, 2.0)], Box::new(|_, v| Ok(v[0].square().mean())))),
        ("l2_norm_rows", |r| (vec![away_from_zero(r, &[4, 3])], Box::new(|t, v| weighted_sum(t, v[0].l2_norm_rows()?)))),
        ("add", |r| (vec![random(r, &[6], -1.0, 1.0), random(r, &[6], -1.0, 1.0)], Box::new(|t, v| weighted_sum(t, v[0].add(v[1])?.square())))),
        ("sub", |r| (vec![random(r, &[6], -1.0, 1.0), random(r, &[6], -1.0, 1.0)], Box::new(|t, v| weighted_sum(t, v[0].sub(v[1])?.square())))),
        ("mul", |r| (vec![random(r, &[6], -1.0, 1.0), random(r, &[6], -1.0, 1.0)], Box::new(|t, v| weighted_sum(t, v[0].mul(v[1])?)))),
        ("softmax_cross_entropy", |r| (vec![random(r, &[3, 4], -2.0, 2.0)], Box::new(|_, v| v[0].softmax_cross_entropy(&[0, 3, 1])))),
    ]
}

/// Worst relative gradient error per op over `instances` random draws.
pub fn op_gradient_errors(instances: usize) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    op_cases()
        .into_iter()
        .map(|(name, case)| {
            let worst = (0..instances)
                .map(|_| {
                    let (params, f) = case(&mut rng);
                    finite_difference_check(|t, v| f(t, v), &params, FD_STEP).unwrap()
                })
                .fold(0.0, f64::max);
            (name, worst)
        })
        .collect()
}

/// Worst relative gradient error of the batched RPL loss over random outputs.
pub fn rpl_loss_gradient_error(instances: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    (0..instances)
        .map(|i| {
            let cfg = RplConfig::new(4, rng.gen_range(0.5..2.0), rng.gen_range(0.5..8.0)).unwrap();
            let o = random(&mut rng, &[3, 4], -2.0, 2.0);
            let targets = [i % 4, (i + 1) % 4, (i + 3) % 4];
            let f = graph_fn(|_, v| heads::rpl_nll_batch(v[0], &targets, &cfg));
            finite_difference_check(f, &[o], FD_STEP).unwrap()
        })
        .fold(0.0, f64::max)
}

/// Relative gradient error of the minibatch ELBO of a 2-weight toy network.
pub fn elbo_gradient_error() -> f64 {
    let spec = NetworkSpec::new(
        vec![1],
        vec![LayerSpec::Dense { inputs: 1, outputs: 2, activation: Activation::None }],
        Head::Rpl(RplConfig::new(2, 1.0, 2.0).unwrap()),
        Regime::Bayesian,
    )
    .unwrap();
    let x = t64(&[3, 1], vec![0.5, -1.0, 2.0]);
    let y = [0usize, 1, 1];
    let cfg = BayesConfig::default();
    let f = graph_fn(|tape, p| {
        let mut r = rng::stream(9, Stream::WeightNoise);
        bayes::elbo_minibatch_loss(&spec, p, tape.constant(x.clone()), &y, &cfg, &mut r)
    });
    let params = vec![
        t64(&[1, 2], vec![0.3, -0.2]),
        t64(&[1, 2], vec![-2.0, -1.5]),
        Tensor::from_vec(vec![0.1, 0.05]),
        Tensor::from_vec(vec![-2.5, -2.2]),
    ];
    finite_difference_check(f, &params, 1e-6).unwrap()
}

/// Monte-Carlo estimate of KL(q‖p) for one weight with q = N(μ, σ²) and a
/// Gaussian prior, against the closed form. Returns `(estimate, closed_form)`.
pub fn mc_kl_vs_closed_form(samples: usize) -> (f64, f64) {
    let (mu, sigma, var_p) = (0.5f64, 0.3f64, 1.0f64);
    let closed = (var_p.sqrt() / sigma).ln() + (sigma * sigma + mu * mu) / (2.0 * var_p) - 0.5;
    let tape = Tape::<f64>::new();
    let vp = VariationalParam {
        mu: tape.constant(Tensor::full(&[1], mu)),
        rho: tape.constant(Tensor::full(&[1], layers::inverse_softplus(sigma))),
    };
    let mut r = rng::stream(17, Stream::WeightNoise);
    let prior = Prior::Gaussian { var: var_p };
    let mut total = 0.0;
    for _ in 0..samples {
        let w = bayes::sample_weights(vp, &mut r).unwrap();
        let lq = bayes::log_variational_posterior(w, vp).unwrap().value().item();
        let lp = bayes::log_prior(w, &prior).value().item();
        total += lq - lp;
    }
    (total / samples as f64, closed)
}

fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>) -> Tensor<f64> {
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![0.0; b * o * oh * ow];
    for bi in 0..b {
        for oc in 0..o {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                acc += x.data()[((bi * c + ci) * h + y + ky) * w + xx + kx]
                                    * k.data()[((oc * c + ci) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((bi * o + oc) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    t64(&[b, o, oh, ow], out)
}

/// Number of random integer-valued instances on which conv2d differs from
/// the naive loops at all.
pub fn conv2d_mismatches(instances: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..instances)
        .filter(|_| {
            let x = random(&mut rng, &[2, 3, 12, 12], -4.0, 4.0).map(f64::round);
            let k = random(&mut rng, &[4, 3, 5, 5], -4.0, 4.0).map(f64::round);
            let tape = Tape::new();
            let fast = tape.constant(x.clone()).conv2d(tape.constant(k.clone())).unwrap();
            *fast.value() != naive_conv(&x, &k)
        })
        .count()
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(Config { cases, failure_persistence: None, ..Config::default() }, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> std::result::Result<(), TestCaseError>) -> std::result::Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

pub fn softmax_normalized_and_shift_invariant(cases: u32) -> std::result::Result<(), String> {
    let s = (prop::collection::vec(-30.0f64..30.0, 2..12), -50.0f64..50.0);
    check(cases, s, |(o, shift)| {
        let p = heads::softmax_probabilities(&o).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let shifted: Vec<f64> = o.iter().map(|v| v + shift).collect();
        let q = heads::softmax_probabilities(&shifted).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        Ok(())
    })
}

pub fn rpl_probabilities_bounded(cases: u32) -> std::result::Result<(), String> {
    let s = (2usize..10, 0.1f64..5.0, 0.1f64..10.0, prop::collection::vec(-5.0f64..5.0, 10));
    check(cases, s, |(k, a, beta, o)| {
        let cfg = RplConfig::new(k, a, beta).unwrap();
        let d = heads::rpl_distances(&o[..k], &cfg).unwrap();
        let p = heads::rpl_probabilities(&d, &cfg);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let nearest = d.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
        prop_assert_eq!(heads::argmax(&heads::rpl_unthresholded(&d, &cfg)), nearest);
        Ok(())
    })
}

pub fn prototype_geometry(cases: u32) -> std::result::Result<(), String> {
    check(cases, (2usize..20, 0.01f64..10.0), |(k, a)| {
        let protos = RplConfig::new(k, a, 1.0).unwrap().prototypes();
        for i in 0..k {
            let pi = protos.get(i);
            let norm = pi.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - a).abs() <= 1e-12 * a.max(1.0));
            for j in (i + 1)..k {
                let pj = protos.get(j);
                let dist = pi.iter().zip(&pj).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                prop_assert!((dist - 2f64.sqrt() * a).abs() <= 1e-12 * a.max(1.0));
            }
        }
        Ok(())
    })
}

fn small_net(head: Head, seed: u64) -> Network {
    Network::build(NetworkSpec::dense(&[6, 16, 3], head, Regime::Deterministic).unwrap(), seed).unwrap()
}

pub fn fgsm_respects_infinity_norm(cases: u32) -> std::result::Result<(), String> {
    check(cases, (0u64..1000, 0.0f64..0.6, any::<bool>()), |(seed, eps, rpl_head)| {
        let head = if rpl_head { Head::Rpl(RplConfig::new(3, 1.0, 5.0).unwrap()) } else { Head::Softmax { classes: 3 } };
        let net = small_net(head, seed);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::new(vec![8, 6], (0..48).map(|_| r.gen_range(0.0f32..=1.0)).collect()).unwrap();
        let y: Vec<usize> = (0..8).map(|i| i % 3).collect();
        let adv = metrics::fgsm(&net, &x, &y, eps, [0.0, 1.0]).unwrap();
        for (a, b) in adv.data().iter().zip(x.data()) {
            prop_assert!(((a - b).abs() as f64) <= eps + 1e-6);
            prop_assert!((0.0..=1.0).contains(a));
        }
        Ok(())
    })
}

pub fn histogram_conserves_mass(cases: u32) -> std::result::Result<(), String> {
    let s = (prop::collection::vec((0.0f64..=1.0, 0usize..3, 0usize..3), 1..300), 1usize..40);
    check(cases, s, |(rows, bins)| {
        let conf: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let pred: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let labels: Vec<usize> = rows.iter().map(|r| r.2).collect();
        let h = metrics::histogram_from(&conf, &pred, &labels, bins).unwrap();
        prop_assert_eq!(h.total(), rows.len());
        let right = pred.iter().zip(&labels).filter(|(p, l)| p == l).count();
        prop_assert_eq!(h.correct.iter().sum::<usize>(), right);
        Ok(())
    })
}

/// Trains the same small spiral model twice per seed and compares logs and weights bit for bit.
pub fn seed_determinism(cases: u32) -> std::result::Result<(), String> {
    check(cases, 0u64..10_000, |seed| {
        let ds = data::spiral_generate(&SpiralConfig { n_per_class: 20, ..Default::default() }, seed).unwrap();
        let run = || {
            let spec = NetworkSpec::dense(&[2, 16, 3], Head::Rpl(RplConfig::new(3, 1.0, 5.0).unwrap()), Regime::Deterministic).unwrap();
            let mut net = Network::build(spec, seed).unwrap();
            let cfg = TrainConfig::new(OptimizerConfig::rmsprop(0.005, 0.9), 5, 16, seed);
            let log = trainer::train(&mut net, &ds, Some(&ds), &cfg).unwrap();
            (format!("{log:?}"), net.buffers().to_vec())
        };
        prop_assert_eq!(run(), run());
        Ok(())
    })
}

/// Fraction of grid points whose max class probability exceeds `level`.
pub fn high_confidence_area(net: &Network, grid: &Tensor<f32>, level: f64) -> f64 {
    let eval = metrics::evaluate_inputs(net, grid).unwrap();
    let n = eval.probabilities.len();
    eval.probabilities.iter().filter(|p| p.iter().copied().fold(0.0, f64::max) > level).count() as f64 / n as f64
}

pub fn far_probe() -> Tensor<f32> {
    Tensor::new(vec![1, 2], data::FAR_PROBE.to_vec()).unwrap()
}

pub fn spiral_clean(seed: u64) -> Dataset {
    data::spiral_generate(&SpiralConfig::default(), seed).unwrap()
}
