//! Acceptance run: trains the preset models and checks every primary
//! criterion, printing one PASS/FAIL line each. Takes roughly 15 minutes on
//! one core. Run with `cargo test --release --test acceptance`.
//!
//! MNIST is read from `$RPL_MNIST_DIR` or `data/mnist` at the workspace root.

mod common;

use std::time::Instant;

use rpl::bayes;
use rpl::config::{DatasetConfig, RunConfig, TrainedRun};
use rpl::data::{self, Grid2D};
use rpl::heads::Head;
use rpl::metrics::{self, AttackConfig};
use rpl::Tensor;

const MC_SAMPLES: usize = 200;
const NOISE_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const BETAS: [f64; 4] = [1.0, 2.0, 5.0, 10.0];

struct Report {
    results: Vec<bool>,
}

impl Report {
    fn record(&mut self, name: &str, pass: bool, detail: impl AsRef<str>) {
        println!("{} {name}: {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
        self.results.push(pass);
    }
}

fn run_preset(name: &str, tweak: impl FnOnce(&mut RunConfig)) -> rpl::Result<TrainedRun> {
    let mut cfg = RunConfig::preset(name)?;
    if let DatasetConfig::Mnist { dir, .. } = &mut cfg.dataset {
        *dir = Some(common::mnist_dir());
    }
    tweak(&mut cfg);
    let start = Instant::now();
    let run = cfg.execute(|_| {})?;
    eprintln!("  trained {name} (seed {}) in {:.0?}", cfg.seed, start.elapsed());
    Ok(run)
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

fn mnist(report: &mut Report) {
    let runs = run_preset("mnist_softmax", |_| {}).and_then(|s| Ok((s, run_preset("mnist_rpl", |_| {})?)));
    let (softmax, rpl_run) = match runs {
        Ok(r) => r,
        Err(e) => {
            for name in ["mnist accuracy", "head agreement", "confidence separation", "fgsm ordering"] {
                report.record(name, false, format!("MNIST run failed: {e}"));
            }
            return;
        }
    };
    let test = &softmax.data.test;
    let acc_s = metrics::accuracy(&softmax.net, test).unwrap();
    let acc_r = metrics::accuracy(&rpl_run.net, test).unwrap();
    report.record(
        "mnist accuracy",
        acc_s >= 0.983 && acc_r >= 0.983,
        format!("softmax {acc_s:.4}, rpl {acc_r:.4} (need both >= 0.983)"),
    );
    let gap = (acc_s - acc_r).abs();
    report.record("head agreement", gap <= 0.005, format!("|{acc_s:.4} - {acc_r:.4}| = {gap:.4} (need <= 0.005)"));

    let hs = metrics::confidence_histogram(&softmax.net, test, 20).unwrap();
    let hr = metrics::confidence_histogram(&rpl_run.net, test, 20).unwrap();
    let (rw, rc, sw) = (hr.median_wrong(), hr.median_correct(), hs.median_wrong());
    let pass = matches!((rw, rc, sw), (Some(rw), Some(rc), Some(sw)) if rw < 0.5 && rw < rc && sw > rw);
    report.record(
        "confidence separation",
        pass,
        format!("rpl wrong median {}, rpl correct median {}, softmax wrong median {}", fmt(rw), fmt(rc), fmt(sw)),
    );

    let cfg = AttackConfig::default();
    let cs = metrics::accuracy_vs_epsilon(&softmax.net, test, &cfg).unwrap();
    let cr = metrics::accuracy_vs_epsilon(&rpl_run.net, test, &cfg).unwrap();
    let large: Vec<_> = cs.iter().zip(&cr).filter(|((e, _), _)| *e >= 0.2 - 1e-9).collect();
    let pass = large.iter().all(|((_, s), (_, r))| r >= s);
    let detail = large
        .iter()
        .map(|((e, s), (_, r))| format!("eps {e:.2}: rpl {r:.4} vs softmax {s:.4}"))
        .collect::<Vec<_>>()
        .join("; ");
    report.record("fgsm ordering", pass, detail);
}

fn spiral(report: &mut Report) {
    let softmax = run_preset("spiral_softmax", |_| {}).unwrap();
    let rpl_run = run_preset("spiral_rpl", |_| {}).unwrap();
    let probe = common::far_probe();

    let p_r = metrics::evaluate_inputs(&rpl_run.net, &probe).unwrap().probabilities.remove(0);
    let p_s = metrics::evaluate_inputs(&softmax.net, &probe).unwrap().probabilities.remove(0);
    let sum_r: f64 = p_r.iter().sum();
    let max_s = max(&p_s);
    report.record(
        "open-world novelty",
        sum_r < 0.1 && max_s > 0.9,
        format!("probe {:?}: rpl sum_p {sum_r:.4} (need < 0.1), softmax max_p {max_s:.4} (need > 0.9)", data::FAR_PROBE),
    );

    let grid = data::make_grid(&Grid2D::default()).unwrap();
    let Head::Rpl(base) = rpl_run.net.head().clone() else { unreachable!("spiral_rpl has an RPL head") };
    let areas: Vec<f64> = BETAS
        .iter()
        .map(|&beta| {
            let net = rpl_run.net.clone().with_head(Head::Rpl(rpl::heads::RplConfig { beta, ..base.clone() })).unwrap();
            common::high_confidence_area(&net, &grid, 0.5)
        })
        .collect();
    let pass = areas.windows(2).all(|w| w[1] < w[0]);
    let detail = BETAS.iter().zip(&areas).map(|(b, a)| format!("beta {b}: {a:.4}")).collect::<Vec<_>>().join(", ");
    report.record("beta sweep", pass, format!("area with max_p > 0.5: {detail}"));

    let mut sums = (0.0, 0.0);
    let mut per_seed = Vec::new();
    for seed in NOISE_SEEDS {
        let tweak = |c: &mut RunConfig| {
            c.seed = seed;
            if let DatasetConfig::Spiral { noise_fraction, .. } = &mut c.dataset {
                *noise_fraction = 0.1;
            }
        };
        let s = run_preset("spiral_softmax", tweak).unwrap();
        let r = run_preset("spiral_rpl", tweak).unwrap();
        let acc_s = metrics::accuracy(&s.net, &s.data.train_clean).unwrap();
        let acc_r = metrics::accuracy(&r.net, &r.data.train_clean).unwrap();
        sums.0 += acc_s;
        sums.1 += acc_r;
        per_seed.push(format!("{acc_r:.3}/{acc_s:.3}"));
    }
    let n = NOISE_SEEDS.len() as f64;
    let (mean_s, mean_r) = (sums.0 / n, sums.1 / n);
    report.record(
        "label-noise robustness",
        mean_r > mean_s,
        format!("clean-label accuracy rpl {mean_r:.4} vs softmax {mean_s:.4} (per seed rpl/softmax: {})", per_seed.join(", ")),
    );
}

fn bayesian(report: &mut Report) {
    let run = run_preset("spiral_rpl_bayes", |_| {}).unwrap();
    let train = &run.data.train_clean;
    // middle of the first class's arm
    let idx = train.len() / train.classes() / 2;
    let point = train.inputs().row(idx).to_vec();
    let inputs = Tensor::new(vec![2, 2], [data::FAR_PROBE.to_vec(), point.clone()].concat()).unwrap();
    let pred = bayes::mc_predict(&run.net, &inputs, MC_SAMPLES, 0).unwrap();
    let far = max(&pred.mean[0]);
    let near = max(&pred.mean[1]);
    report.record(
        "bayesian predictive distributions",
        far < 0.3 && near > 0.6,
        format!(
            "{MC_SAMPLES} samples: far probe mean max_p {far:.4} (need < 0.3), training point {point:?} mean max_p {near:.4} (need > 0.6)"
        ),
    );
}

fn oracles(report: &mut Report) {
    let ops = common::op_gradient_errors(100);
    let (worst_op, worst) = ops.iter().copied().fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let rpl_err = common::rpl_loss_gradient_error(100);
    let elbo = common::elbo_gradient_error();
    let (est, closed) = common::mc_kl_vs_closed_form(1_000_000);
    let kl_rel = ((est - closed) / closed).abs();
    let conv = common::conv2d_mismatches(20);
    report.record(
        "numerical oracles",
        worst < 1e-4 && rpl_err < 1e-4 && elbo < 1e-3 && kl_rel < 0.01 && conv == 0,
        format!(
            "ops max rel err {worst:.1e} ({worst_op}), rpl loss {rpl_err:.1e}, elbo {elbo:.1e}, mc-kl {est:.5} vs {closed:.5} ({:.3}%), conv2d mismatches {conv}",
            kl_rel * 100.0
        ),
    );
}

fn invariants(report: &mut Report) {
    let checks: [(&str, fn(u32) -> Result<(), String>, u32); 6] = [
        ("softmax normalization/shift", common::softmax_normalized_and_shift_invariant, 256),
        ("rpl bounds", common::rpl_probabilities_bounded, 256),
        ("prototype geometry", common::prototype_geometry, 256),
        ("fgsm inf-norm", common::fgsm_respects_infinity_norm, 64),
        ("histogram mass", common::histogram_conserves_mass, 256),
        ("seed determinism", common::seed_determinism, 8),
    ];
    let failures: Vec<String> =
        checks.iter().filter_map(|(name, f, cases)| f(*cases).err().map(|e| format!("{name}: {e}"))).collect();
    let detail = if failures.is_empty() { format!("{} property groups hold", checks.len()) } else { failures.join("; ") };
    report.record("invariants", failures.is_empty(), detail);
}

fn main() {
    let start = Instant::now();
    let mut report = Report { results: Vec::new() };
    mnist(&mut report);
    spiral(&mut report);
    bayesian(&mut report);
    oracles(&mut report);
    invariants(&mut report);
    let passed = report.results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed in {:.0?}", report.results.len(), start.elapsed());
    if passed != report.results.len() {
        std::process::exit(1);
    }
}
