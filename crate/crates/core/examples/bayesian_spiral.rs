//! Bayes-by-backprop RPL on the spiral: predictive distributions of the
//! max-class probability at a training point and at a far-away point.
//!
//! cargo run --release --example bayesian_spiral [EPOCHS]

use rpl::bayes;
use rpl::config::RunConfig;
use rpl::{data, Tensor};

fn summary(values: &[f64]) -> String {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    format!("mean {mean:.3}, 10% {:.3}, median {:.3}, 90% {:.3}", v[v.len() / 10], v[v.len() / 2], v[v.len() * 9 / 10])
}

fn main() -> rpl::Result<()> {
    let mut cfg = RunConfig::preset("spiral_rpl_bayes")?;
    if let Some(e) = std::env::args().nth(1) {
        cfg.train.epochs = e.parse().expect("EPOCHS must be an integer");
    }
    let run = cfg.execute(|r| {
        if r.epoch % 5000 == 0 {
            eprintln!("epoch {} loss {:.3}", r.epoch, r.train_loss);
        }
    })?;

    let train = &run.data.train_clean;
    let near = train.inputs().row(train.len() / train.classes() / 2).to_vec();
    let points = Tensor::new(vec![2, 2], [near.clone(), data::FAR_PROBE.to_vec()].concat())?;
    let pred = bayes::mc_predict(&run.net, &points, 200, cfg.seed)?;
    println!("training point {near:?}: {}", summary(&pred.sample_max(0)));
    println!("far point {:?}: {}", data::FAR_PROBE, summary(&pred.sample_max(1)));
    Ok(())
}
