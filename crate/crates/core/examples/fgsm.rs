//! Accuracy of trained MNIST checkpoints under FGSM perturbations.
//!
//! cargo run --release --example fgsm mnist_runs/mnist_softmax.ckpt mnist_runs/mnist_rpl.ckpt

use rpl::data::{self, MnistSplit};
use rpl::metrics::{self, AttackConfig};
use rpl::{checkpoint, config};

fn main() -> rpl::Result<()> {
    let paths: Vec<String> = std::env::args().skip(1).collect();
    if paths.is_empty() {
        eprintln!("usage: fgsm CHECKPOINT...");
        std::process::exit(2);
    }
    let test = data::load_mnist(config::mnist_dir(None), MnistSplit::Test)?;
    let cfg = AttackConfig::default();
    for path in &paths {
        let net = checkpoint::load(path)?;
        let curve = metrics::accuracy_vs_epsilon(&net, &test, &cfg)?;
        let line: Vec<String> = curve.iter().map(|(e, a)| format!("{e:.2}:{a:.3}")).collect();
        println!("{path}: {}", line.join(" "));
    }
    Ok(())
}
