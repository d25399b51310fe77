//! Trains the MNIST CNN with softmax and RPL heads and compares accuracy
//! and the confidence of wrong predictions. Checkpoints go to OUT_DIR.
//!
//! RPL_MNIST_DIR=data/mnist cargo run --release --example mnist_heads [EPOCHS] [OUT_DIR]

use rpl::config::RunConfig;
use rpl::{checkpoint, metrics};

fn main() -> rpl::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: Option<usize> = args.next().map(|s| s.parse().expect("EPOCHS must be an integer"));
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "mnist_runs".into()));

    for preset in ["mnist_softmax", "mnist_rpl"] {
        let mut cfg = RunConfig::preset(preset)?;
        if let Some(e) = epochs {
            cfg.train.epochs = e;
        }
        let run = cfg.execute(|r| eprintln!("{preset} epoch {} loss {:.4} test {:.4?}", r.epoch, r.train_loss, r.test_acc))?;
        let hist = metrics::confidence_histogram(&run.net, &run.data.test, 20)?;
        println!(
            "{preset:>13}: test accuracy {:.4}, median confidence correct {:.3?} / wrong {:.3?}",
            metrics::accuracy(&run.net, &run.data.test)?,
            hist.median_correct(),
            hist.median_wrong()
        );
        std::fs::create_dir_all(&out)?;
        checkpoint::save(&run.net, out.join(format!("{preset}.ckpt")))?;
    }
    Ok(())
}
