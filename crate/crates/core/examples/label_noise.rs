//! Trains both heads on a spiral with a fraction of the labels replaced,
//! then scores them against the clean labels.
//!
//! cargo run --release --example label_noise [EPOCHS] [NOISE_FRACTION]

use rpl::config::{DatasetConfig, RunConfig};
use rpl::metrics;

fn main() -> rpl::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: Option<usize> = args.next().map(|s| s.parse().expect("EPOCHS must be an integer"));
    let fraction: f64 = args.next().map_or(0.1, |s| s.parse().expect("NOISE_FRACTION must be a number"));

    for preset in ["spiral_softmax", "spiral_rpl"] {
        let mut cfg = RunConfig::preset(preset)?;
        if let Some(e) = epochs {
            cfg.train.epochs = e;
        }
        if let DatasetConfig::Spiral { noise_fraction, .. } = &mut cfg.dataset {
            *noise_fraction = fraction;
        }
        let run = cfg.execute(|_| {})?;
        let noisy = metrics::accuracy(&run.net, &run.data.train)?;
        let clean = metrics::accuracy(&run.net, &run.data.train_clean)?;
        println!("{preset:>15}: accuracy on noisy labels {noisy:.4}, on clean labels {clean:.4}");
    }
    Ok(())
}
