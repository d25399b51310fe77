//! Trains softmax and RPL heads on the spiral and compares what they say
//! about a point far from the data.
//!
//! cargo run --release --example spiral_heads [EPOCHS]

use rpl::config::RunConfig;
use rpl::{data, metrics, Tensor};

fn main() -> rpl::Result<()> {
    let epochs = std::env::args().nth(1).map(|s| s.parse().expect("EPOCHS must be an integer"));
    let probe = Tensor::new(vec![1, 2], data::FAR_PROBE.to_vec())?;
    for preset in ["spiral_softmax", "spiral_rpl"] {
        let mut cfg = RunConfig::preset(preset)?;
        if let Some(e) = epochs {
            cfg.train.epochs = e;
        }
        let run = cfg.execute(|_| {})?;
        let acc = metrics::accuracy(&run.net, &run.data.train)?;
        let p = metrics::evaluate_inputs(&run.net, &probe)?.probabilities.remove(0);
        println!(
            "{preset:>15}: train accuracy {acc:.4}, probabilities at {:?} = {:.4?} (sum {:.4})",
            data::FAR_PROBE,
            p,
            p.iter().sum::<f64>()
        );
    }
    Ok(())
}
