//! Evaluates one trained RPL spiral model at several β and writes a
//! probability grid per value.
//!
//! cargo run --release --example beta_sweep [EPOCHS] [OUT_DIR]

use std::fs::File;

use rpl::cli::write_grid_csv;
use rpl::config::RunConfig;
use rpl::data::{self, Grid2D};
use rpl::heads::Head;
use rpl::metrics;

fn main() -> rpl::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::preset("spiral_rpl")?;
    if let Some(e) = args.next() {
        cfg.train.epochs = e.parse().expect("EPOCHS must be an integer");
    }
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "beta_sweep".into()));
    std::fs::create_dir_all(&out)?;

    let run = cfg.execute(|_| {})?;
    let Head::Rpl(base) = run.net.head().clone() else { unreachable!() };
    let grid = data::make_grid(&Grid2D::default())?;
    for beta in [1.0, 2.0, 5.0, 10.0] {
        let net = run.net.clone().with_head(Head::Rpl(rpl::heads::RplConfig { beta, ..base.clone() }))?;
        let eval = metrics::evaluate_inputs(&net, &grid)?;
        let confident = eval.confidences().iter().filter(|&&c| c > 0.5).count();
        let path = out.join(format!("grid_beta{beta}.csv"));
        write_grid_csv(&grid, &eval.probabilities, &mut File::create(&path)?)?;
        println!("beta {beta:>4}: {:.2}% of the grid has max probability > 0.5 -> {}", 100.0 * confident as f64 / grid.shape()[0] as f64, path.display());
    }
    Ok(())
}
