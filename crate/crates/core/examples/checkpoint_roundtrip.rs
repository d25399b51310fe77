//! Builds a network from a spec, trains it briefly, saves and reloads the
//! checkpoint and confirms the outputs are unchanged.

use rpl::data::{self, SpiralConfig};
use rpl::heads::{Head, RplConfig};
use rpl::layers::{Network, NetworkSpec, Regime};
use rpl::optim::OptimizerConfig;
use rpl::trainer::{self, TrainConfig};
use rpl::checkpoint;

fn main() -> rpl::Result<()> {
    let ds = data::spiral_generate(&SpiralConfig::default(), 3)?;
    let spec = NetworkSpec::dense(&[2, 32, 32, 3], Head::Rpl(RplConfig::new(3, 1.0, 5.0)?), Regime::Deterministic)?;
    let mut net = Network::build(spec, 3)?;
    let log = trainer::train(&mut net, &ds, None, &TrainConfig::new(OptimizerConfig::rmsprop(0.005, 0.9), 200, 50, 3))?;
    println!("{} parameters, final loss {:.4}", net.param_count(), log.last().unwrap().train_loss);

    let path = std::env::temp_dir().join("rpl_roundtrip.ckpt");
    checkpoint::save(&net, &path)?;
    let back = checkpoint::load(&path)?;
    let same = net.outputs(ds.inputs())? == back.outputs(ds.inputs())?;
    println!("reloaded {} ({} bytes): outputs identical = {same}", path.display(), std::fs::metadata(&path)?.len());
    Ok(())
}
