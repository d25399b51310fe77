//! Loads a run configuration (a preset name or a JSON file), applies
//! overrides and prints the resolved config and its hash.
//!
//! cargo run --example run_config [PRESET|FILE]

use rpl::config::{RunConfig, PRESET_NAMES};

fn main() -> rpl::Result<()> {
    let arg = std::env::args().nth(1).unwrap_or_else(|| "spiral_rpl".into());
    let mut cfg = if PRESET_NAMES.contains(&arg.as_str()) { RunConfig::preset(&arg)? } else { RunConfig::from_file(&arg)? };
    println!("presets: {}", PRESET_NAMES.join(", "));
    println!("{} hashes to {}", cfg.name, cfg.hash());
    cfg.train.epochs = 10;
    cfg.validate()?;
    println!("with 10 epochs it hashes to {}\n{}", cfg.hash(), cfg.to_json_pretty());
    println!("network: {} parameters", cfg.network_spec()?.param_count());
    Ok(())
}
