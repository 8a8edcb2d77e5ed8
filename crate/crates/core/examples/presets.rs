//! Lists every ablation preset and the configurations it expands to.
//!
//! cargo run --release --example presets

use hg2p::harness::{ablation_preset, RunConfig, PRESETS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = RunConfig::default();
    for name in PRESETS {
        println!("{name}:");
        for (label, cfg) in ablation_preset(name, &base)? {
            println!(
                "  {label:18} sampler={:?} alpha={} gp={} lambda_gp={} landmarks={}+{}",
                cfg.sampler, cfg.alpha, cfg.gp, cfg.lambda_gp, cfg.n_cov, cfg.n_nov
            );
        }
    }
    Ok(())
}
