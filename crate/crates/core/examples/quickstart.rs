//! Trains a hierarchical agent on the U-maze for a few thousand steps and
//! prints the evaluation curve.
//!
//! cargo run --release --example quickstart [steps]

use hg2p::env::MazeName;
use hg2p::harness::{run_training, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20_000);
    let cfg = RunConfig {
        maze: MazeName::UMaze12,
        total_steps: steps,
        eval_interval: (steps / 4).max(1),
        save_replay: false,
        ..RunConfig::default()
    };
    let (summary, trainer) = run_training(cfg, None)?;
    for m in &trainer.metrics {
        println!(
            "step {:6}: success {:.1}, eval return {:7.1}, landmarks {:?}, edges {:?}",
            m.step, m.success_rate, m.eval_return, m.landmarks, m.edges
        );
    }
    println!("{} episodes in {:.1}s", summary.episodes, summary.wall_seconds);
    Ok(())
}
