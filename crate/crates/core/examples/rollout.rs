//! Replays one evaluation episode of a trained checkpoint, printing the
//! subgoal chosen at every decision and dumping the path as JSONL.
//!
//! cargo run --release --example rollout -- runs/seed-0 [out.jsonl]

use std::path::PathBuf;

use hg2p::agent::HierAgent;
use hg2p::env::TrajectoryDump;
use hg2p::harness::{stream, RunConfig, Stream, CHECKPOINT_FILE, CONFIG_FILE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().ok_or("usage: rollout <run-dir> [out.jsonl]")?);
    let out = args.next().map(PathBuf::from);
    let cfg = RunConfig::from_json(&std::fs::read_to_string(dir.join(CONFIG_FILE))?)?;
    let agent = HierAgent::load(&dir.join(CHECKPOINT_FILE))?;
    let spec = cfg.maze_spec();
    let mut state = spec.reset_eval(&mut stream(0, Stream::Eval));
    let mut dump = TrajectoryDump::default();
    let mut sg = Vec::new();
    loop {
        let obs = state.observation();
        if state.step % agent.cfg.horizon == 0 {
            sg = agent.act_high(&obs, &state.goal)?;
            println!("t={:4} pos=({:6.2},{:6.2}) subgoal=({:6.2},{:6.2})", state.step, obs[0], obs[1], sg[0], sg[1]);
        }
        let a = agent.act_low(&obs, &sg)?;
        let o = spec.step(&state, [a[0], a[1]]);
        dump.push(&o);
        sg = agent.subgoal_transition(&obs, &sg, &o.state.observation());
        state = o.state;
        if o.done {
            println!("done at t={} success={}", state.step, o.success);
            break;
        }
    }
    if let Some(p) = out {
        dump.write_jsonl(std::fs::File::create(&p)?)?;
        println!("wrote {}", p.display());
    }
    Ok(())
}
