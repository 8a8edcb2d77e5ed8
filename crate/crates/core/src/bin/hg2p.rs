//! Command-line front end: `train`, `eval` and `export`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hg2p::agent::HierAgent;
use hg2p::harness::{
    ablation_preset, evaluate, export_artifacts, out_dir_from_env, run_training, stream, threads_from_env, HarnessError,
    RunConfig, Stream, CONFIG_FILE,
};

#[derive(Parser)]
#[command(name = "hg2p", version, about = "Train and evaluate landmark-guided hierarchical agents on point mazes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one configuration, or every configuration of an ablation preset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        preset: Option<String>,
        /// Output directory (overridden by HG2P_OUT_DIR).
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint with the configuration stored next to it.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: usize,
        /// Configuration file; defaults to config.json beside the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Regenerate landmark and density CSVs for a run directory.
    Export {
        #[arg(long)]
        run: PathBuf,
    },
}

fn train_one(label: &str, cfg: RunConfig, dir: &Path) -> Result<(), HarnessError> {
    eprintln!("[{label}] training {} steps on {:?} -> {}", cfg.total_steps, cfg.maze, dir.display());
    let (summary, _) = run_training(cfg, Some(dir))?;
    eprintln!(
        "[{label}] done: final success {:?}, best {:?}, {:.1}s",
        summary.final_success, summary.best_success, summary.wall_seconds
    );
    Ok(())
}

fn train(config: &Path, seed: Option<u64>, preset: Option<&str>, out: &Path) -> Result<(), HarnessError> {
    let mut base = RunConfig::load(config)?;
    if let Some(s) = seed {
        base.seed = s;
    }
    let out = out_dir_from_env(out);
    let Some(name) = preset else {
        return train_one("run", base.clone(), &out.join(format!("seed-{}", base.seed)));
    };
    let jobs: Vec<(String, RunConfig, PathBuf)> = ablation_preset(name, &base)?
        .into_iter()
        .map(|(label, cfg)| {
            let dir = out.join(name).join(&label).join(format!("seed-{}", cfg.seed));
            (label, cfg, dir)
        })
        .collect();
    let threads = threads_from_env().min(jobs.len()).max(1);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<Result<(), HarnessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                s.spawn(|| {
                    let mut out = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                        let Some((label, cfg, dir)) = jobs.get(i) else { break };
                        out.push(train_one(label, cfg.clone(), dir));
                    }
                    out
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    results.into_iter().collect()
}

fn eval(checkpoint: &Path, episodes: usize, config: Option<&Path>, seed: u64) -> Result<(), HarnessError> {
    let cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => {
            let dir = checkpoint.parent().unwrap_or(Path::new("."));
            RunConfig::from_json(&std::fs::read_to_string(dir.join(CONFIG_FILE))?)?
        }
    };
    let agent = HierAgent::load(checkpoint)?;
    let expected = cfg.agent_config();
    if agent.cfg.horizon != expected.horizon || agent.cfg.eta != expected.eta || agent.low.cfg.hidden != expected.low.hidden {
        return Err(HarnessError::Config("checkpoint does not match the configuration".into()));
    }
    let r = evaluate(&agent, &cfg.maze_spec(), episodes, &mut stream(seed, Stream::Eval))?;
    println!("success_rate={} successes={}/{} mean_return={}", r.success_rate, r.successes, r.episodes, r.mean_return);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Train { config, seed, preset, out } => train(config, *seed, preset.as_deref(), out),
        Cmd::Eval { checkpoint, episodes, config, seed } => eval(checkpoint, *episodes, config.as_deref(), *seed),
        Cmd::Export { run } => export_artifacts(run).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
        }),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
