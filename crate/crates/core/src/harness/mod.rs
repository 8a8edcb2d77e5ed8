//! Configuration, seeded training and evaluation, ablation presets and
//! artifact export.
//!
//! A run directory holds `config.json`, `metrics.csv`, `checkpoint.json`,
//! `summary.json`, the final landmark set and (optionally) the replay buffer;
//! [`export_artifacts`] derives `landmarks.csv` and `density.csv` from them.

mod config;
mod eval;
mod train;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::AgentError;
use crate::env::{phi, EnvError};
use crate::graph::{GraphError, LandmarkSet};
use crate::nn::NnError;
use crate::replay::{EpisodeBuffer, ReplayError, SamplerKind};

pub use config::RunConfig;
pub use eval::{evaluate, run_episode, EvalResult, HierPolicy};
pub use train::{run_training, RunSummary, Trainer};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LANDMARKS_JSON: &str = "landmarks.json";
pub const LANDMARKS_CSV: &str = "landmarks.csv";
pub const DENSITY_FILE: &str = "density.csv";
pub const REPLAY_FILE: &str = "replay.jsonl";

/// Overrides the output root for `train`.
pub const OUT_DIR_ENV: &str = "HG2P_OUT_DIR";
/// Worker threads for multi-run presets.
pub const THREADS_ENV: &str = "HG2P_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<NnError> for HarnessError {
    fn from(e: NnError) -> Self {
        Self::Agent(AgentError::Nn(e))
    }
}

/// Named RNG substreams of one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Env = 2,
    Sampling = 3,
    Noise = 4,
    Eval = 5,
    Export = 6,
}

pub fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

/// One row of `metrics.csv`, written at every evaluation. Empty cells mean
/// the quantity was not updated during the interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub success_rate: f64,
    pub eval_return: f64,
    pub train_return: Option<f64>,
    pub episodes: u64,
    pub low_critic_loss: Option<f64>,
    pub low_actor_loss: Option<f64>,
    pub high_critic_loss: Option<f64>,
    pub high_actor_loss: Option<f64>,
    pub aclg_loss: Option<f64>,
    pub gp_loss: Option<f64>,
    pub adj_loss: Option<f64>,
    pub rnd_loss: Option<f64>,
    pub b_s: Option<f64>,
    pub b_sg: Option<f64>,
    pub grad_s_p50: Option<f64>,
    pub grad_s_p90: Option<f64>,
    pub violation_s: Option<f64>,
    pub landmarks: usize,
    pub edges: usize,
}

pub fn write_metrics_csv<W: Write>(records: &[MetricsRecord], w: W) -> Result<(), HarnessError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    // Header is written explicitly so an empty run still gets one.
    out.write_record(METRICS_HEADER)?;
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

const METRICS_HEADER: [&str; 20] = [
    "step",
    "success_rate",
    "eval_return",
    "train_return",
    "episodes",
    "low_critic_loss",
    "low_actor_loss",
    "high_critic_loss",
    "high_actor_loss",
    "aclg_loss",
    "gp_loss",
    "adj_loss",
    "rnd_loss",
    "b_s",
    "b_sg",
    "grad_s_p50",
    "grad_s_p90",
    "violation_s",
    "landmarks",
    "edges",
];

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<MetricsRecord>, _>>()?)
}

/// Visit frequency per goal-space cell under each sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub cell: f64,
    pub samplers: Vec<SamplerKind>,
    /// Cell index to one frequency per sampler (each column sums to 1).
    pub cells: BTreeMap<(i64, i64), Vec<f64>>,
}

impl DensityTable {
    pub fn column(&self, kind: SamplerKind) -> Option<usize> {
        self.samplers.iter().position(|k| *k == kind)
    }

    /// Total frequency of `kind` over the given cells.
    pub fn mass_on(&self, kind: SamplerKind, cells: &[(i64, i64)]) -> f64 {
        let Some(c) = self.column(kind) else { return 0.0 };
        cells.iter().filter_map(|k| self.cells.get(k)).map(|v| v[c]).sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), HarnessError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["cell_x".to_string(), "cell_y".into(), "x".into(), "y".into()];
        header.extend(self.samplers.iter().map(|k| k.as_str().to_string()));
        out.write_record(&header)?;
        for ((i, j), freqs) in &self.cells {
            let mut row = vec![
                i.to_string(),
                j.to_string(),
                ((*i as f64 + 0.5) * self.cell).to_string(),
                ((*j as f64 + 0.5) * self.cell).to_string(),
            ];
            row.extend(freqs.iter().map(|f| f.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn cell_of(p: [f64; 2], cell: f64) -> (i64, i64) {
    ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64)
}

/// Draws `samples` pool states per sampler and histograms `phi(s)`.
pub fn density_table(
    buffer: &mut EpisodeBuffer,
    samplers: &[SamplerKind],
    alpha: f64,
    topk: f64,
    cell: f64,
    samples: usize,
    seed: u64,
) -> Result<DensityTable, HarnessError> {
    let mut cells: BTreeMap<(i64, i64), Vec<f64>> = BTreeMap::new();
    for (c, &kind) in samplers.iter().enumerate() {
        let mut rng = stream(seed, Stream::Export);
        let refs = buffer.sample_pool(kind, samples, alpha, topk, &mut rng)?;
        for r in refs {
            let key = cell_of(phi(&buffer.at(r).obs), cell);
            cells.entry(key).or_insert_with(|| vec![0.0; samplers.len()])[c] += 1.0 / samples as f64;
        }
    }
    Ok(DensityTable { cell, samplers: samplers.to_vec(), cells })
}

pub const DENSITY_SAMPLES: usize = 20_000;
pub const DENSITY_CELL: f64 = 0.5;

pub fn load_replay(dir: &Path, cfg: &RunConfig) -> Result<EpisodeBuffer, HarnessError> {
    let f = fs::File::open(dir.join(REPLAY_FILE))?;
    Ok(EpisodeBuffer::import_jsonl(BufReader::new(f), cfg.buffer_capacity, cfg.maze_spec().success_radius)?)
}

/// Writes `landmarks.csv` and (when the replay buffer was kept)
/// `density.csv` into a run directory, and re-validates `config.json`.
pub fn export_artifacts(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let cfg = RunConfig::from_json(&fs::read_to_string(dir.join(CONFIG_FILE))?)?;
    cfg.validate()?;
    let mut written = Vec::new();
    let lm = dir.join(LANDMARKS_JSON);
    if lm.exists() {
        let set: LandmarkSet = serde_json::from_str(&fs::read_to_string(&lm)?)?;
        let path = dir.join(LANDMARKS_CSV);
        set.write_csv(fs::File::create(&path)?)?;
        written.push(path);
    }
    if dir.join(REPLAY_FILE).exists() {
        let mut buffer = load_replay(dir, &cfg)?;
        if !buffer.is_empty() {
            let alpha = cfg.alpha_at(cfg.total_steps);
            let table = density_table(&mut buffer, &SamplerKind::ALL, alpha, cfg.topk, DENSITY_CELL, DENSITY_SAMPLES, cfg.seed)?;
            let path = dir.join(DENSITY_FILE);
            table.write_csv(fs::File::create(&path)?)?;
            written.push(path);
        }
    }
    Ok(written)
}

pub const PRESETS: [&str; 6] =
    ["hr-vs-uniform", "hr-vs-topk", "gp-on-off", "alpha-sweep", "lambda-gp-sweep", "landmark-count-sweep"];

/// Named configuration grid derived from `base`.
pub fn ablation_preset(name: &str, base: &RunConfig) -> Result<Vec<(String, RunConfig)>, HarnessError> {
    let with = |label: String, f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        (label, c)
    };
    let grid = match name {
        "hr-vs-uniform" => [SamplerKind::Hr, SamplerKind::Uniform]
            .iter()
            .map(|&k| with(k.as_str().into(), &|c| c.sampler = k))
            .collect(),
        "hr-vs-topk" => [SamplerKind::Hr, SamplerKind::TopK, SamplerKind::HrTopK]
            .iter()
            .map(|&k| with(k.as_str().into(), &|c| c.sampler = k))
            .collect(),
        "gp-on-off" => vec![
            with("gp-off".into(), &|c| {
                c.gp = false;
                c.lambda_gp = 0.0;
            }),
            with("gp-on".into(), &|c| {
                c.gp = true;
                c.lambda_gp = 1e-4;
            }),
        ],
        "alpha-sweep" => [0.01, 0.1, 10.0]
            .iter()
            .map(|&a| with(format!("alpha-{a}"), &|c| {
                c.sampler = SamplerKind::Hr;
                c.alpha = a;
                c.alpha_final = None;
            }))
            .collect(),
        "lambda-gp-sweep" => [0.0, 1e-5, 1e-4, 1e-3, 1e-2]
            .iter()
            .map(|&l| with(format!("lambda-gp-{l}"), &|c| {
                c.gp = l > 0.0;
                c.lambda_gp = l;
            }))
            .collect(),
        "landmark-count-sweep" => [20usize, 40, 60, 80]
            .iter()
            .map(|&n| with(format!("landmarks-{n}"), &|c| {
                c.n_cov = n;
                c.n_nov = n;
            }))
            .collect(),
        other => return Err(HarnessError::UnknownPreset(other.into())),
    };
    Ok(grid)
}

/// Thread count from the environment, defaulting to 1.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()).filter(|&n| n > 0).unwrap_or(1)
}

/// Output root: `HG2P_OUT_DIR` wins over the given default.
pub fn out_dir_from_env(default: &Path) -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| default.to_path_buf())
}
