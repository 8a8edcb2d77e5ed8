//! Run configuration: a flat key-value TOML file, echoed as JSON into every
//! run directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{AdjacencyConfig, AgentConfig, GpConfig, SubgoalConvention, Td3Config};
use crate::env::{MazeName, MazeSpec, RewardMode};
use crate::replay::SamplerKind;

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub maze: MazeName,
    pub reward_mode: RewardMode,
    pub sampler: SamplerKind,
    /// Sampling temperature.
    pub alpha: f64,
    /// When set, the temperature moves linearly from `alpha` to this value
    /// over the run.
    pub alpha_final: Option<f64>,
    /// Fraction of trajectories kept by the TopK sampler.
    pub topk: f64,
    pub n_cov: usize,
    pub n_nov: usize,
    /// Transitions drawn from the replay buffer for coverage selection.
    pub pool_size: usize,
    /// Recent states kept as novelty candidates.
    pub novelty_candidates: usize,
    pub lambda_adj: f64,
    pub lambda_lm: f64,
    pub lambda_gp: f64,
    /// Per-dimension variance of the penalty's input noise; by default 2 per
    /// 12 units of maze extent.
    pub delta_gp: Option<f64>,
    pub delta_pseudo: f64,
    pub zeta: f64,
    pub delta_adj: f64,
    /// Adjacency step count; defaults to the horizon.
    pub adj_k: Option<usize>,
    pub horizon: usize,
    pub gamma: f64,
    pub eta: f64,
    pub gp: bool,
    pub subgoal_convention: SubgoalConvention,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    /// Environment steps with uniformly random subgoals and actions.
    pub start_steps: u64,
    pub batch_size: usize,
    pub high_batch_size: usize,
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    /// Exploration noise std as fractions of the low-level force bound and
    /// of the subgoal half-range.
    pub low_noise: f64,
    pub high_noise: f64,
    pub high_reward_scale: f64,
    /// Low-level transitions ending within this distance of their subgoal
    /// are terminal for the low-level critic; 0 never terminates.
    pub low_reach_radius: f64,
    pub buffer_capacity: usize,
    pub high_buffer_capacity: usize,
    /// Environment steps between landmark graph rebuilds.
    pub graph_every: u64,
    /// Edges costlier than this are dropped.
    pub cutoff: f64,
    pub adj_every: u64,
    pub adj_batch: usize,
    pub adj_warmup: u64,
    pub rnd_every: u64,
    pub rnd_batch: usize,
    /// Keep the final replay buffer in the run directory (needed by `export`).
    pub save_replay: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            maze: MazeName::EmbossedMaze,
            reward_mode: RewardMode::Sparse,
            sampler: SamplerKind::Hr,
            alpha: 0.1,
            alpha_final: None,
            topk: 0.2,
            n_cov: 20,
            n_nov: 20,
            pool_size: 400,
            novelty_candidates: 300,
            lambda_adj: 0.5,
            lambda_lm: 1.0,
            lambda_gp: 1e-4,
            delta_gp: None,
            delta_pseudo: 1.0,
            zeta: 1.0,
            delta_adj: 0.2,
            adj_k: None,
            horizon: 10,
            gamma: 0.99,
            eta: 1.0,
            gp: true,
            subgoal_convention: SubgoalConvention::Forward,
            total_steps: 150_000,
            eval_interval: 5_000,
            eval_episodes: 10,
            seed: 0,
            start_steps: 5_000,
            batch_size: 128,
            high_batch_size: 64,
            hidden: vec![64, 64],
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            tau: 0.005,
            low_noise: 0.2,
            high_noise: 0.2,
            high_reward_scale: 0.1,
            low_reach_radius: 0.5,
            buffer_capacity: 200_000,
            high_buffer_capacity: 50_000,
            graph_every: 50,
            cutoff: 30.0,
            adj_every: 10,
            adj_batch: 64,
            adj_warmup: 200,
            rnd_every: 10,
            rnd_batch: 64,
            save_replay: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let positive = [
            ("alpha", self.alpha),
            ("topk", self.topk),
            ("zeta", self.zeta),
            ("delta_adj", self.delta_adj),
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("cutoff", self.cutoff),
            ("high_reward_scale", self.high_reward_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let nonneg = [
            ("lambda_adj", self.lambda_adj),
            ("lambda_lm", self.lambda_lm),
            ("lambda_gp", self.lambda_gp),
            ("delta_pseudo", self.delta_pseudo),
            ("low_noise", self.low_noise),
            ("high_noise", self.high_noise),
            ("low_reach_radius", self.low_reach_radius),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if let Some(a) = self.alpha_final {
            if !(a > 0.0) {
                return bad(format!("alpha_final must be positive, got {a}"));
            }
        }
        if let Some(d) = self.delta_gp {
            if !(d >= 0.0) {
                return bad(format!("delta_gp must be nonnegative, got {d}"));
            }
        }
        if self.topk > 1.0 {
            return bad("topk is a fraction in (0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1), got {}", self.gamma));
        }
        if self.eta != 0.0 && self.eta != 1.0 {
            return bad(format!("eta must be 0 or 1, got {}", self.eta));
        }
        if self.horizon == 0 || self.adj_k == Some(0) {
            return bad("horizon and adj_k must be at least 1".into());
        }
        if self.eval_interval == 0 || self.total_steps % self.eval_interval != 0 {
            return bad(format!("eval_interval {} must divide total_steps {}", self.eval_interval, self.total_steps));
        }
        for (name, v) in [("graph_every", self.graph_every), ("adj_every", self.adj_every), ("rnd_every", self.rnd_every)] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.eval_episodes == 0 || self.batch_size == 0 || self.high_batch_size == 0 || self.pool_size == 0 {
            return bad("episode and batch counts must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        if self.buffer_capacity == 0 || self.high_buffer_capacity == 0 {
            return bad("buffer capacities must be positive".into());
        }
        Ok(())
    }

    pub fn maze_spec(&self) -> MazeSpec {
        MazeSpec::preset(self.maze, self.reward_mode)
    }

    pub fn resolved_delta_gp(&self) -> f64 {
        self.delta_gp.unwrap_or_else(|| {
            let spec = self.maze_spec();
            2.0 * (spec.extent.max[0] - spec.extent.min[0]) / 12.0
        })
    }

    /// Temperature at a given environment step.
    pub fn alpha_at(&self, step: u64) -> f64 {
        match self.alpha_final {
            None => self.alpha,
            Some(end) => {
                let t = if self.total_steps == 0 { 1.0 } else { (step as f64 / self.total_steps as f64).min(1.0) };
                self.alpha + t * (end - self.alpha)
            }
        }
    }

    pub fn agent_config(&self) -> AgentConfig {
        let spec = self.maze_spec();
        let td3 = |policy_freq| Td3Config {
            gamma: self.gamma,
            tau: self.tau,
            policy_freq,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            hidden: self.hidden.clone(),
            ..Td3Config::default()
        };
        let extent = (spec.extent.max[0] - spec.extent.min[0]).max(spec.extent.max[1] - spec.extent.min[1]);
        AgentConfig {
            low: td3(if self.gp { 5 } else { 2 }),
            high: td3(2),
            horizon: self.horizon,
            eta: self.eta,
            convention: self.subgoal_convention,
            lambda_adj: self.lambda_adj,
            lambda_lm: self.lambda_lm,
            delta_pseudo: self.delta_pseudo,
            adj_warmup: self.adj_warmup,
            adjacency: AdjacencyConfig {
                k: self.adj_k.unwrap_or(self.horizon),
                zeta: self.zeta,
                delta: self.delta_adj,
                cell: spec.success_radius / 2.0,
                input_scale: extent,
                ..AdjacencyConfig::default()
            },
            gp: GpConfig { enabled: self.gp, lambda: self.lambda_gp, delta: self.resolved_delta_gp(), ..GpConfig::default() },
        }
    }
}
