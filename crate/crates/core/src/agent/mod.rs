//! Two-level goal-conditioned agent.
//!
//! The high level reads `[obs, goal]` and emits a subgoal every `horizon`
//! steps; the low level reads `[obs, subgoal]` and emits forces. Both levels
//! are TD3 learners. On top of plain TD3 the high-level actor is pulled
//! toward planned pseudo-landmarks and kept inside the adjacency ball of the
//! current state, and the low-level critic receives a gradient penalty with
//! bounds derived from the high-level policy.

pub mod adjacency;
pub mod gp;
pub mod td3;

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{phi, GOAL_DIM, STATE_DIM};
use crate::graph::{edge_weight, DistanceEstimator};
use crate::nn::{Matrix, NnError};

pub use adjacency::{adjacency_loss, AdjacencyConfig, AdjacencyLoss, AdjacencyModel};
pub use gp::{gp_loss, mf_gp_bounds, perturb, GpBounds, GpStep, EPS_INV};
pub use td3::{Batch, CriticGrads, Td3, Td3Config};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite training signal: {0}")]
    NonFinite(String),
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Sign of the displacement term in the relative-subgoal transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgoalConvention {
    /// `sg + phi(s_cur) - phi(s_prev)`.
    #[default]
    Forward,
    /// `sg + phi(s_prev) - phi(s_cur)`: the remaining offset shrinks as the agent moves toward it.
    Backward,
}

/// Low-level intrinsic reward `-|sg' - eta * phi(s')|`.
pub fn low_reward(sg_next: &[f64], s_next: &[f64], eta: f64) -> f64 {
    let p = phi(s_next);
    -sg_next.iter().zip(p).map(|(g, x)| (g - eta * x).powi(2)).sum::<f64>().sqrt()
}

/// Subgoal carried from one step to the next. With `eta == 1` (absolute
/// subgoals) it is unchanged.
pub fn subgoal_transition(s_prev: &[f64], sg_prev: &[f64], s_cur: &[f64], eta: f64, convention: SubgoalConvention) -> Vec<f64> {
    if eta != 0.0 {
        return sg_prev.to_vec();
    }
    let (a, b) = (phi(s_prev), phi(s_cur));
    let sign = match convention {
        SubgoalConvention::Forward => 1.0,
        SubgoalConvention::Backward => -1.0,
    };
    sg_prev.iter().enumerate().map(|(i, g)| g + sign * (b[i] - a[i])).collect()
}

/// Regularizer added to the high-level actor loss, with its gradient with
/// respect to the absolute subgoals `sg`:
/// `lambda_adj * mean relu(|psi(phi_s) - psi(sg)| - zeta) + lambda_lm * mean |sg_pseudo - sg|^2`.
pub fn aclg_high_loss(
    adj: &AdjacencyModel,
    phi_s: &Matrix,
    sg: &Matrix,
    sg_pseudo: Option<&Matrix>,
    lambda_adj: f64,
    lambda_lm: f64,
) -> Result<(f64, Matrix), AgentError> {
    let n = sg.rows();
    let mut grad = Matrix::zeros(n, sg.cols());
    let mut loss = 0.0;
    if n == 0 {
        return Ok((0.0, grad));
    }
    if lambda_adj > 0.0 {
        let es = adj.embed(phi_s)?;
        let eg = adj.embed(sg)?;
        let mut up = Matrix::zeros(n, eg.cols());
        let mut active = false;
        for r in 0..n {
            let diff: Vec<f64> = eg.row(r).iter().zip(es.row(r)).map(|(a, b)| a - b).collect();
            let d = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            if d > adj.cfg.zeta {
                loss += lambda_adj * (d - adj.cfg.zeta) / n as f64;
                let k = lambda_adj / (n as f64 * d);
                for (u, v) in up.row_mut(r).iter_mut().zip(&diff) {
                    *u = k * v;
                }
                active = true;
            }
        }
        if active {
            let g = adj.embed_input_grad(sg, &up)?;
            for (a, b) in grad.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a += b;
            }
        }
    }
    if let (Some(target), true) = (sg_pseudo, lambda_lm > 0.0) {
        for r in 0..n {
            for c in 0..sg.cols() {
                let d = sg.get(r, c) - target.get(r, c);
                loss += lambda_lm * d * d / n as f64;
                grad.set(r, c, grad.get(r, c) + 2.0 * lambda_lm * d / n as f64);
            }
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub enabled: bool,
    pub lambda: f64,
    /// Per-dimension variance of the input noise.
    pub delta: f64,
    /// Low-level critic updates between penalty applications.
    pub every: u64,
    /// Low-level critic updates between bound refreshes.
    pub bounds_every: u64,
    pub bounds_batch: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self { enabled: true, lambda: 1e-4, delta: 2.0, every: 5, bounds_every: 100, bounds_batch: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub low: Td3Config,
    pub high: Td3Config,
    /// Environment steps per subgoal.
    pub horizon: usize,
    /// 1 for absolute subgoals, 0 for relative ones.
    pub eta: f64,
    pub convention: SubgoalConvention,
    pub lambda_adj: f64,
    pub lambda_lm: f64,
    pub delta_pseudo: f64,
    /// Adjacency training steps before its term enters the actor loss.
    pub adj_warmup: u64,
    pub adjacency: AdjacencyConfig,
    pub gp: GpConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            low: Td3Config { policy_freq: 5, ..Td3Config::default() },
            high: Td3Config::default(),
            horizon: 10,
            eta: 1.0,
            convention: SubgoalConvention::Forward,
            lambda_adj: 0.5,
            lambda_lm: 1.0,
            delta_pseudo: 1.0,
            adj_warmup: 500,
            adjacency: AdjacencyConfig::default(),
            gp: GpConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.horizon == 0 {
            return Err(AgentError::Config("horizon must be at least 1".into()));
        }
        if self.eta != 0.0 && self.eta != 1.0 {
            return Err(AgentError::Config(format!("eta must be 0 or 1, got {}", self.eta)));
        }
        for (name, cfg) in [("low", &self.low), ("high", &self.high)] {
            if !(0.0..1.0).contains(&cfg.gamma) {
                return Err(AgentError::Config(format!("{name} gamma must be in [0, 1)")));
            }
            if cfg.policy_freq == 0 {
                return Err(AgentError::Config(format!("{name} policy_freq must be positive")));
            }
        }
        if self.lambda_adj < 0.0 || self.lambda_lm < 0.0 || self.gp.lambda < 0.0 || self.delta_pseudo < 0.0 {
            return Err(AgentError::Config("loss weights must be nonnegative".into()));
        }
        if self.gp.every == 0 || self.gp.bounds_every == 0 {
            return Err(AgentError::Config("gradient penalty cadences must be positive".into()));
        }
        Ok(())
    }
}

/// Per-update diagnostics from the low level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LowStats {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
    pub gp_loss: Option<f64>,
    pub violation_s: Option<f64>,
    pub max_grad_s: Option<f64>,
    pub mean_q: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HighStats {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
    pub aclg_loss: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierAgent {
    pub low: Td3,
    pub high: Td3,
    pub adjacency: AdjacencyModel,
    pub cfg: AgentConfig,
    pub bounds: Option<GpBounds>,
}

impl HierAgent {
    /// `action_bound` is the low-level force bound; the high level emits
    /// subgoals in `center +- half` (absolute) or `+- half` (relative).
    pub fn new<R: Rng + ?Sized>(
        cfg: AgentConfig,
        action_bound: f64,
        subgoal_center: [f64; GOAL_DIM],
        subgoal_half: f64,
        rng: &mut R,
    ) -> Result<Self, AgentError> {
        cfg.validate()?;
        let low = Td3::new(STATE_DIM + GOAL_DIM, vec![0.0; 2], action_bound, cfg.low.clone(), rng)?;
        let offset = if cfg.eta == 0.0 { vec![0.0; GOAL_DIM] } else { subgoal_center.to_vec() };
        let high = Td3::new(STATE_DIM + GOAL_DIM, offset, subgoal_half, cfg.high.clone(), rng)?;
        let adjacency = AdjacencyModel::new(GOAL_DIM, cfg.adjacency.clone(), rng)?;
        Ok(Self { low, high, adjacency, cfg, bounds: None })
    }

    pub fn low_input(obs: &[f64], sg: &[f64]) -> Vec<f64> {
        obs.iter().chain(sg).copied().collect()
    }

    pub fn high_input(obs: &[f64], goal: &[f64]) -> Vec<f64> {
        obs.iter().chain(goal).copied().collect()
    }

    pub fn act_low(&self, obs: &[f64], sg: &[f64]) -> Result<Vec<f64>, AgentError> {
        self.low.act(&Self::low_input(obs, sg))
    }

    pub fn act_high(&self, obs: &[f64], goal: &[f64]) -> Result<Vec<f64>, AgentError> {
        self.high.act(&Self::high_input(obs, goal))
    }

    /// Converts a high-level action to an absolute goal-space point.
    pub fn absolute_subgoal(&self, obs: &[f64], sg: &[f64]) -> Vec<f64> {
        if self.cfg.eta == 0.0 {
            let p = phi(obs);
            sg.iter().zip(p).map(|(a, b)| a + b).collect()
        } else {
            sg.to_vec()
        }
    }

    /// Converts an absolute point to the high level's action space.
    pub fn to_action_space(&self, obs: &[f64], point: &[f64]) -> Vec<f64> {
        if self.cfg.eta == 0.0 {
            let p = phi(obs);
            point.iter().zip(p).map(|(a, b)| a - b).collect()
        } else {
            point.to_vec()
        }
    }

    pub fn low_reward(&self, sg_next: &[f64], s_next: &[f64]) -> f64 {
        low_reward(sg_next, s_next, self.cfg.eta)
    }

    pub fn subgoal_transition(&self, s_prev: &[f64], sg_prev: &[f64], s_cur: &[f64]) -> Vec<f64> {
        subgoal_transition(s_prev, sg_prev, s_cur, self.cfg.eta, self.cfg.convention)
    }

    pub fn estimator(&self) -> LowEstimator<'_> {
        LowEstimator { low: &self.low, eta: self.cfg.eta }
    }

    /// Whether the gradient-penalty bounds should be recomputed before the
    /// next low-level update.
    pub fn bounds_due(&self) -> bool {
        self.cfg.gp.enabled
            && (self.bounds.is_none() || self.low.critic_updates() % self.cfg.gp.bounds_every == 0)
    }

    /// Recomputes the bounds from a batch of high-level inputs `[obs, goal]`.
    pub fn refresh_bounds(&mut self, high_inputs: &Matrix) -> Result<GpBounds, AgentError> {
        let b = mf_gp_bounds(
            &self.high.actor,
            high_inputs,
            self.cfg.low.gamma,
            STATE_DIM,
            &[0, 1],
            self.cfg.eta,
            self.low.critic_updates(),
        )?;
        self.bounds = Some(b);
        Ok(b)
    }

    /// One low-level TD3 step; the gradient penalty joins the critic loss
    /// every `gp.every` critic updates once bounds exist.
    pub fn train_low<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<LowStats, AgentError> {
        let y = self.low.td_targets(batch, rng)?;
        let mut cg = self.low.critic_grads(batch, &y)?;
        let mut stats = LowStats { critic_loss: cg.loss, mean_q: cg.mean_q, ..LowStats::default() };
        let due = (self.low.critic_updates() + 1) % self.cfg.gp.every == 0;
        if let (true, true, Some(bounds)) = (self.cfg.gp.enabled && self.cfg.gp.lambda > 0.0, due, self.bounds) {
            let noisy = perturb(&batch.input, 0..STATE_DIM + GOAL_DIM, self.cfg.gp.delta, rng);
            let a = self.low.act_batch(&noisy)?;
            let x = self.low.critic_input(&noisy, &a);
            let mut total = 0.0;
            for k in 0..2 {
                let step = gp_loss(&self.low.critics[k], &x, STATE_DIM, GOAL_DIM, &bounds, self.cfg.gp.lambda)?;
                total += step.loss;
                for (g, p) in cg.grads[k].iter_mut().zip(&step.grads) {
                    *g += p;
                }
                if k == 0 {
                    stats.violation_s = Some(step.violation_s);
                    stats.max_grad_s = Some(step.max_norm_s);
                }
            }
            if !total.is_finite() {
                return Err(AgentError::NonFinite(format!("gradient penalty {total}")));
            }
            stats.gp_loss = Some(total);
        }
        self.low.apply_critic_grads(&cg.grads)?;
        if self.low.actor_due() {
            let n = batch.len();
            let zero = Matrix::zeros(n, self.low.action_dim());
            stats.actor_loss = Some(self.low.actor_step(&batch.input, |_| Ok((0.0, zero)))?);
            self.low.sync_targets()?;
        }
        Ok(stats)
    }

    /// One high-level TD3 step. `sg_pseudo` holds one absolute pseudo-landmark
    /// per batch row, or `None` when no graph is available yet.
    pub fn train_high<R: Rng + ?Sized>(
        &mut self,
        batch: &Batch,
        sg_pseudo: Option<&Matrix>,
        rng: &mut R,
    ) -> Result<HighStats, AgentError> {
        let y = self.high.td_targets(batch, rng)?;
        let cg = self.high.critic_grads(batch, &y)?;
        self.high.apply_critic_grads(&cg.grads)?;
        let mut stats = HighStats { critic_loss: cg.loss, ..HighStats::default() };
        if !self.high.actor_due() {
            return Ok(stats);
        }
        let phi_s = Matrix::from_rows(&(0..batch.len()).map(|r| phi(batch.input.row(r)).to_vec()).collect::<Vec<_>>());
        let lambda_adj = if self.adjacency.train_steps >= self.cfg.adj_warmup { self.cfg.lambda_adj } else { 0.0 };
        let lambda_lm = self.cfg.lambda_lm;
        let relative = self.cfg.eta == 0.0;
        let adj = &self.adjacency;
        let mut aclg = 0.0;
        let loss = self.high.actor_step(&batch.input, |actions| {
            let mut abs = actions.clone();
            if relative {
                for (v, p) in abs.as_mut_slice().iter_mut().zip(phi_s.as_slice()) {
                    *v += p;
                }
            }
            let (l, g) = aclg_high_loss(adj, &phi_s, &abs, sg_pseudo, lambda_adj, lambda_lm)?;
            aclg = l;
            Ok((l, g))
        })?;
        self.high.sync_targets()?;
        stats.actor_loss = Some(loss);
        stats.aclg_loss = Some(aclg);
        Ok(stats)
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let bundle = Bundle { format: BUNDLE_FORMAT.into(), version: BUNDLE_VERSION, agent: self.clone() };
        serde_json::to_string(&bundle).expect("agent serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let bundle: Bundle = serde_json::from_str(text).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        if bundle.format != BUNDLE_FORMAT || bundle.version != BUNDLE_VERSION {
            return Err(AgentError::Checkpoint(format!("unsupported bundle {} v{}", bundle.format, bundle.version)));
        }
        let mut agent = bundle.agent;
        agent.adjacency.rebuild_index();
        Ok(agent)
    }
}

pub const BUNDLE_FORMAT: &str = "hg2p-agent";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Bundle {
    format: String,
    version: u32,
    agent: HierAgent,
}

/// Step-cost estimate from the low-level critic: `max(-Q1(s, sg, pi(s, sg)), 0)`
/// with `sg` the target (absolute) or its offset from `phi(s)` (relative).
pub struct LowEstimator<'a> {
    low: &'a Td3,
    eta: f64,
}

impl DistanceEstimator for LowEstimator<'_> {
    fn estimate(&self, from: &[Vec<f64>], targets: &[Vec<f64>]) -> Matrix {
        let (m, k) = (from.len(), targets.len());
        let mut out = Matrix::filled(m, k, f64::INFINITY);
        if m == 0 || k == 0 {
            return out;
        }
        let mut rows = Vec::with_capacity(m * k);
        for s in from {
            let p = phi(s);
            for t in targets {
                let mut row = s.clone();
                if self.eta == 0.0 {
                    row.extend(t.iter().zip(p).map(|(a, b)| a - b));
                } else {
                    row.extend_from_slice(t);
                }
                rows.push(row);
            }
        }
        let x = Matrix::from_rows(&rows);
        let q = self.low.act_batch(&x).and_then(|a| self.low.q1(&x, &a));
        if let Ok(q) = q {
            for (o, v) in out.as_mut_slice().iter_mut().zip(q) {
                *o = edge_weight(v).unwrap_or(f64::INFINITY);
            }
        }
        out
    }
}
