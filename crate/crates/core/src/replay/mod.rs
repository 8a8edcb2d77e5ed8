//! Episode-structured replay and high-return (HR) trajectory weighting.
//!
//! The low-level [`EpisodeBuffer`] stores whole episodes and evicts whole
//! episodes FIFO, so every stored transition belongs to a complete trajectory
//! with a known return. Weights are recomputed on demand
//! ([`EpisodeBuffer::recompute_weights`]) and consumed by the landmark pool
//! samplers. The high-level buffer is a plain uniform FIFO.

mod weights;

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use weights::{
    episodic_return, fit_expected_return, hr_weights, normalize_returns, topk_filter, weight_entropy,
    ReturnRegressor, MAX_FEATURES, MIN_REGRESSION_SAMPLES,
};

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("buffer is empty")]
    Empty,
    #[error("malformed episode: {0}")]
    Malformed(String),
    #[error("temperature must be positive and finite, got {0}")]
    Alpha(f64),
    #[error("return regression: {0}")]
    Regression(String),
    #[error("all sampling weights are zero")]
    ZeroWeights,
    #[error("buffer import: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One low-level step. `reward` is the environment reward; the low-level
/// intrinsic reward is derived from `subgoal`/`next_obs` at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub subgoal: Vec<f64>,
    pub next_subgoal: Vec<f64>,
    pub goal: Vec<f64>,
    pub done: bool,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: u64,
    pub length: usize,
    pub episodic_return: f64,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub normalized_return: f64,
    pub expected_return: f64,
    /// Per-transition weight `w_t` shared by every step of the trajectory.
    pub weight: f64,
}

impl TrajectoryRecord {
    /// Regression input: the start observation followed by the goal.
    pub fn task_features(&self) -> Vec<f64> {
        self.start.iter().chain(&self.goal).copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SamplerKind {
    #[serde(rename = "hr")]
    Hr,
    #[serde(rename = "uniform")]
    Uniform,
    #[serde(rename = "topk")]
    TopK,
    #[serde(rename = "hr+uniform")]
    HrUniform,
    #[serde(rename = "hr+topk")]
    HrTopK,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 5] = [Self::Hr, Self::Uniform, Self::TopK, Self::HrUniform, Self::HrTopK];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hr => "hr",
            Self::Uniform => "uniform",
            Self::TopK => "topk",
            Self::HrUniform => "hr+uniform",
            Self::HrTopK => "hr+topk",
        }
    }

    pub fn uses_weights(self) -> bool {
        matches!(self, Self::Hr | Self::HrUniform | Self::HrTopK)
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = ReplayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ReplayError::Parse(format!("unknown sampler {s:?}")))
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Location of a transition: (trajectory slot, step).
pub type TransitionRef = (usize, usize);

/// I.i.d. indices drawn proportionally to `weights`.
pub fn weighted_sample<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Result<Vec<usize>, ReplayError> {
    let dist = WeightedIndex::new(weights).map_err(|_| ReplayError::ZeroWeights)?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

#[derive(Debug, Clone)]
struct Trajectory {
    record: TrajectoryRecord,
    transitions: Vec<Transition>,
}

#[derive(Debug, Clone)]
pub struct EpisodeBuffer {
    capacity: usize,
    group_cell: f64,
    trajectories: VecDeque<Trajectory>,
    /// `cum[i]` = number of transitions in slots `0..i`.
    cum: Vec<usize>,
    len: usize,
    next_id: u64,
    weights_alpha: Option<f64>,
    regressor: Option<ReturnRegressor>,
}

impl EpisodeBuffer {
    /// `group_cell` is the grid size used to group start/goal pairs into
    /// tasks for return normalization.
    pub fn new(capacity: usize, group_cell: f64) -> Self {
        assert!(capacity > 0 && group_cell > 0.0);
        Self {
            capacity,
            group_cell,
            trajectories: VecDeque::new(),
            cum: vec![0],
            len: 0,
            next_id: 0,
            weights_alpha: None,
            regressor: None,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn num_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    pub fn records(&self) -> impl Iterator<Item = &TrajectoryRecord> {
        self.trajectories.iter().map(|t| &t.record)
    }

    pub fn record(&self, slot: usize) -> &TrajectoryRecord {
        &self.trajectories[slot].record
    }

    pub fn transitions(&self, slot: usize) -> &[Transition] {
        &self.trajectories[slot].transitions
    }

    pub fn at(&self, (slot, step): TransitionRef) -> &Transition {
        &self.trajectories[slot].transitions[step]
    }

    /// Transition by global index, oldest first.
    pub fn get(&self, index: usize) -> &Transition {
        assert!(index < self.len);
        let slot = self.cum.partition_point(|&c| c <= index) - 1;
        &self.trajectories[slot].transitions[index - self.cum[slot]]
    }

    pub fn regressor(&self) -> Option<&ReturnRegressor> {
        self.regressor.as_ref()
    }

    /// Appends a complete episode, evicting the oldest episodes while the
    /// buffer exceeds capacity. Returns the new trajectory id.
    pub fn store_episode(&mut self, transitions: Vec<Transition>) -> Result<u64, ReplayError> {
        if transitions.is_empty() {
            return Err(ReplayError::Malformed("empty episode".into()));
        }
        for (i, t) in transitions.iter().enumerate() {
            if t.step != i {
                return Err(ReplayError::Malformed(format!("step {} at position {i}", t.step)));
            }
            if t.done && i + 1 != transitions.len() {
                return Err(ReplayError::Malformed(format!("done flag before the final step (at {i})")));
            }
        }
        if transitions.len() > self.capacity {
            return Err(ReplayError::Malformed(format!(
                "episode of {} steps exceeds capacity {}",
                transitions.len(),
                self.capacity
            )));
        }
        let id = self.next_id;
        self.next_id += 1;
        let record = TrajectoryRecord {
            id,
            length: transitions.len(),
            episodic_return: episodic_return(transitions.iter().map(|t| t.reward)),
            start: transitions[0].obs.clone(),
            goal: transitions[0].goal.clone(),
            normalized_return: 0.5,
            expected_return: 0.5,
            weight: 0.0,
        };
        self.len += transitions.len();
        self.trajectories.push_back(Trajectory { record, transitions });
        while self.len > self.capacity {
            let old = self.trajectories.pop_front().expect("over capacity implies nonempty");
            self.len -= old.transitions.len();
        }
        self.rebuild_index();
        self.weights_alpha = None;
        Ok(id)
    }

    fn rebuild_index(&mut self) {
        self.cum.clear();
        self.cum.push(0);
        let mut acc = 0;
        for t in &self.trajectories {
            acc += t.transitions.len();
            self.cum.push(acc);
        }
    }

    fn task_key(&self, r: &TrajectoryRecord) -> Vec<i64> {
        let q = |v: f64| (v / self.group_cell).floor() as i64;
        [r.start[0], r.start[1]].into_iter().chain(r.goal.iter().copied()).map(q).collect()
    }

    /// Normalizes returns per task, refits the expected-return regressor and
    /// recomputes every trajectory weight. A no-op if nothing changed since
    /// the last call with the same `alpha`.
    pub fn recompute_weights(&mut self, alpha: f64) -> Result<(), ReplayError> {
        if self.trajectories.is_empty() {
            return Err(ReplayError::Empty);
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ReplayError::Alpha(alpha));
        }
        if self.weights_alpha == Some(alpha) {
            return Ok(());
        }
        let returns: Vec<f64> = self.records().map(|r| r.episodic_return).collect();
        let keys: Vec<Vec<i64>> = self.records().map(|r| self.task_key(r)).collect();
        let normalized = normalize_returns(&returns, &keys);
        let features: Vec<Vec<f64>> = self.records().map(|r| r.task_features()).collect();
        let reg = fit_expected_return(&features, &normalized)?;
        let corrected: Vec<f64> = normalized.iter().zip(&features).map(|(n, f)| n - reg.predict(f)).collect();
        let lengths: Vec<usize> = self.records().map(|r| r.length).collect();
        let w = hr_weights(&lengths, &corrected, alpha)?;
        for (i, t) in self.trajectories.iter_mut().enumerate() {
            t.record.normalized_return = normalized[i];
            t.record.expected_return = normalized[i] - corrected[i];
            t.record.weight = w[i];
        }
        self.regressor = Some(reg);
        self.weights_alpha = Some(alpha);
        Ok(())
    }

    /// Uniform i.i.d. transitions.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<TransitionRef>, ReplayError> {
        if self.is_empty() {
            return Err(ReplayError::Empty);
        }
        Ok((0..n)
            .map(|_| {
                let i = rng.random_range(0..self.len);
                let slot = self.cum.partition_point(|&c| c <= i) - 1;
                (slot, i - self.cum[slot])
            })
            .collect())
    }

    /// Draws trajectories with probability proportional to `mass`, then a
    /// uniform step within each.
    fn sample_by_trajectory_mass<R: Rng + ?Sized>(
        &self,
        slots: &[usize],
        mass: &[f64],
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<TransitionRef>, ReplayError> {
        let picks = weighted_sample(mass, n, rng)?;
        Ok(picks
            .into_iter()
            .map(|k| {
                let slot = slots[k];
                (slot, rng.random_range(0..self.trajectories[slot].transitions.len()))
            })
            .collect())
    }

    /// Transitions drawn with the HR transition distribution. Requires
    /// [`recompute_weights`](Self::recompute_weights).
    pub fn sample_hr<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<TransitionRef>, ReplayError> {
        if self.is_empty() {
            return Err(ReplayError::Empty);
        }
        if self.weights_alpha.is_none() {
            return Err(ReplayError::Malformed("weights are stale; call recompute_weights first".into()));
        }
        let slots: Vec<usize> = (0..self.trajectories.len()).collect();
        let mass: Vec<f64> = self.records().map(|r| r.length as f64 * r.weight).collect();
        self.sample_by_trajectory_mass(&slots, &mass, n, rng)
    }

    /// Uniform transitions from the top `k` fraction of trajectories by return.
    pub fn sample_topk<R: Rng + ?Sized>(&self, n: usize, k: f64, rng: &mut R) -> Result<Vec<TransitionRef>, ReplayError> {
        let returns: Vec<f64> = self.records().map(|r| r.episodic_return).collect();
        let slots = topk_filter(&returns, k)?;
        let mass: Vec<f64> = slots.iter().map(|&s| self.trajectories[s].transitions.len() as f64).collect();
        self.sample_by_trajectory_mass(&slots, &mass, n, rng)
    }

    /// Pool sampling for the chosen strategy. Mixed strategies split the
    /// draw evenly, HR first. Weights are refreshed for `alpha` if needed.
    pub fn sample_pool<R: Rng + ?Sized>(
        &mut self,
        kind: SamplerKind,
        n: usize,
        alpha: f64,
        topk: f64,
        rng: &mut R,
    ) -> Result<Vec<TransitionRef>, ReplayError> {
        if self.is_empty() {
            return Err(ReplayError::Empty);
        }
        if kind.uses_weights() {
            self.recompute_weights(alpha)?;
        }
        let half = n.div_ceil(2);
        Ok(match kind {
            SamplerKind::Hr => self.sample_hr(n, rng)?,
            SamplerKind::Uniform => self.sample_uniform(n, rng)?,
            SamplerKind::TopK => self.sample_topk(n, topk, rng)?,
            SamplerKind::HrUniform => {
                let mut v = self.sample_hr(half, rng)?;
                v.extend(self.sample_uniform(n - half, rng)?);
                v
            }
            SamplerKind::HrTopK => {
                let mut v = self.sample_hr(half, rng)?;
                v.extend(self.sample_topk(n - half, topk, rng)?);
                v
            }
        })
    }

    /// One JSON object per transition, tagged with its trajectory id.
    pub fn export_jsonl<W: Write>(&self, mut w: W) -> Result<(), ReplayError> {
        #[derive(Serialize)]
        struct Line<'a> {
            trajectory: u64,
            #[serde(flatten)]
            transition: &'a Transition,
        }
        for t in &self.trajectories {
            for tr in &t.transitions {
                let line = serde_json::to_string(&Line { trajectory: t.record.id, transition: tr })
                    .map_err(|e| ReplayError::Parse(e.to_string()))?;
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }

    /// Rebuilds a buffer from [`export_jsonl`](Self::export_jsonl) output.
    /// Trajectory ids are reassigned in file order.
    pub fn import_jsonl<R: BufRead>(r: R, capacity: usize, group_cell: f64) -> Result<Self, ReplayError> {
        #[derive(Deserialize)]
        struct Line {
            trajectory: u64,
            #[serde(flatten)]
            transition: Transition,
        }
        let mut buf = Self::new(capacity, group_cell);
        let mut current: Option<u64> = None;
        let mut episode = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let l: Line = serde_json::from_str(&line).map_err(|e| ReplayError::Parse(e.to_string()))?;
            if current.is_some_and(|c| c != l.trajectory) {
                buf.store_episode(std::mem::take(&mut episode))?;
            }
            current = Some(l.trajectory);
            episode.push(l.transition);
        }
        if !episode.is_empty() {
            buf.store_episode(episode)?;
        }
        Ok(buf)
    }
}

/// One high-level decision: `reward` sums the environment rewards collected
/// over the decision's horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighTransition {
    pub obs: Vec<f64>,
    pub goal: Vec<f64>,
    pub subgoal: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct HighBuffer {
    capacity: usize,
    items: VecDeque<HighTransition>,
}

impl HighBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn push(&mut self, t: HighTransition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &HighTransition {
        &self.items[i]
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&HighTransition>, ReplayError> {
        if self.items.is_empty() {
            return Err(ReplayError::Empty);
        }
        Ok((0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect())
    }
}
