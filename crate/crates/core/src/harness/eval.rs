//! Deterministic evaluation on the fixed evaluation goal.

use rand::Rng;

use crate::agent::{AgentError, HierAgent};
use crate::env::{EnvState, MazeSpec};

use super::HarnessError;

/// A two-level controller as seen by the evaluator.
pub trait HierPolicy {
    fn horizon(&self) -> usize;
    fn subgoal(&self, obs: &[f64], goal: &[f64]) -> Result<Vec<f64>, AgentError>;
    fn carry(&self, obs: &[f64], subgoal: &[f64], next_obs: &[f64]) -> Vec<f64>;
    fn action(&self, obs: &[f64], subgoal: &[f64]) -> Result<Vec<f64>, AgentError>;
}

impl HierPolicy for HierAgent {
    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn subgoal(&self, obs: &[f64], goal: &[f64]) -> Result<Vec<f64>, AgentError> {
        self.act_high(obs, goal)
    }

    fn carry(&self, obs: &[f64], subgoal: &[f64], next_obs: &[f64]) -> Vec<f64> {
        self.subgoal_transition(obs, subgoal, next_obs)
    }

    fn action(&self, obs: &[f64], subgoal: &[f64]) -> Result<Vec<f64>, AgentError> {
        self.act_low(obs, subgoal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_return: f64,
}

/// Runs one episode from `state`; returns (success, return).
pub fn run_episode<P: HierPolicy + ?Sized>(policy: &P, spec: &MazeSpec, mut state: EnvState) -> Result<(bool, f64), HarnessError> {
    let mut ret = 0.0;
    let mut sg = Vec::new();
    loop {
        let obs = state.observation();
        if state.step % policy.horizon() == 0 {
            sg = policy.subgoal(&obs, &state.goal)?;
        }
        let a = policy.action(&obs, &sg)?;
        let out = spec.step(&state, [a[0], a[1]]);
        ret += out.reward;
        sg = policy.carry(&obs, &sg, &out.state.observation());
        state = out.state;
        if out.done {
            return Ok((out.success, ret));
        }
    }
}

/// Success rate of the noiseless policy over `episodes` evaluation resets.
pub fn evaluate<P: HierPolicy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    spec: &MazeSpec,
    episodes: usize,
    rng: &mut R,
) -> Result<EvalResult, HarnessError> {
    let mut successes = 0;
    let mut total = 0.0;
    for _ in 0..episodes {
        let (ok, ret) = run_episode(policy, spec, spec.reset_eval(rng))?;
        successes += ok as usize;
        total += ret;
    }
    let n = episodes.max(1) as f64;
    Ok(EvalResult { episodes, successes, success_rate: successes as f64 / n, mean_return: total / n })
}
