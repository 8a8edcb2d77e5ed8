//! Twin delayed DDPG for one level of the hierarchy.
//!
//! The actor maps a policy input to `offset + bound * tanh(.)`, so actions
//! live in a box centered on `offset`. Critics read `[input, (action -
//! offset) / bound]`, so the action columns are on a unit scale whatever the
//! action range.
//! Gradients are exposed in pieces (targets, critic gradients, actor step) so
//! the hierarchy can add its regularizers before applying them.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::nn::{polyak_update, Adam, Matrix, Mlp, OutputActivation};

use super::AgentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Td3Config {
    pub gamma: f64,
    pub tau: f64,
    /// Target smoothing noise std, as a fraction of the action bound.
    pub policy_noise: f64,
    /// Target noise clip, as a fraction of the action bound.
    pub noise_clip: f64,
    /// Critic updates per actor update.
    pub policy_freq: u32,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: Vec<usize>,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            policy_noise: 0.2,
            noise_clip: 0.5,
            policy_freq: 2,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            hidden: vec![64, 64],
        }
    }
}

/// One minibatch. `not_done` is 0 for terminal transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub input: Matrix,
    pub action: Matrix,
    pub reward: Vec<f64>,
    pub next_input: Matrix,
    pub not_done: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct CriticGrads {
    pub loss: f64,
    pub grads: [Vec<f64>; 2],
    pub mean_q: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Td3 {
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critics: [Mlp; 2],
    pub critic_targets: [Mlp; 2],
    actor_opt: Adam,
    critic_opts: [Adam; 2],
    pub offset: Vec<f64>,
    pub bound: f64,
    pub cfg: Td3Config,
    critic_updates: u64,
}

impl Td3 {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        offset: Vec<f64>,
        bound: f64,
        cfg: Td3Config,
        rng: &mut R,
    ) -> Result<Self, AgentError> {
        let action_dim = offset.len();
        let mut a_sizes = vec![input_dim];
        a_sizes.extend(&cfg.hidden);
        a_sizes.push(action_dim);
        let mut c_sizes = vec![input_dim + action_dim];
        c_sizes.extend(&cfg.hidden);
        c_sizes.push(1);
        let actor = Mlp::new(&a_sizes, OutputActivation::ScaledTanh { bound }, rng)?;
        let c1 = Mlp::new(&c_sizes, OutputActivation::Identity, rng)?;
        let c2 = Mlp::new(&c_sizes, OutputActivation::Identity, rng)?;
        Ok(Self::from_nets(actor, [c1, c2], offset, bound, cfg))
    }

    /// Wraps given nets; targets start as copies.
    pub fn from_nets(actor: Mlp, critics: [Mlp; 2], offset: Vec<f64>, bound: f64, cfg: Td3Config) -> Self {
        let actor_opt = Adam::for_net(&actor, cfg.actor_lr);
        let critic_opts = [Adam::for_net(&critics[0], cfg.critic_lr), Adam::for_net(&critics[1], cfg.critic_lr)];
        Self {
            actor_target: actor.clone(),
            critic_targets: critics.clone(),
            actor,
            critics,
            actor_opt,
            critic_opts,
            offset,
            bound,
            cfg,
            critic_updates: 0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.offset.len()
    }

    pub fn critic_updates(&self) -> u64 {
        self.critic_updates
    }

    fn shift(&self, mut raw: Matrix) -> Matrix {
        let k = self.offset.len();
        for (i, v) in raw.as_mut_slice().iter_mut().enumerate() {
            *v += self.offset[i % k];
        }
        raw
    }

    pub fn act_batch(&self, input: &Matrix) -> Result<Matrix, AgentError> {
        Ok(self.shift(self.actor.forward_batch(input)?))
    }

    pub fn act(&self, input: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(self.act_batch(&Matrix::from_rows(&[input]))?.into_vec())
    }

    /// Clamps an action into the actor's box.
    pub fn clip_action(&self, a: &mut [f64]) {
        for (v, o) in a.iter_mut().zip(&self.offset) {
            *v = v.clamp(o - self.bound, o + self.bound);
        }
    }

    /// Critic input rows for raw actions.
    pub fn critic_input(&self, input: &Matrix, action: &Matrix) -> Matrix {
        let k = self.offset.len();
        let mut a = action.clone();
        for (i, v) in a.as_mut_slice().iter_mut().enumerate() {
            *v = (*v - self.offset[i % k]) / self.bound;
        }
        Matrix::concat_cols(&[input, &a])
    }

    pub fn q1(&self, input: &Matrix, action: &Matrix) -> Result<Vec<f64>, AgentError> {
        Ok(self.critics[0].forward_batch(&self.critic_input(input, action))?.into_vec())
    }

    /// `r + gamma * not_done * min(Q1', Q2')(s', clip(pi'(s') + noise))`.
    pub fn td_targets<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Result<Vec<f64>, AgentError> {
        let mut next_a = self.shift(self.actor_target.forward_batch(&batch.next_input)?);
        if self.cfg.policy_noise > 0.0 {
            let noise = Normal::new(0.0, self.cfg.policy_noise * self.bound).expect("positive std");
            let clip = self.cfg.noise_clip * self.bound;
            for v in next_a.as_mut_slice() {
                *v += noise.sample(rng).clamp(-clip, clip);
            }
        }
        for r in 0..next_a.rows() {
            let row = next_a.row_mut(r);
            for (v, o) in row.iter_mut().zip(&self.offset) {
                *v = v.clamp(o - self.bound, o + self.bound);
            }
        }
        let x = self.critic_input(&batch.next_input, &next_a);
        let q1 = self.critic_targets[0].forward_batch(&x)?;
        let q2 = self.critic_targets[1].forward_batch(&x)?;
        Ok((0..batch.len())
            .map(|i| {
                let q = q1.as_slice()[i].min(q2.as_slice()[i]);
                batch.reward[i] + self.cfg.gamma * batch.not_done[i] * q
            })
            .collect())
    }

    /// Gradients of `mean (Q1 - y)^2 + mean (Q2 - y)^2`.
    pub fn critic_grads(&self, batch: &Batch, targets: &[f64]) -> Result<CriticGrads, AgentError> {
        let x = self.critic_input(&batch.input, &batch.action);
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let mut mean_q = 0.0;
        let mut grads: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for (k, critic) in self.critics.iter().enumerate() {
            let cache = critic.forward_cached(&x)?;
            let q = cache.output().as_slice();
            let mut up = Matrix::zeros(batch.len(), 1);
            for (u, (&qi, &y)) in up.as_mut_slice().iter_mut().zip(q.iter().zip(targets)) {
                loss += (qi - y) * (qi - y) / n;
                *u = 2.0 * (qi - y) / n;
            }
            if k == 0 {
                mean_q = q.iter().sum::<f64>() / n;
            }
            grads[k] = critic.backward(&cache, &up)?.params;
        }
        if !loss.is_finite() {
            return Err(AgentError::NonFinite(format!("critic loss {loss}")));
        }
        Ok(CriticGrads { loss, grads, mean_q })
    }

    pub fn apply_critic_grads(&mut self, grads: &[Vec<f64>; 2]) -> Result<(), AgentError> {
        for k in 0..2 {
            self.critic_opts[k].apply(&mut self.critics[k], &grads[k])?;
        }
        self.critic_updates += 1;
        Ok(())
    }

    /// Whether the actor is due after the latest critic update.
    pub fn actor_due(&self) -> bool {
        self.critic_updates > 0 && self.critic_updates % self.cfg.policy_freq as u64 == 0
    }

    /// Whether the actor will be due after one more critic update.
    pub fn actor_due_next(&self) -> bool {
        (self.critic_updates + 1) % self.cfg.policy_freq as u64 == 0
    }

    /// One actor step on `-mean Q1(s, pi(s)) + extra(pi(s))`. `extra` gets the
    /// batch of actions and returns its loss and gradient with respect to them.
    pub fn actor_step(
        &mut self,
        input: &Matrix,
        extra: impl FnOnce(&Matrix) -> Result<(f64, Matrix), AgentError>,
    ) -> Result<f64, AgentError> {
        let n = input.rows();
        let cache = self.actor.forward_cached(input)?;
        let actions = self.shift(cache.output().clone());
        let x = self.critic_input(input, &actions);
        let c_cache = self.critics[0].forward_cached(&x)?;
        let q_mean = c_cache.output().as_slice().iter().sum::<f64>() / n as f64;
        let up = Matrix::filled(n, 1, -1.0 / n as f64);
        let dq = self.critics[0].backward(&c_cache, &up)?.input;
        let mut da = dq.slice_cols(input.cols(), input.cols() + self.action_dim());
        for v in da.as_mut_slice() {
            *v /= self.bound;
        }
        let (extra_loss, extra_grad) = extra(&actions)?;
        for (a, b) in da.as_mut_slice().iter_mut().zip(extra_grad.as_slice()) {
            *a += b;
        }
        let loss = -q_mean + extra_loss;
        if !loss.is_finite() {
            return Err(AgentError::NonFinite(format!("actor loss {loss}")));
        }
        let g = self.actor.backward(&cache, &da)?;
        self.actor_opt.apply(&mut self.actor, &g.params)?;
        Ok(loss)
    }

    pub fn sync_targets(&mut self) -> Result<(), AgentError> {
        let tau = self.cfg.tau;
        polyak_update(&mut self.actor_target, &self.actor, tau)?;
        for k in 0..2 {
            polyak_update(&mut self.critic_targets[k], &self.critics[k], tau)?;
        }
        Ok(())
    }

    /// Plain TD3 step: critic update, then (when due) actor update and
    /// target sync. Returns `(critic loss, actor loss if updated)`.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<(f64, Option<f64>), AgentError> {
        let y = self.td_targets(batch, rng)?;
        let cg = self.critic_grads(batch, &y)?;
        self.apply_critic_grads(&cg.grads)?;
        let mut actor_loss = None;
        if self.actor_due() {
            let zero = Matrix::zeros(batch.len(), self.action_dim());
            actor_loss = Some(self.actor_step(&batch.input, |_| Ok((0.0, zero)))?);
            self.sync_targets()?;
        }
        Ok((cg.loss, actor_loss))
    }
}
