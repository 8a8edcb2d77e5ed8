//! The seeded training loop.
//!
//! Per environment step: pick a subgoal at decision points, act, store, then
//! update. Updates after the warmup: one low-level step every environment
//! step, one high-level step per decision interval (with pseudo-landmarks
//! from the current graph), periodic adjacency and RND steps, and a graph
//! rebuild every `graph_every` steps. Evaluation runs on its own RNG stream.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agent::{AgentError, Batch, HierAgent};
use crate::env::{phi, EnvState, MazeSpec, GOAL_DIM};
use crate::graph::{pseudo_landmark, select_landmarks, LandmarkGraph, NoveltyScorer};
use crate::nn::Matrix;
use crate::replay::{EpisodeBuffer, HighBuffer, HighTransition, Transition};

use super::eval::{evaluate, EvalResult};
use super::{stream, HarnessError, MetricsRecord, RunConfig, Stream};

/// Summary written next to the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    pub episodes: u64,
    pub final_success: Option<f64>,
    pub best_success: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Default)]
struct Interval {
    low_critic: Vec<f64>,
    low_actor: Vec<f64>,
    high_critic: Vec<f64>,
    high_actor: Vec<f64>,
    aclg: Vec<f64>,
    gp: Vec<f64>,
    adj: Vec<f64>,
    rnd: Vec<f64>,
    grad_s: Vec<f64>,
    violation: Vec<f64>,
    returns: Vec<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn percentile(v: &[f64], p: f64) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let idx = ((s.len() - 1) as f64 * p).round() as usize;
    Some(s[idx])
}

struct Decision {
    obs: Vec<f64>,
    subgoal: Vec<f64>,
    reward: f64,
}

struct Episode {
    state: EnvState,
    transitions: Vec<Transition>,
    subgoal: Vec<f64>,
    decision: Option<Decision>,
    ret: f64,
}

/// All mutable training state. Drive it with [`Trainer::step`] or run to
/// completion with [`Trainer::run`].
pub struct Trainer {
    pub cfg: RunConfig,
    pub spec: MazeSpec,
    pub agent: HierAgent,
    pub buffer: EpisodeBuffer,
    pub high_buffer: HighBuffer,
    pub novelty: NoveltyScorer,
    pub graph: Option<LandmarkGraph>,
    candidates: VecDeque<Vec<f64>>,
    env_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    episode: Option<Episode>,
    step: u64,
    episodes: u64,
    interval: Interval,
    pub metrics: Vec<MetricsRecord>,
    evals: u64,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let spec = cfg.maze_spec();
        let mut init = stream(cfg.seed, Stream::Init);
        let (center, half) = spec.goal_box();
        let agent = HierAgent::new(cfg.agent_config(), spec.action_bound, center, half, &mut init)?;
        let extent = 2.0 * half;
        let novelty = NoveltyScorer::new(GOAL_DIM, &[64, 64], 16, 1e-3, extent, &mut init)?;
        Ok(Self {
            buffer: EpisodeBuffer::new(cfg.buffer_capacity, spec.success_radius),
            high_buffer: HighBuffer::new(cfg.high_buffer_capacity),
            env_rng: stream(cfg.seed, Stream::Env),
            sample_rng: stream(cfg.seed, Stream::Sampling),
            noise_rng: stream(cfg.seed, Stream::Noise),
            candidates: VecDeque::new(),
            graph: None,
            episode: None,
            step: 0,
            episodes: 0,
            interval: Interval::default(),
            metrics: Vec::new(),
            evals: 0,
            novelty,
            agent,
            spec,
            cfg,
        })
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn episodes_done(&self) -> u64 {
        self.episodes
    }

    fn random_subgoal(&mut self, obs: &[f64]) -> Vec<f64> {
        let (c, half) = self.spec.goal_box();
        let p: Vec<f64> = c.iter().map(|ci| ci + self.noise_rng.random_range(-half..=half)).collect();
        self.agent.to_action_space(obs, &p)
    }

    fn choose_subgoal(&mut self, obs: &[f64], goal: &[f64]) -> Result<Vec<f64>, HarnessError> {
        if self.step < self.cfg.start_steps {
            return Ok(self.random_subgoal(obs));
        }
        let mut sg = self.agent.act_high(obs, goal)?;
        let std = self.cfg.high_noise * self.agent.high.bound;
        if std > 0.0 {
            let n = Normal::new(0.0, std).expect("positive std");
            for v in &mut sg {
                *v += n.sample(&mut self.noise_rng);
            }
        }
        self.agent.high.clip_action(&mut sg);
        Ok(sg)
    }

    fn choose_action(&mut self, obs: &[f64], sg: &[f64]) -> Result<[f64; 2], HarnessError> {
        let b = self.spec.action_bound;
        if self.step < self.cfg.start_steps {
            return Ok([self.noise_rng.random_range(-b..=b), self.noise_rng.random_range(-b..=b)]);
        }
        let mut a = self.agent.act_low(obs, sg)?;
        let std = self.cfg.low_noise * b;
        if std > 0.0 {
            let n = Normal::new(0.0, std).expect("positive std");
            for v in &mut a {
                *v += n.sample(&mut self.noise_rng);
            }
        }
        self.agent.low.clip_action(&mut a);
        Ok([a[0], a[1]])
    }

    /// One environment step plus whatever updates fall due.
    pub fn step(&mut self) -> Result<(), HarnessError> {
        let mut ep = match self.episode.take() {
            Some(ep) => ep,
            None => {
                let state = self.spec.reset(&mut self.env_rng);
                Episode { state, transitions: Vec::new(), subgoal: Vec::new(), decision: None, ret: 0.0 }
            }
        };
        let obs = ep.state.observation().to_vec();
        let goal = ep.state.goal.to_vec();
        let t = ep.state.step;
        if t % self.cfg.horizon == 0 {
            ep.subgoal = self.choose_subgoal(&obs, &goal)?;
            ep.decision = Some(Decision { obs: obs.clone(), subgoal: ep.subgoal.clone(), reward: 0.0 });
            if self.candidates.len() == self.cfg.novelty_candidates.max(1) {
                self.candidates.pop_front();
            }
            self.candidates.push_back(obs.clone());
        }
        let action = self.choose_action(&obs, &ep.subgoal)?;
        let out = self.spec.step(&ep.state, action);
        let next_obs = out.state.observation().to_vec();
        let next_sg = self.agent.subgoal_transition(&obs, &ep.subgoal, &next_obs);
        ep.transitions.push(Transition {
            obs,
            action: action.to_vec(),
            reward: out.reward,
            next_obs: next_obs.clone(),
            subgoal: ep.subgoal.clone(),
            next_subgoal: next_sg.clone(),
            goal: goal.clone(),
            done: out.success,
            step: t,
        });
        ep.ret += out.reward;
        let d = ep.decision.as_mut().expect("decision open");
        d.reward += out.reward;
        if out.state.step % self.cfg.horizon == 0 || out.done {
            let d = ep.decision.take().expect("decision open");
            self.high_buffer.push(HighTransition {
                obs: d.obs,
                goal: goal.clone(),
                subgoal: d.subgoal,
                reward: d.reward * self.cfg.high_reward_scale,
                next_obs: next_obs.clone(),
                done: out.success,
            });
        }
        ep.subgoal = next_sg;
        ep.state = out.state;
        self.step += 1;

        if out.done {
            let mut points: Vec<Vec<f64>> = ep.transitions.iter().map(|tr| phi(&tr.obs).to_vec()).collect();
            points.push(phi(&next_obs).to_vec());
            self.agent.adjacency.update_store(&points);
            self.interval.returns.push(ep.ret);
            self.buffer.store_episode(ep.transitions)?;
            self.episodes += 1;
        } else {
            self.episode = Some(ep);
        }

        self.update()?;

        if self.step % self.cfg.eval_interval == 0 {
            self.record_eval()?;
        }
        Ok(())
    }

    fn update(&mut self) -> Result<(), HarnessError> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        let step = self.step;
        if step % self.cfg.adj_every == 0 {
            if let Some(l) = self.agent.adjacency.train(self.cfg.adj_batch, &mut self.sample_rng)? {
                self.interval.adj.push(l);
            }
        }
        if step % self.cfg.rnd_every == 0 {
            let refs = self.buffer.sample_uniform(self.cfg.rnd_batch, &mut self.sample_rng)?;
            let pts: Vec<Vec<f64>> = refs.iter().map(|&r| phi(&self.buffer.at(r).next_obs).to_vec()).collect();
            self.interval.rnd.push(self.novelty.train(&pts)?);
        }
        if step % self.cfg.graph_every == 0 {
            self.rebuild_graph()?;
        }
        if step < self.cfg.start_steps {
            return Ok(());
        }
        self.train_low()?;
        if step % self.cfg.horizon as u64 == 0 && !self.high_buffer.is_empty() {
            self.train_high()?;
        }
        Ok(())
    }

    fn train_low(&mut self) -> Result<(), HarnessError> {
        if self.agent.bounds_due() && !self.high_buffer.is_empty() {
            let hs = self.high_buffer.sample(self.agent.cfg.gp.bounds_batch, &mut self.sample_rng)?;
            let x = Matrix::from_rows(&hs.iter().map(|h| HierAgent::high_input(&h.obs, &h.goal)).collect::<Vec<_>>());
            self.agent.refresh_bounds(&x)?;
        }
        let refs = self.buffer.sample_uniform(self.cfg.batch_size, &mut self.sample_rng)?;
        let eta = self.agent.cfg.eta;
        let mut input = Vec::with_capacity(refs.len());
        let mut action = Vec::with_capacity(refs.len());
        let mut reward = Vec::with_capacity(refs.len());
        let mut next_input = Vec::with_capacity(refs.len());
        let mut not_done = Vec::with_capacity(refs.len());
        for &r in &refs {
            let tr = self.buffer.at(r);
            input.push(HierAgent::low_input(&tr.obs, &tr.subgoal));
            action.push(tr.action.clone());
            let rw = crate::agent::low_reward(&tr.next_subgoal, &tr.next_obs, eta);
            reward.push(rw);
            not_done.push(low_not_done(rw, self.cfg.low_reach_radius));
            next_input.push(HierAgent::low_input(&tr.next_obs, &tr.next_subgoal));
        }
        let batch = Batch {
            input: Matrix::from_rows(&input),
            action: Matrix::from_rows(&action),
            reward,
            next_input: Matrix::from_rows(&next_input),
            not_done,
        };
        let s = self.agent.train_low(&batch, &mut self.noise_rng)?;
        self.interval.low_critic.push(s.critic_loss);
        self.interval.low_actor.extend(s.actor_loss);
        self.interval.gp.extend(s.gp_loss);
        self.interval.grad_s.extend(s.max_grad_s);
        self.interval.violation.extend(s.violation_s);
        Ok(())
    }

    fn train_high(&mut self) -> Result<(), HarnessError> {
        let hs: Vec<HighTransition> =
            self.high_buffer.sample(self.cfg.high_batch_size, &mut self.sample_rng)?.into_iter().cloned().collect();
        let batch = Batch {
            input: Matrix::from_rows(&hs.iter().map(|h| HierAgent::high_input(&h.obs, &h.goal)).collect::<Vec<_>>()),
            action: Matrix::from_rows(&hs.iter().map(|h| h.subgoal.clone()).collect::<Vec<_>>()),
            reward: hs.iter().map(|h| h.reward).collect(),
            next_input: Matrix::from_rows(
                &hs.iter().map(|h| HierAgent::high_input(&h.next_obs, &h.goal)).collect::<Vec<_>>(),
            ),
            not_done: hs.iter().map(|h| if h.done { 0.0 } else { 1.0 }).collect(),
        };
        let pseudo = match &self.graph {
            Some(g) if self.agent.high.actor_due_next() => {
                let states: Vec<Vec<f64>> = hs.iter().map(|h| h.obs.clone()).collect();
                let goals: Vec<Vec<f64>> = hs.iter().map(|h| h.goal.clone()).collect();
                let plans = g.plan_batch(&states, &goals, &self.agent.estimator());
                let rows: Vec<Vec<f64>> = plans
                    .iter()
                    .zip(&states)
                    .map(|(p, s)| pseudo_landmark(&p.subgoal, &phi(s), self.cfg.delta_pseudo).0)
                    .collect();
                Some(Matrix::from_rows(&rows))
            }
            _ => None,
        };
        let s = self.agent.train_high(&batch, pseudo.as_ref(), &mut self.noise_rng)?;
        self.interval.high_critic.push(s.critic_loss);
        self.interval.high_actor.extend(s.actor_loss);
        self.interval.aclg.extend(s.aclg_loss);
        Ok(())
    }

    /// Rebuilds the landmark graph from a fresh pool draw and the current
    /// novelty candidates.
    pub fn rebuild_graph(&mut self) -> Result<(), HarnessError> {
        let alpha = self.cfg.alpha_at(self.step);
        let refs = self.buffer.sample_pool(self.cfg.sampler, self.cfg.pool_size, alpha, self.cfg.topk, &mut self.sample_rng)?;
        let pool: Vec<Vec<f64>> = refs.iter().map(|&r| self.buffer.at(r).obs.clone()).collect();
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        if let Some(g) = &self.graph {
            let set = g.landmarks();
            for (i, s) in set.states.iter().enumerate() {
                if set.kinds[i] == crate::graph::LandmarkKind::Novelty {
                    candidates.push(s.clone());
                }
            }
        }
        candidates.extend(self.candidates.iter().cloned());
        let pts: Vec<Vec<f64>> = candidates.iter().map(|s| phi(s).to_vec()).collect();
        let scores = self.novelty.scores(&pts)?;
        let set = select_landmarks(
            &pool,
            self.cfg.n_cov,
            &candidates,
            &scores,
            self.cfg.n_nov,
            |s| phi(s).to_vec(),
            &mut self.sample_rng,
        );
        self.graph = Some(LandmarkGraph::build(set, &self.agent.estimator(), self.cfg.cutoff));
        Ok(())
    }

    pub fn evaluate(&self, episodes: usize, seed: u64) -> Result<EvalResult, HarnessError> {
        let mut rng = stream(seed, Stream::Eval);
        evaluate(&self.agent, &self.spec, episodes, &mut rng)
    }

    fn record_eval(&mut self) -> Result<(), HarnessError> {
        let seed = self.cfg.seed.wrapping_mul(1_000_003).wrapping_add(self.evals);
        self.evals += 1;
        let ev = self.evaluate(self.cfg.eval_episodes, seed)?;
        let iv = std::mem::take(&mut self.interval);
        let (b_s, b_sg) = match self.agent.bounds {
            Some(b) => (Some(b.b_s), Some(b.b_sg)),
            None => (None, None),
        };
        self.metrics.push(MetricsRecord {
            step: self.step,
            success_rate: ev.success_rate,
            eval_return: ev.mean_return,
            train_return: mean(&iv.returns),
            episodes: self.episodes,
            low_critic_loss: mean(&iv.low_critic),
            low_actor_loss: mean(&iv.low_actor),
            high_critic_loss: mean(&iv.high_critic),
            high_actor_loss: mean(&iv.high_actor),
            aclg_loss: mean(&iv.aclg),
            gp_loss: mean(&iv.gp),
            adj_loss: mean(&iv.adj),
            rnd_loss: mean(&iv.rnd),
            b_s,
            b_sg,
            grad_s_p50: percentile(&iv.grad_s, 0.5),
            grad_s_p90: percentile(&iv.grad_s, 0.9),
            violation_s: mean(&iv.violation),
            landmarks: self.graph.as_ref().map_or(0, |g| g.len()),
            edges: self.graph.as_ref().map_or(0, |g| g.edges().len()),
        });
        Ok(())
    }

    /// Trains for `cfg.total_steps`, writing artifacts into `out` when given.
    /// On a non-finite training signal the last checkpoint taken at an
    /// evaluation is saved as `checkpoint_last_good.json` before the error is
    /// returned.
    pub fn run(&mut self, out: Option<&Path>) -> Result<RunSummary, HarnessError> {
        let started = Instant::now();
        if let Some(dir) = out {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(super::CONFIG_FILE), self.cfg.to_json())?;
        }
        let mut last_good = self.agent.to_json();
        let mut seen = self.metrics.len();
        while self.step < self.cfg.total_steps {
            if let Err(e) = self.step() {
                if let (Some(dir), HarnessError::Agent(AgentError::NonFinite(_))) = (out, &e) {
                    fs::write(dir.join("checkpoint_last_good.json"), &last_good)?;
                }
                return Err(e);
            }
            if self.metrics.len() != seen {
                seen = self.metrics.len();
                last_good = self.agent.to_json();
                if let Some(dir) = out {
                    // Partial curve so long runs can be watched.
                    super::write_metrics_csv(&self.metrics, fs::File::create(dir.join(super::METRICS_FILE))?)?;
                }
            }
        }
        let summary = RunSummary {
            steps: self.step,
            episodes: self.episodes,
            final_success: self.metrics.last().map(|m| m.success_rate),
            best_success: self.metrics.iter().map(|m| m.success_rate).reduce(f64::max),
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        if let Some(dir) = out {
            self.write_artifacts(dir, &summary)?;
        }
        Ok(summary)
    }

    fn write_artifacts(&self, dir: &Path, summary: &RunSummary) -> Result<(), HarnessError> {
        super::write_metrics_csv(&self.metrics, fs::File::create(dir.join(super::METRICS_FILE))?)?;
        self.agent.save(&dir.join(super::CHECKPOINT_FILE))?;
        let set = self.graph.as_ref().map(|g| g.landmarks().clone()).unwrap_or_default();
        fs::write(dir.join(super::LANDMARKS_JSON), serde_json::to_string(&set)?)?;
        if let Some(g) = &self.graph {
            g.write_edges_csv(fs::File::create(dir.join("edges.csv"))?)?;
        }
        if self.cfg.save_replay {
            self.buffer.export_jsonl(std::io::BufWriter::new(fs::File::create(dir.join(super::REPLAY_FILE))?))?;
        }
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)?)?;
        super::export_artifacts(dir)?;
        Ok(())
    }
}

/// Convenience wrapper: build a trainer and run it.
pub fn run_training(cfg: RunConfig, out: Option<&Path>) -> Result<(RunSummary, Trainer), HarnessError> {
    let mut trainer = Trainer::new(cfg)?;
    let summary = trainer.run(out)?;
    Ok((summary, trainer))
}

/// Bootstrap mask for a low-level transition with reward `-distance`.
fn low_not_done(reward: f64, reach_radius: f64) -> f64 {
    if reach_radius > 0.0 && -reward <= reach_radius {
        0.0
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reaching_the_subgoal_ends_bootstrapping() {
        assert_eq!(low_not_done(-0.3, 0.5), 0.0);
        assert_eq!(low_not_done(-0.5, 0.5), 0.0);
        assert_eq!(low_not_done(-0.51, 0.5), 1.0);
        assert_eq!(low_not_done(0.0, 0.0), 1.0);
    }
}
