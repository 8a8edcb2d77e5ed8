//! Deterministic 2-D point-mass mazes with goal-conditioned rewards.
//!
//! The agent is a point with velocity. Each step the (clamped) action is added
//! as an acceleration to the damped velocity and the position is integrated one
//! axis at a time; a move that would enter a wall stops at the wall face and
//! zeroes that velocity component, so the agent slides along walls.

mod layouts;
mod trajectory;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::Matrix;

pub use trajectory::{TrajectoryDump, TrajectoryPoint};

/// Full observation: `(x, y, vx, vy)`.
pub const STATE_DIM: usize = 4;
/// Goal space: `(x, y)`.
pub const GOAL_DIM: usize = 2;
pub const ACTION_DIM: usize = 2;

pub const DENSE_SUCCESS_BONUS: f64 = 200.0;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("invalid maze spec: {0}")]
    InvalidSpec(String),
    #[error("maze config: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MazeName {
    UMaze12,
    UMaze24,
    EmbossedMaze,
}

impl std::str::FromStr for MazeName {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "UMaze12" | "umaze12" => Ok(Self::UMaze12),
            "UMaze24" | "umaze24" => Ok(Self::UMaze24),
            "EmbossedMaze" | "embossed" => Ok(Self::EmbossedMaze),
            other => Err(EnvError::Parse(format!("unknown maze {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Sparse,
    Dense,
}

/// Axis-aligned rectangle `[min, max]`. Its interior is the open box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { min: [x0, y0], max: [x1, y1] }
    }

    pub fn contains_open(&self, p: [f64; 2]) -> bool {
        p[0] > self.min[0] && p[0] < self.max[0] && p[1] > self.min[1] && p[1] < self.max[1]
    }

    pub fn contains_closed(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    fn is_valid(&self) -> bool {
        self.min.iter().chain(&self.max).all(|v| v.is_finite())
            && self.min[0] < self.max[0]
            && self.min[1] < self.max[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Point { at: [f64; 2] },
    Box { rect: Rect },
    /// Uniform over the extent minus wall interiors.
    FreeSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeSpec {
    pub name: MazeName,
    pub extent: Rect,
    pub walls: Vec<Rect>,
    pub start: Region,
    /// Goal distribution used for training episodes.
    pub goal: Region,
    /// Fixed goal used for evaluation episodes.
    pub eval_goal: [f64; 2],
    pub success_radius: f64,
    pub reward_mode: RewardMode,
    pub max_episode_steps: usize,
    /// Componentwise bound on the acceleration action.
    pub action_bound: f64,
    /// Velocity retention per step.
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub step: usize,
    pub goal: [f64; 2],
    /// Number of actions that had to be clamped into the action box.
    pub clamped_actions: u32,
}

impl EnvState {
    pub fn observation(&self) -> [f64; STATE_DIM] {
        [self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    /// Success or step limit.
    pub done: bool,
    pub success: bool,
}

/// Goal-space projection: the position components of an observation.
pub fn phi(obs: &[f64]) -> [f64; GOAL_DIM] {
    [obs[0], obs[1]]
}

/// `dphi/ds`, a 0/1 selector with Frobenius norm `sqrt(GOAL_DIM)`.
pub fn phi_jacobian() -> Matrix {
    let mut m = Matrix::zeros(GOAL_DIM, STATE_DIM);
    for i in 0..GOAL_DIM {
        m.set(i, i, 1.0);
    }
    m
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Closed-ball success test.
pub fn success(pos: [f64; 2], goal: [f64; 2], radius: f64) -> bool {
    distance(pos, goal) <= radius
}

impl MazeSpec {
    pub fn preset(name: MazeName, reward_mode: RewardMode) -> Self {
        layouts::preset(name, reward_mode)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::InvalidSpec(m));
        if !self.extent.is_valid() {
            return bad("extent is degenerate".into());
        }
        if let Some(w) = self.walls.iter().find(|w| !w.is_valid()) {
            return bad(format!("degenerate wall {w:?}"));
        }
        if !(self.success_radius > 0.0 && self.success_radius.is_finite()) {
            return bad(format!("success_radius must be positive, got {}", self.success_radius));
        }
        if self.max_episode_steps == 0 {
            return bad("max_episode_steps must be positive".into());
        }
        if !(self.action_bound > 0.0 && (0.0..1.0).contains(&self.damping)) {
            return bad("action_bound must be positive and damping in [0, 1)".into());
        }
        for (label, region) in [("start", &self.start), ("goal", &self.goal)] {
            match region {
                Region::Point { at } => {
                    if !self.is_free(*at) {
                        return bad(format!("{label} point {at:?} is not in free space"));
                    }
                }
                Region::Box { rect } => {
                    if !rect.is_valid() || !self.extent.contains_closed(rect.min) || !self.extent.contains_closed(rect.max) {
                        return bad(format!("{label} box outside extent"));
                    }
                    if self.walls.iter().any(|w| boxes_overlap(w, rect)) {
                        return bad(format!("{label} box overlaps a wall interior"));
                    }
                }
                Region::FreeSpace => {}
            }
        }
        if !self.is_free(self.eval_goal) {
            return bad("eval goal is not in free space".into());
        }
        if self.name == MazeName::EmbossedMaze {
            let (Region::Point { at: s }, Region::Point { at: g }) = (self.start, self.goal) else {
                return bad("embossed maze needs point start and goal".into());
            };
            if !self.segment_blocked(s, g) {
                return bad("embossed maze: no wall between start and goal".into());
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, EnvError> {
        let spec: Self = toml::from_str(text).map_err(|e| EnvError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("maze spec serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<Self, EnvError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn is_free(&self, p: [f64; 2]) -> bool {
        self.extent.contains_closed(p) && !self.walls.iter().any(|w| w.contains_open(p))
    }

    /// Whether the straight segment `a -> b` passes through a wall interior
    /// (sampled densely; only used for validation and diagnostics).
    pub fn segment_blocked(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        let n = (distance(a, b) / 0.01).ceil().max(1.0) as usize;
        (0..=n).any(|i| {
            let t = i as f64 / n as f64;
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            self.walls.iter().any(|w| w.contains_open(p))
        })
    }

    fn sample_region<R: Rng + ?Sized>(&self, region: &Region, rng: &mut R) -> [f64; 2] {
        match region {
            Region::Point { at } => *at,
            Region::Box { rect } => [
                rng.random_range(rect.min[0]..=rect.max[0]),
                rng.random_range(rect.min[1]..=rect.max[1]),
            ],
            Region::FreeSpace => loop {
                let p = [
                    rng.random_range(self.extent.min[0]..=self.extent.max[0]),
                    rng.random_range(self.extent.min[1]..=self.extent.max[1]),
                ];
                if self.is_free(p) {
                    break p;
                }
            },
        }
    }

    /// Training reset: start and goal drawn from their distributions.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let pos = self.sample_region(&self.start, rng);
        let goal = self.sample_region(&self.goal, rng);
        EnvState { pos, vel: [0.0; 2], step: 0, goal, clamped_actions: 0 }
    }

    /// Evaluation reset: start drawn as usual, goal fixed at `eval_goal`.
    pub fn reset_eval<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let pos = self.sample_region(&self.start, rng);
        EnvState { pos, vel: [0.0; 2], step: 0, goal: self.eval_goal, clamped_actions: 0 }
    }

    /// Reward for arriving at `pos` while pursuing `goal`.
    pub fn reward_at(&self, pos: [f64; 2], goal: [f64; 2]) -> f64 {
        let reached = success(pos, goal, self.success_radius);
        match self.reward_mode {
            RewardMode::Sparse => {
                if reached {
                    0.0
                } else {
                    -1.0
                }
            }
            RewardMode::Dense => {
                let r = -distance(pos, goal);
                if reached {
                    r + DENSE_SUCCESS_BONUS
                } else {
                    r
                }
            }
        }
    }

    pub fn step(&self, state: &EnvState, action: [f64; 2]) -> StepOutcome {
        let mut next = state.clone();
        let mut a = action;
        let mut clamped = false;
        for v in &mut a {
            let c = if v.is_nan() { 0.0 } else { v.clamp(-self.action_bound, self.action_bound) };
            if c != *v {
                clamped = true;
            }
            *v = c;
        }
        if clamped {
            next.clamped_actions += 1;
        }
        for i in 0..2 {
            next.vel[i] = self.damping * state.vel[i] + a[i];
        }
        let (x, hit_x) = self.sweep(next.pos, 0, next.vel[0]);
        next.pos[0] = x;
        if hit_x {
            next.vel[0] = 0.0;
        }
        let (y, hit_y) = self.sweep(next.pos, 1, next.vel[1]);
        next.pos[1] = y;
        if hit_y {
            next.vel[1] = 0.0;
        }
        next.step += 1;
        let reached = success(next.pos, next.goal, self.success_radius);
        let reward = self.reward_at(next.pos, next.goal);
        let done = reached || next.step >= self.max_episode_steps;
        StepOutcome { state: next, reward, done, success: reached }
    }

    /// Moves `pos` along `axis` by `delta`, stopping at the first wall face or
    /// extent boundary. Returns the new coordinate and whether it was blocked.
    fn sweep(&self, pos: [f64; 2], axis: usize, delta: f64) -> (f64, bool) {
        let other = 1 - axis;
        let from = pos[axis];
        let mut to = from + delta;
        let mut hit = false;
        if delta > 0.0 {
            for w in &self.walls {
                if w.min[other] < pos[other] && pos[other] < w.max[other] && w.min[axis] >= from && w.min[axis] < to {
                    to = w.min[axis];
                    hit = true;
                }
            }
            if to > self.extent.max[axis] {
                to = self.extent.max[axis];
                hit = true;
            }
        } else if delta < 0.0 {
            for w in &self.walls {
                if w.min[other] < pos[other] && pos[other] < w.max[other] && w.max[axis] <= from && w.max[axis] > to {
                    to = w.max[axis];
                    hit = true;
                }
            }
            if to < self.extent.min[axis] {
                to = self.extent.min[axis];
                hit = true;
            }
        }
        (to, hit)
    }

    /// Extent center and half-width, used to map a bounded policy output onto
    /// absolute goal-space positions.
    pub fn goal_box(&self) -> ([f64; 2], f64) {
        let c = [
            0.5 * (self.extent.min[0] + self.extent.max[0]),
            0.5 * (self.extent.min[1] + self.extent.max[1]),
        ];
        let half = 0.5 * (self.extent.max[0] - self.extent.min[0]).max(self.extent.max[1] - self.extent.min[1]);
        (c, half)
    }
}

fn boxes_overlap(a: &Rect, b: &Rect) -> bool {
    a.min[0] < b.max[0] && b.min[0] < a.max[0] && a.min[1] < b.max[1] && b.min[1] < a.max[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn embossed_reset_starts_at_left_midpoint_at_rest() {
        let spec = MazeSpec::preset(MazeName::EmbossedMaze, RewardMode::Sparse);
        let s = spec.reset(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(s.pos, [spec.extent.min[0] + 1.0, 0.5 * (spec.extent.min[1] + spec.extent.max[1])]);
        assert_eq!(s.vel, [0.0, 0.0]);
    }

    #[test]
    fn umaze_eval_goal_is_top_left() {
        let spec = MazeSpec::preset(MazeName::UMaze12, RewardMode::Sparse);
        let s = spec.reset_eval(&mut ChaCha8Rng::seed_from_u64(0));
        assert!(s.goal[0] < 4.0 && s.goal[1] > 8.0);
        assert!(s.pos[0] < 4.0 && s.pos[1] < 4.0);
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let spec = MazeSpec::preset(MazeName::UMaze12, RewardMode::Sparse);
        let a = spec.reset(&mut ChaCha8Rng::seed_from_u64(9));
        let b = spec.reset(&mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_action_from_rest_stays_put() {
        let spec = MazeSpec::preset(MazeName::UMaze12, RewardMode::Sparse);
        let s = spec.reset_eval(&mut ChaCha8Rng::seed_from_u64(0));
        let out = spec.step(&s, [0.0, 0.0]);
        assert_eq!(out.state.pos, s.pos);
        assert_eq!(out.reward, -1.0);
        assert!(!out.done);
    }

    #[test]
    fn sparse_success_gives_zero_and_done() {
        let spec = MazeSpec::preset(MazeName::EmbossedMaze, RewardMode::Sparse);
        let mut s = spec.reset(&mut ChaCha8Rng::seed_from_u64(0));
        s.pos = [s.goal[0] - 0.2, s.goal[1]];
        let out = spec.step(&s, [0.0, 0.0]);
        assert_eq!(out.reward, 0.0);
        assert!(out.done && out.success);
    }

    #[test]
    fn dense_success_adds_bonus() {
        let spec = MazeSpec::preset(MazeName::EmbossedMaze, RewardMode::Dense);
        let mut s = spec.reset(&mut ChaCha8Rng::seed_from_u64(0));
        s.pos = [s.goal[0] - 0.5, s.goal[1]];
        let out = spec.step(&s, [0.0, 0.0]);
        assert!((out.reward - (200.0 - 0.5)).abs() < 1e-12);
        assert!(out.done);
        s.pos = [s.goal[0] - 3.0, s.goal[1] + 4.0];
        let out = spec.step(&s, [0.0, 0.0]);
        assert!((out.reward + 5.0).abs() < 1e-12);
    }

    #[test]
    fn step_limit_ends_episode() {
        let mut spec = MazeSpec::preset(MazeName::UMaze12, RewardMode::Sparse);
        spec.max_episode_steps = 3;
        let mut s = spec.reset_eval(&mut ChaCha8Rng::seed_from_u64(0));
        for i in 0..3 {
            let out = spec.step(&s, [0.0, 0.0]);
            assert_eq!(out.done, i == 2);
            s = out.state;
        }
    }

    #[test]
    fn out_of_bound_actions_are_clamped_and_counted() {
        let spec = MazeSpec::preset(MazeName::UMaze12, RewardMode::Sparse);
        let s = spec.reset_eval(&mut ChaCha8Rng::seed_from_u64(0));
        let out = spec.step(&s, [10.0, 0.0]);
        assert_eq!(out.state.vel[0], spec.action_bound);
        assert_eq!(out.state.clamped_actions, 1);
        let out = spec.step(&out.state, [0.0, 0.0]);
        assert_eq!(out.state.clamped_actions, 1);
    }

    #[test]
    fn walls_stop_and_slide() {
        let spec = MazeSpec {
            name: MazeName::UMaze12,
            extent: Rect::new(0.0, 0.0, 10.0, 10.0),
            walls: vec![Rect::new(5.0, 0.0, 6.0, 10.0)],
            start: Region::Point { at: [4.5, 5.0] },
            goal: Region::Point { at: [1.0, 1.0] },
            eval_goal: [1.0, 1.0],
            success_radius: 0.5,
            reward_mode: RewardMode::Sparse,
            max_episode_steps: 10,
            action_bound: 1.0,
            damping: 0.0,
        };
        let s = spec.reset(&mut ChaCha8Rng::seed_from_u64(0));
        let out = spec.step(&s, [1.0, 0.5]);
        assert_eq!(out.state.pos, [5.0, 5.5]);
        assert_eq!(out.state.vel, [0.0, 0.5]);
    }

    #[test]
    fn phi_selects_position() {
        let obs = [3.0, 4.0, -0.7, 0.2];
        assert_eq!(phi(&obs), [3.0, 4.0]);
        assert_eq!(phi(&[3.0, 4.0, 9.0, 9.0]), phi(&obs));
        assert!((phi_jacobian().frobenius_norm() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn success_is_closed_ball() {
        assert!(success([1.0, 1.0], [1.0, 1.0], 0.5));
        assert!(success([1.0, 1.5], [1.0, 1.0], 0.5));
        assert!(!success([0.0, 1.0], [0.0, 0.0], 0.75));
    }

    #[test]
    fn presets_validate_and_round_trip_through_toml() {
        for name in [MazeName::UMaze12, MazeName::UMaze24, MazeName::EmbossedMaze] {
            for mode in [RewardMode::Sparse, RewardMode::Dense] {
                let spec = MazeSpec::preset(name, mode);
                spec.validate().unwrap();
                assert_eq!(MazeSpec::from_toml(&spec.to_toml()).unwrap(), spec);
            }
        }
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut spec = MazeSpec::preset(MazeName::EmbossedMaze, RewardMode::Sparse);
        spec.success_radius = 0.0;
        assert!(spec.validate().is_err());

        let mut spec = MazeSpec::preset(MazeName::EmbossedMaze, RewardMode::Sparse);
        spec.walls.clear();
        assert!(spec.validate().is_err(), "embossed maze without its wall");

        let mut spec = MazeSpec::preset(MazeName::UMaze12, RewardMode::Sparse);
        spec.start = Region::Point { at: [4.0, 6.0] };
        assert!(spec.validate().is_err(), "start inside wall");
    }
}
