//! Built-in maze layouts.
//!
//! All layouts share the point-mass defaults (damping 0.9, acceleration bound
//! 0.1, so top speed is about one world unit per step) and a success radius of
//! 0.75.

use super::{MazeName, MazeSpec, Rect, Region, RewardMode};

const DAMPING: f64 = 0.9;
const ACTION_BOUND: f64 = 0.1;
const SUCCESS_RADIUS: f64 = 0.75;

pub(super) fn preset(name: MazeName, reward_mode: RewardMode) -> MazeSpec {
    match name {
        MazeName::UMaze12 => umaze(1.0, 500, reward_mode),
        MazeName::UMaze24 => umaze(2.0, 1000, reward_mode),
        MazeName::EmbossedMaze => embossed(reward_mode),
    }
}

/// U-shaped corridor: start bottom-left, a horizontal block in the middle
/// reaching from the left edge, evaluation goal top-left.
fn umaze(scale: f64, max_episode_steps: usize, reward_mode: RewardMode) -> MazeSpec {
    let s = |v: f64| v * scale;
    MazeSpec {
        name: if scale == 1.0 { MazeName::UMaze12 } else { MazeName::UMaze24 },
        extent: Rect::new(0.0, 0.0, s(12.0), s(12.0)),
        walls: vec![Rect::new(0.0, s(4.0), s(8.0), s(8.0))],
        start: Region::Box { rect: Rect::new(s(2.0) - 0.5, s(2.0) - 0.5, s(2.0) + 0.5, s(2.0) + 0.5) },
        goal: Region::FreeSpace,
        eval_goal: [s(2.0), s(10.0)],
        success_radius: SUCCESS_RADIUS,
        reward_mode,
        max_episode_steps,
        action_bound: ACTION_BOUND,
        damping: DAMPING,
    }
}

/// Open 12x12 arena with a cup-shaped wall (opening towards the start)
/// between the start on the left edge and the goal on the right. Greedy
/// approach of the goal ends in the cup's pocket.
fn embossed(reward_mode: RewardMode) -> MazeSpec {
    MazeSpec {
        name: MazeName::EmbossedMaze,
        extent: Rect::new(0.0, 0.0, 12.0, 12.0),
        walls: vec![
            Rect::new(4.0, 8.5, 9.0, 9.0),
            Rect::new(4.0, 3.0, 9.0, 3.5),
            Rect::new(8.5, 3.0, 9.0, 9.0),
        ],
        start: Region::Point { at: [1.0, 6.0] },
        goal: Region::Point { at: [11.0, 6.0] },
        eval_goal: [11.0, 6.0],
        success_radius: SUCCESS_RADIUS,
        reward_mode,
        max_episode_steps: 500,
        action_bound: ACTION_BOUND,
        damping: DAMPING,
    }
}
