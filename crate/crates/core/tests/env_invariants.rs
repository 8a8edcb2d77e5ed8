use hg2p::env::{distance, MazeName, MazeSpec, RewardMode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn inside_any_wall(spec: &MazeSpec, p: [f64; 2]) -> bool {
    spec.walls.iter().any(|w| p[0] > w.min[0] && p[0] < w.max[0] && p[1] > w.min[1] && p[1] < w.max[1])
}

#[test]
fn random_episodes_never_enter_walls() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let specs: Vec<MazeSpec> = [MazeName::UMaze12, MazeName::UMaze24, MazeName::EmbossedMaze]
        .into_iter()
        .map(|n| MazeSpec::preset(n, RewardMode::Sparse))
        .collect();
    for ep in 0..10_000 {
        let spec = &specs[ep % specs.len()];
        let mut s = spec.reset(&mut rng);
        // Bang-bang exploration hits walls far more often than uniform noise.
        let hold = rng.random_range(1..30);
        let mut a = [0.0; 2];
        for t in 0..200 {
            if t % hold == 0 {
                let b = spec.action_bound * 1.5;
                a = [rng.random_range(-b..b), rng.random_range(-b..b)];
            }
            let out = spec.step(&s, a);
            let p = out.state.pos;
            assert!(spec.extent.contains_closed(p), "episode {ep} left the extent at {p:?}");
            assert!(!inside_any_wall(spec, p), "episode {ep} entered a wall at {p:?}");
            assert!(out.state.step <= spec.max_episode_steps);
            s = out.state;
            if out.done {
                break;
            }
        }
    }
}

#[test]
fn same_seed_and_actions_give_bit_identical_trajectories() {
    let spec = MazeSpec::preset(MazeName::UMaze12, RewardMode::Dense);
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = spec.reset(&mut rng);
        let mut bits = Vec::new();
        for _ in 0..300 {
            let a = [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)];
            let out = spec.step(&s, a);
            bits.extend(out.state.observation().map(f64::to_bits));
            bits.push(out.reward.to_bits());
            s = out.state;
        }
        bits
    };
    assert_eq!(run(), run());
}

/// Local maxima of the dense reward on a free-space grid, with neighbours
/// connected only when the segment between them avoids walls. Tied cells
/// (the grid straddles the goal symmetrically) are merged into one maximum.
fn dense_local_maxima(spec: &MazeSpec, step: f64) -> Vec<[f64; 2]> {
    let goal = spec.eval_goal;
    let nx = ((spec.extent.max[0] - spec.extent.min[0]) / step).round() as i64;
    let ny = ((spec.extent.max[1] - spec.extent.min[1]) / step).round() as i64;
    let at = |i: i64, j: i64| [spec.extent.min[0] + (i as f64 + 0.5) * step, spec.extent.min[1] + (j as f64 + 0.5) * step];
    let mut maxima = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let p = at(i, j);
            if !spec.is_free(p) {
                continue;
            }
            let r = spec.reward_at(p, goal);
            let mut is_max = true;
            for di in -1..=1 {
                for dj in -1..=1 {
                    let (a, b) = (i + di, j + dj);
                    if (di, dj) == (0, 0) || a < 0 || b < 0 || a >= nx || b >= ny {
                        continue;
                    }
                    let q = at(a, b);
                    if !spec.is_free(q) || spec.segment_blocked(p, q) {
                        continue;
                    }
                    if spec.reward_at(q, goal) > r {
                        is_max = false;
                    }
                }
            }
            if is_max && !maxima.iter().any(|m: &[f64; 2]| distance(*m, p) <= 1.5 * step) {
                maxima.push(p);
            }
        }
    }
    maxima
}

#[test]
fn embossed_dense_landscape_has_goal_and_trap_maxima() {
    let spec = MazeSpec::preset(MazeName::EmbossedMaze, RewardMode::Dense);
    let maxima = dense_local_maxima(&spec, 0.25);
    assert_eq!(maxima.len(), 2, "maxima: {maxima:?}");
    let at_goal = maxima.iter().filter(|p| distance(**p, spec.eval_goal) < spec.success_radius).count();
    assert_eq!(at_goal, 1);
    let trap = maxima.iter().find(|p| distance(**p, spec.eval_goal) >= spec.success_radius).unwrap();
    // The trap sits inside the cup, against its closed side.
    assert!(trap[0] > 4.0 && trap[0] < 9.0 && trap[1] > 3.5 && trap[1] < 8.5, "trap at {trap:?}");
}

#[test]
fn open_arena_dense_landscape_is_unimodal() {
    // With the cup removed the grid oracle must find exactly one maximum.
    let mut spec = MazeSpec::preset(MazeName::EmbossedMaze, RewardMode::Dense);
    spec.walls.clear();
    assert_eq!(dense_local_maxima(&spec, 0.25).len(), 1);
}

proptest! {
    #[test]
    fn rewards_follow_their_mode(x in 0.0f64..12.0, y in 0.0f64..12.0) {
        let sparse = MazeSpec::preset(MazeName::EmbossedMaze, RewardMode::Sparse);
        let dense = MazeSpec::preset(MazeName::EmbossedMaze, RewardMode::Dense);
        let g = sparse.eval_goal;
        let r = sparse.reward_at([x, y], g);
        prop_assert!(r == -1.0 || r == 0.0);
        let d = distance([x, y], g);
        let expect = if d <= dense.success_radius { -d + 200.0 } else { -d };
        prop_assert!((dense.reward_at([x, y], g) - expect).abs() < 1e-12);
    }
}
