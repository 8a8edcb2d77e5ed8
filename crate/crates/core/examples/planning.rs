//! Plans through a landmark graph around a wall, with straight-line distance
//! as the cost model and walls making edges unusable.
//!
//! cargo run --release --example planning

use hg2p::env::{MazeName, MazeSpec, RewardMode};
use hg2p::graph::{pseudo_landmark, DistanceEstimator, LandmarkGraph, LandmarkKind, LandmarkSet};
use hg2p::nn::Matrix;

/// Euclidean distance when the segment is clear, otherwise no edge.
struct LineOfSight<'a>(&'a MazeSpec);

impl DistanceEstimator for LineOfSight<'_> {
    fn estimate(&self, from: &[Vec<f64>], targets: &[Vec<f64>]) -> Matrix {
        let mut m = Matrix::zeros(from.len(), targets.len());
        for (i, s) in from.iter().enumerate() {
            for (j, t) in targets.iter().enumerate() {
                let (a, b) = ([s[0], s[1]], [t[0], t[1]]);
                m.set(i, j, if self.0.segment_blocked(a, b) { f64::INFINITY } else { hg2p::env::distance(a, b) });
            }
        }
        m
    }
}

fn main() {
    let spec = MazeSpec::preset(MazeName::EmbossedMaze, RewardMode::Sparse);
    let pts = [[2.0, 10.5], [6.5, 10.5], [10.5, 10.5], [10.5, 8.0], [2.0, 1.5], [6.5, 1.5], [6.5, 6.0]];
    let mut set = LandmarkSet::default();
    for p in pts {
        set.push(vec![p[0], p[1], 0.0, 0.0], p.to_vec(), LandmarkKind::Coverage);
    }
    let graph = LandmarkGraph::build(set, &LineOfSight(&spec), 6.0);
    println!("{} landmarks, {} edges under cutoff {}", graph.len(), graph.edges().len(), graph.cutoff());

    let mut state = vec![1.0, 6.0, 0.0, 0.0];
    let goal = spec.eval_goal.to_vec();
    for _ in 0..8 {
        let plan = graph.plan(&state, &goal, &LineOfSight(&spec));
        let (pseudo, _) = pseudo_landmark(&plan.subgoal, &state[..2], 1.0);
        println!(
            "at ({:5.2}, {:5.2}): {:?} -> ({:5.2}, {:5.2}), cost {:.2}, pseudo-landmark ({:5.2}, {:5.2})",
            state[0], state[1], plan.hop, plan.subgoal[0], plan.subgoal[1], plan.cost, pseudo[0], pseudo[1]
        );
        if plan.subgoal == goal {
            break;
        }
        state = vec![plan.subgoal[0], plan.subgoal[1], 0.0, 0.0];
    }
}
