//! Landmark selection, the landmark graph and subgoal planning.
//!
//! Coverage landmarks come from farthest point sampling over a state pool
//! (drawn by one of the replay samplers); novelty landmarks are the recent
//! states with the highest RND error. Edges carry estimated step costs from
//! the low-level critic, and the planner returns the first landmark on the
//! shortest path to the goal.

mod fps;
mod novelty;
mod planner;

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use fps::{fps, fps_from};
pub use novelty::{select_novel, NoveltyScorer, RunningStats};
pub use planner::{
    distances_to_goal, edge_weight, first_hop, pseudo_landmark, DistanceEstimator, Hop, LandmarkGraph, Plan,
};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LandmarkKind {
    Coverage,
    Novelty,
}

/// Landmark states, their goal-space points and provenance, index-aligned.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub states: Vec<Vec<f64>>,
    pub points: Vec<Vec<f64>>,
    pub kinds: Vec<LandmarkKind>,
}

/// Two landmarks closer than this in goal space are the same landmark.
pub const DUPLICATE_TOL: f64 = 1e-9;

impl LandmarkSet {
    pub fn from_parts(states: Vec<Vec<f64>>, points: Vec<Vec<f64>>, kinds: Vec<LandmarkKind>) -> Self {
        assert!(states.len() == points.len() && points.len() == kinds.len());
        Self { states, points, kinds }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, kind: LandmarkKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        self.points
            .iter()
            .any(|q| q.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= DUPLICATE_TOL)
    }

    /// Adds a landmark unless its point duplicates an existing one.
    pub fn push(&mut self, state: Vec<f64>, point: Vec<f64>, kind: LandmarkKind) -> bool {
        if self.contains_point(&point) {
            return false;
        }
        self.states.push(state);
        self.points.push(point);
        self.kinds.push(kind);
        true
    }

    /// CSV with header `x,y,type`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), GraphError> {
        #[derive(Serialize)]
        struct Row {
            x: f64,
            y: f64,
            #[serde(rename = "type")]
            kind: LandmarkKind,
        }
        let mut out = csv::Writer::from_writer(w);
        for (p, k) in self.points.iter().zip(&self.kinds) {
            out.serialize(Row { x: p[0], y: p[1], kind: *k })?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Builds a landmark set: up to `n_cov` FPS picks over `pool`, then up to
/// `n_nov` of the highest-scoring `candidates` (oldest first) that are not
/// already present. `phi` projects states to goal space.
pub fn select_landmarks<R: Rng + ?Sized>(
    pool: &[Vec<f64>],
    n_cov: usize,
    candidates: &[Vec<f64>],
    novelty: &[f64],
    n_nov: usize,
    phi: impl Fn(&[f64]) -> Vec<f64>,
    rng: &mut R,
) -> LandmarkSet {
    assert_eq!(candidates.len(), novelty.len());
    let mut set = LandmarkSet::default();
    let points: Vec<Vec<f64>> = pool.iter().map(|s| phi(s)).collect();
    for i in fps(&points, n_cov, rng) {
        set.push(pool[i].clone(), points[i].clone(), LandmarkKind::Coverage);
    }
    let mut added = 0;
    for i in select_novel(novelty, candidates.len()) {
        if added == n_nov {
            break;
        }
        if set.push(candidates[i].clone(), phi(&candidates[i]), LandmarkKind::Novelty) {
            added += 1;
        }
    }
    set
}

impl LandmarkGraph {
    /// Edge list CSV with header `src,dst,weight`.
    pub fn write_edges_csv<W: Write>(&self, w: W) -> Result<(), GraphError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["src", "dst", "weight"])?;
        for (s, d, wt) in self.edges() {
            out.write_record([s.to_string(), d.to_string(), wt.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn phi(s: &[f64]) -> Vec<f64> {
        s[..2].to_vec()
    }

    #[test]
    fn selection_fills_both_kinds_without_duplicates() {
        let pool: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 6) as f64, (i / 6) as f64, 0.0, 0.0]).collect();
        let cands: Vec<Vec<f64>> = vec![vec![0.0, 0.0, 1.0, 1.0], vec![9.0, 9.0, 0.0, 0.0], vec![8.0, 9.0, 0.0, 0.0]];
        let scores = [10.0, 5.0, 1.0];
        let set = select_landmarks(&pool, 5, &cands, &scores, 2, phi, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(set.count(LandmarkKind::Coverage), 5);
        assert_eq!(set.count(LandmarkKind::Novelty), 2);
        for i in 0..set.len() {
            for j in 0..i {
                assert!(set.points[i] != set.points[j]);
            }
        }
    }

    #[test]
    fn small_pools_give_fewer_landmarks() {
        let pool = vec![vec![1.0, 1.0, 0.0, 0.0]; 4];
        let set = select_landmarks(&pool, 20, &[], &[], 20, phi, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn landmark_csv_has_header_and_types() {
        let set = LandmarkSet::from_parts(
            vec![vec![0.0; 4], vec![0.0; 4]],
            vec![vec![1.5, 2.0], vec![3.0, 4.25]],
            vec![LandmarkKind::Coverage, LandmarkKind::Novelty],
        );
        let mut out = Vec::new();
        set.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "x,y,type\n1.5,2.0,coverage\n3.0,4.25,novelty\n");
    }
}
