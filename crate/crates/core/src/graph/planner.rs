//! Landmark graph over estimated step costs and shortest-path subgoal choice.

use std::cmp::Ordering;

use crate::nn::Matrix;

use super::{LandmarkKind, LandmarkSet};

/// Batched cost model: entry `(i, j)` estimates the cost of driving from
/// state `from[i]` to goal-space point `targets[j]`. Non-finite entries mark
/// unusable edges.
pub trait DistanceEstimator {
    fn estimate(&self, from: &[Vec<f64>], targets: &[Vec<f64>]) -> Matrix;
}

/// Edge weight from a value estimate: `-q` clamped at 0; `None` if `q` is not
/// finite.
pub fn edge_weight(q: f64) -> Option<f64> {
    q.is_finite().then_some((-q).max(0.0))
}

/// Where the agent should head next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hop {
    /// The goal itself is the first node on the shortest path.
    Goal,
    /// Landmark on the shortest path.
    Landmark(usize),
    /// Goal unreachable: landmark minimizing the two-hop raw cost.
    Fallback(usize),
    /// Nothing usable; head for the goal.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub hop: Hop,
    /// Goal-space point to pursue.
    pub subgoal: Vec<f64>,
    /// Shortest-path cost, infinite unless `hop` is `Goal` or `Landmark`.
    pub cost: f64,
}

/// Cost-to-`g` for every landmark by Dijkstra on the reversed graph.
/// `w_ll` holds (cut) landmark-to-landmark weights, `w_g[i]` landmark-to-goal;
/// `f64::INFINITY` means no edge.
pub fn distances_to_goal(w_ll: &Matrix, w_g: &[f64]) -> Vec<f64> {
    let n = w_g.len();
    let mut dist = w_g.to_vec();
    let mut done = vec![false; n];
    for _ in 0..n {
        let mut u = usize::MAX;
        for i in 0..n {
            if !done[i] && dist[i].is_finite() && (u == usize::MAX || dist[i] < dist[u]) {
                u = i;
            }
        }
        if u == usize::MAX {
            break;
        }
        done[u] = true;
        for v in 0..n {
            let w = w_ll.get(v, u);
            if !done[v] && w.is_finite() && dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
            }
        }
    }
    dist
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

fn cut(w: f64, cutoff: f64) -> f64 {
    if w.is_finite() && w <= cutoff {
        w
    } else {
        f64::INFINITY
    }
}

/// First hop of the cheapest `s -> ... -> g` path given raw (uncut) weights.
///
/// `w_s[i]` is `s -> landmark i`, `w_g[i]` is `landmark i -> g`, `w_sg` is the
/// direct edge; `w_ll` must already be cut. Equal costs prefer the direct
/// goal edge, then the landmark closest to the goal, then the
/// lexicographically smallest landmark `keys`, so the result does not depend
/// on landmark order.
pub fn first_hop(w_ll: &Matrix, w_s: &[f64], w_g: &[f64], w_sg: f64, cutoff: f64, keys: &[Vec<f64>]) -> (Hop, f64) {
    let n = w_s.len();
    let w_g_cut: Vec<f64> = w_g.iter().map(|&w| cut(w, cutoff)).collect();
    let d = distances_to_goal(w_ll, &w_g_cut);
    let mut best = (Hop::None, cut(w_sg, cutoff));
    if best.1.is_finite() {
        best.0 = Hop::Goal;
    }
    for i in 0..n {
        let c = cut(w_s[i], cutoff) + d[i];
        if !c.is_finite() {
            continue;
        }
        let better = match best.0 {
            Hop::None => true,
            Hop::Goal => c < best.1,
            Hop::Landmark(j) => {
                c < best.1 || (c == best.1 && (d[i] < d[j] || (d[i] == d[j] && lex(&keys[i], &keys[j]).is_lt())))
            }
            Hop::Fallback(_) => unreachable!(),
        };
        if better {
            best = (Hop::Landmark(i), c);
        }
    }
    if best.0 != Hop::None {
        return best;
    }
    let mut fallback: Option<(usize, f64)> = None;
    for i in 0..n {
        let c = w_s[i] + w_g[i];
        if !c.is_finite() {
            continue;
        }
        let take = match fallback {
            None => true,
            Some((j, b)) => c < b || (c == b && lex(&keys[i], &keys[j]).is_lt()),
        };
        if take {
            fallback = Some((i, c));
        }
    }
    match fallback {
        Some((i, _)) => (Hop::Fallback(i), f64::INFINITY),
        None => (Hop::None, f64::INFINITY),
    }
}

/// Landmarks plus their pairwise edge weights. The agent state and goal are
/// attached per query, so one graph serves many planning calls.
#[derive(Debug, Clone)]
pub struct LandmarkGraph {
    set: LandmarkSet,
    /// Cut landmark-to-landmark weights; `INFINITY` = no edge.
    w_ll: Matrix,
    cutoff: f64,
}

impl LandmarkGraph {
    pub fn build<E: DistanceEstimator + ?Sized>(set: LandmarkSet, est: &E, cutoff: f64) -> Self {
        let n = set.len();
        let raw = if n == 0 { Matrix::zeros(0, 0) } else { est.estimate(&set.states, &set.points) };
        let mut w_ll = Matrix::filled(n, n, f64::INFINITY);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    w_ll.set(i, j, cut(raw.get(i, j), cutoff));
                }
            }
        }
        Self { set, w_ll, cutoff }
    }

    /// Graph from explicit weights; `raw` is cut here.
    pub fn from_weights(set: LandmarkSet, raw: &Matrix, cutoff: f64) -> Self {
        let n = set.len();
        assert_eq!((raw.rows(), raw.cols()), (n, n));
        let mut w_ll = Matrix::filled(n, n, f64::INFINITY);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    w_ll.set(i, j, cut(raw.get(i, j), cutoff));
                }
            }
        }
        Self { set, w_ll, cutoff }
    }

    pub fn landmarks(&self) -> &LandmarkSet {
        &self.set
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let w = self.w_ll.get(i, j);
        w.is_finite().then_some(w)
    }

    /// Stored edges as `(src, dst, weight)`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if let Some(w) = self.weight(i, j) {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    /// Plans for a batch of `(state, goal)` queries. Landmark-to-goal costs
    /// are estimated once per distinct goal.
    pub fn plan_batch<E: DistanceEstimator + ?Sized>(&self, states: &[Vec<f64>], goals: &[Vec<f64>], est: &E) -> Vec<Plan> {
        assert_eq!(states.len(), goals.len());
        let b = states.len();
        if b == 0 {
            return Vec::new();
        }
        let n = self.len();
        if n == 0 {
            return goals.iter().map(|g| Plan { hop: Hop::None, subgoal: g.clone(), cost: f64::INFINITY }).collect();
        }
        // Distinct goals share their landmark-to-goal column.
        let mut uniq: Vec<Vec<f64>> = Vec::new();
        let goal_idx: Vec<usize> = goals
            .iter()
            .map(|g| match uniq.iter().position(|u| u == g) {
                Some(k) => k,
                None => {
                    uniq.push(g.clone());
                    uniq.len() - 1
                }
            })
            .collect();
        let w_lg = est.estimate(&self.set.states, &uniq);
        let mut targets = self.set.points.clone();
        targets.extend(uniq.iter().cloned());
        let w_s = est.estimate(states, &targets);

        let w_g_cols: Vec<Vec<f64>> = (0..uniq.len()).map(|k| (0..n).map(|i| w_lg.get(i, k)).collect()).collect();
        (0..b)
            .map(|q| {
                let row = w_s.row(q);
                let k = goal_idx[q];
                let (hop, cost) = first_hop(&self.w_ll, &row[..n], &w_g_cols[k], row[n + k], self.cutoff, &self.set.points);
                let subgoal = match hop {
                    Hop::Landmark(i) | Hop::Fallback(i) => self.set.points[i].clone(),
                    Hop::Goal | Hop::None => goals[q].clone(),
                };
                Plan { hop, subgoal, cost }
            })
            .collect()
    }

    pub fn plan<E: DistanceEstimator + ?Sized>(&self, state: &[f64], goal: &[f64], est: &E) -> Plan {
        self.plan_batch(&[state.to_vec()], &[goal.to_vec()], est).pop().expect("one query")
    }

    pub fn kind(&self, i: usize) -> LandmarkKind {
        self.set.kinds[i]
    }
}

/// Shifts `sg_plan` a distance `delta` further along the ray from `phi_s`.
/// Returns the point and whether the ray was degenerate (`sg_plan == phi_s`),
/// in which case `sg_plan` is returned unchanged.
pub fn pseudo_landmark(sg_plan: &[f64], phi_s: &[f64], delta: f64) -> (Vec<f64>, bool) {
    let diff: Vec<f64> = sg_plan.iter().zip(phi_s).map(|(a, b)| a - b).collect();
    let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    if norm == 0.0 {
        return (sg_plan.to_vec(), true);
    }
    (sg_plan.iter().zip(&diff).map(|(p, d)| p + delta * d / norm).collect(), false)
}
