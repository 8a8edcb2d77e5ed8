//! k-step adjacency: a binary store of reachable cell pairs and an embedding
//! trained so that embedding distance is small exactly for adjacent pairs.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Adam, Matrix, Mlp, OutputActivation};

use super::AgentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyConfig {
    /// Steps within which two states count as adjacent.
    pub k: usize,
    /// Embedding distance scale for adjacent pairs.
    pub zeta: f64,
    /// Margin for non-adjacent pairs.
    pub delta: f64,
    /// Grid cell used to key the store.
    pub cell: f64,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub lr: f64,
    /// Divides inputs before the embedding net.
    pub input_scale: f64,
}

impl Default for AdjacencyConfig {
    fn default() -> Self {
        Self { k: 10, zeta: 1.0, delta: 0.2, cell: 0.375, hidden: vec![64, 64], embed_dim: 16, lr: 2e-4, input_scale: 12.0 }
    }
}

/// Loss and input gradients of the contrastive adjacency objective.
#[derive(Debug, Clone)]
pub struct AdjacencyLoss {
    pub loss: f64,
    /// Gradient with respect to the embeddings of `a` and `b`.
    pub grad_a: Matrix,
    pub grad_b: Matrix,
}

/// `mean l * relu(d - zeta) + (1 - l) * relu(zeta + delta - d)` over embedding
/// pairs, with `d` the Euclidean distance between rows of `ea` and `eb`.
pub fn adjacency_loss(ea: &Matrix, eb: &Matrix, labels: &[f64], zeta: f64, delta: f64) -> AdjacencyLoss {
    let n = labels.len();
    let mut grad_a = Matrix::zeros(n, ea.cols());
    let mut grad_b = Matrix::zeros(n, ea.cols());
    let mut loss = 0.0;
    for r in 0..n {
        let diff: Vec<f64> = ea.row(r).iter().zip(eb.row(r)).map(|(x, y)| x - y).collect();
        let d = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        let l = labels[r];
        let mut slope = 0.0;
        if l > 0.0 && d > zeta {
            loss += l * (d - zeta);
            slope += l;
        }
        if l < 1.0 && d < zeta + delta {
            loss += (1.0 - l) * (zeta + delta - d);
            slope -= 1.0 - l;
        }
        if slope != 0.0 && d > 0.0 {
            let k = slope / (d * n as f64);
            for (j, v) in diff.iter().enumerate() {
                grad_a.set(r, j, k * v);
                grad_b.set(r, j, -k * v);
            }
        }
    }
    AdjacencyLoss { loss: loss / n as f64, grad_a, grad_b }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdjacencyModel {
    pub net: Mlp,
    opt: Adam,
    pub cfg: AdjacencyConfig,
    /// Visited cells and one representative point per cell, by cell id.
    cells: Vec<Vec<i64>>,
    reps: Vec<Vec<f64>>,
    /// Adjacent id pairs in insertion order (both orientations).
    pairs: Vec<(u32, u32)>,
    #[serde(skip)]
    cell_ids: HashMap<Vec<i64>, u32>,
    #[serde(skip)]
    pair_set: HashSet<(u32, u32)>,
    pub train_steps: u64,
}

impl AdjacencyModel {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, cfg: AdjacencyConfig, rng: &mut R) -> Result<Self, AgentError> {
        if !(cfg.zeta > 0.0 && cfg.delta > 0.0 && cfg.k >= 1 && cfg.cell > 0.0) {
            return Err(AgentError::Config("adjacency needs zeta, delta, cell > 0 and k >= 1".into()));
        }
        let mut sizes = vec![input_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(cfg.embed_dim);
        let net = Mlp::new(&sizes, OutputActivation::Identity, rng)?;
        let opt = Adam::for_net(&net, cfg.lr);
        Ok(Self {
            net,
            opt,
            cfg,
            cells: Vec::new(),
            reps: Vec::new(),
            pairs: Vec::new(),
            cell_ids: HashMap::new(),
            pair_set: HashSet::new(),
            train_steps: 0,
        })
    }

    /// Rebuilds lookup tables after deserialization.
    pub fn rebuild_index(&mut self) {
        self.cell_ids = self.cells.iter().enumerate().map(|(i, c)| (c.clone(), i as u32)).collect();
        self.pair_set = self.pairs.iter().copied().collect();
    }

    fn key(&self, p: &[f64]) -> Vec<i64> {
        p.iter().map(|v| (v / self.cfg.cell).floor() as i64).collect()
    }

    fn intern(&mut self, p: &[f64]) -> u32 {
        let key = self.key(p);
        if let Some(&id) = self.cell_ids.get(&key) {
            return id;
        }
        let id = self.cells.len() as u32;
        self.cells.push(key.clone());
        self.reps.push(p.to_vec());
        self.cell_ids.insert(key, id);
        id
    }

    fn mark(&mut self, a: u32, b: u32) {
        for pair in [(a, b), (b, a)] {
            if self.pair_set.insert(pair) {
                self.pairs.push(pair);
            }
        }
    }

    /// Marks every pair of points at most `k` steps apart along the
    /// trajectory as adjacent.
    pub fn update_store(&mut self, points: &[Vec<f64>]) {
        let ids: Vec<u32> = points.iter().map(|p| self.intern(p)).collect();
        for i in 0..ids.len() {
            for j in i..ids.len().min(i + self.cfg.k + 1) {
                self.mark(ids[i], ids[j]);
            }
        }
    }

    pub fn is_adjacent(&self, a: &[f64], b: &[f64]) -> bool {
        match (self.cell_ids.get(&self.key(a)), self.cell_ids.get(&self.key(b))) {
            (Some(&x), Some(&y)) => self.pair_set.contains(&(x, y)),
            _ => false,
        }
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    fn scaled(&self, x: &Matrix) -> Matrix {
        let mut s = x.clone();
        for v in s.as_mut_slice() {
            *v /= self.cfg.input_scale;
        }
        s
    }

    pub fn embed(&self, x: &Matrix) -> Result<Matrix, AgentError> {
        Ok(self.net.forward_batch(&self.scaled(x))?)
    }

    /// Gradient of `sum_r upstream_r . psi(x_r)` with respect to `x`.
    pub fn embed_input_grad(&self, x: &Matrix, upstream: &Matrix) -> Result<Matrix, AgentError> {
        let cache = self.net.forward_cached(&self.scaled(x))?;
        let mut g = self.net.backward(&cache, upstream)?.input;
        for v in g.as_mut_slice() {
            *v /= self.cfg.input_scale;
        }
        Ok(g)
    }

    /// Loss and parameter gradient on explicit pairs.
    pub fn loss_and_grads(&self, a: &Matrix, b: &Matrix, labels: &[f64]) -> Result<(f64, Vec<f64>), AgentError> {
        let n = labels.len();
        let both = self.scaled(&Matrix::from_rows(
            &(0..n).map(|r| a.row(r).to_vec()).chain((0..n).map(|r| b.row(r).to_vec())).collect::<Vec<_>>(),
        ));
        let cache = self.net.forward_cached(&both)?;
        let out = cache.output();
        let ea = Matrix::from_rows(&(0..n).map(|r| out.row(r).to_vec()).collect::<Vec<_>>());
        let eb = Matrix::from_rows(&(0..n).map(|r| out.row(n + r).to_vec()).collect::<Vec<_>>());
        let l = adjacency_loss(&ea, &eb, labels, self.cfg.zeta, self.cfg.delta);
        let mut up = Matrix::zeros(2 * n, out.cols());
        for r in 0..n {
            up.row_mut(r).copy_from_slice(l.grad_a.row(r));
            up.row_mut(n + r).copy_from_slice(l.grad_b.row(r));
        }
        Ok((l.loss, self.net.backward(&cache, &up)?.params))
    }

    /// Half positives drawn from the store, half uniformly random cell pairs
    /// labelled by lookup.
    pub fn sample_pairs<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<(Matrix, Matrix, Vec<f64>)> {
        if self.pairs.is_empty() || self.cells.len() < 2 {
            return None;
        }
        let (mut a, mut b, mut labels) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let (x, y) = if i % 2 == 0 {
                self.pairs[rng.random_range(0..self.pairs.len())]
            } else {
                (rng.random_range(0..self.cells.len()) as u32, rng.random_range(0..self.cells.len()) as u32)
            };
            a.push(self.reps[x as usize].clone());
            b.push(self.reps[y as usize].clone());
            labels.push(if self.pair_set.contains(&(x, y)) { 1.0 } else { 0.0 });
        }
        Some((Matrix::from_rows(&a), Matrix::from_rows(&b), labels))
    }

    /// One optimizer step on a sampled batch; `None` until the store has data.
    pub fn train<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R) -> Result<Option<f64>, AgentError> {
        let Some((a, b, labels)) = self.sample_pairs(n, rng) else {
            return Ok(None);
        };
        let (loss, grads) = self.loss_and_grads(&a, &b, &labels)?;
        self.opt.apply(&mut self.net, &grads)?;
        self.train_steps += 1;
        Ok(Some(loss))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(k: usize) -> AdjacencyModel {
        let cfg = AdjacencyConfig { k, cell: 1.0, ..AdjacencyConfig::default() };
        AdjacencyModel::new(2, cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    fn walk(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64 + 0.5, 0.5]).collect()
    }

    #[test]
    fn consecutive_states_are_adjacent_and_far_ones_are_not() {
        let mut m = model(2);
        let pts = walk(6);
        m.update_store(&pts);
        assert!(m.is_adjacent(&pts[0], &pts[1]));
        assert!(m.is_adjacent(&pts[3], &pts[1]), "store is symmetric");
        assert!(m.is_adjacent(&pts[0], &pts[2]));
        assert!(!m.is_adjacent(&pts[0], &pts[3]));
    }

    #[test]
    fn adjacency_is_a_monotone_union() {
        let mut m = model(1);
        let pts = walk(4);
        m.update_store(&pts);
        assert!(!m.is_adjacent(&pts[0], &pts[3]));
        m.update_store(&[pts[3].clone(), pts[0].clone()]);
        assert!(m.is_adjacent(&pts[0], &pts[3]));
        m.update_store(&walk(2));
        assert!(m.is_adjacent(&pts[0], &pts[3]));
    }

    #[test]
    fn loss_reference_values() {
        let zero = Matrix::from_rows(&[[0.0, 0.0]]);
        let near = Matrix::from_rows(&[[0.5, 0.0]]);
        let far = Matrix::from_rows(&[[2.0, 0.0]]);
        assert_eq!(adjacency_loss(&zero, &near, &[1.0], 1.0, 0.2).loss, 0.0);
        assert_eq!(adjacency_loss(&zero, &far, &[0.0], 1.0, 0.2).loss, 0.0);
        assert!((adjacency_loss(&zero, &far, &[1.0], 1.0, 0.2).loss - 1.0).abs() < 1e-15);
        assert!((adjacency_loss(&zero, &near, &[0.0], 1.0, 0.2).loss - 0.7).abs() < 1e-15);
    }

    #[test]
    fn serde_round_trip_restores_lookups() {
        let mut m = model(2);
        m.update_store(&walk(5));
        let back: AdjacencyModel = {
            let mut b: AdjacencyModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
            b.rebuild_index();
            b
        };
        assert_eq!(back.num_pairs(), m.num_pairs());
        assert!(back.is_adjacent(&[0.5, 0.5], &[2.5, 0.5]));
    }
}
