//! Random network distillation novelty over goal-space points.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Adam, Matrix, Mlp, NnError, OutputActivation};

/// Welford running mean/variance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn std(&self) -> f64 {
        if self.count < 2 {
            1.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt().max(1e-12)
        }
    }
}

/// A fixed random target net and a predictor trained to imitate it; the
/// prediction error is high on inputs the predictor has rarely seen.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoveltyScorer {
    target: Mlp,
    predictor: Mlp,
    opt: Adam,
    input_scale: f64,
    pub stats: RunningStats,
}

impl NoveltyScorer {
    /// `input_scale` divides inputs before both nets (roughly the extent of
    /// the goal space).
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        embed_dim: usize,
        lr: f64,
        input_scale: f64,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(embed_dim);
        let target = Mlp::new(&sizes, OutputActivation::Identity, rng)?;
        let predictor = Mlp::new(&sizes, OutputActivation::Identity, rng)?;
        let opt = Adam::for_net(&predictor, lr);
        Ok(Self { target, predictor, opt, input_scale, stats: RunningStats::default() })
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    fn scaled(&self, points: &[Vec<f64>]) -> Matrix {
        let mut x = Matrix::from_rows(points);
        for v in x.as_mut_slice() {
            *v /= self.input_scale;
        }
        x
    }

    /// Mean squared prediction error per point.
    pub fn scores(&self, points: &[Vec<f64>]) -> Result<Vec<f64>, NnError> {
        if points.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.scaled(points);
        let t = self.target.forward_batch(&x)?;
        let p = self.predictor.forward_batch(&x)?;
        let k = t.cols() as f64;
        Ok((0..t.rows())
            .map(|r| t.row(r).iter().zip(p.row(r)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / k)
            .collect())
    }

    /// One Adam step on the batch-mean score; returns the pre-step loss.
    pub fn train(&mut self, points: &[Vec<f64>]) -> Result<f64, NnError> {
        if points.is_empty() {
            return Ok(0.0);
        }
        let x = self.scaled(points);
        let t = self.target.forward_batch(&x)?;
        let cache = self.predictor.forward_cached(&x)?;
        let p = cache.output();
        let n = (t.rows() * t.cols()) as f64;
        let mut up = Matrix::zeros(t.rows(), t.cols());
        let mut loss = 0.0;
        for ((u, a), b) in up.as_mut_slice().iter_mut().zip(p.as_slice()).zip(t.as_slice()) {
            loss += (a - b) * (a - b);
            *u = 2.0 * (a - b) / n;
        }
        loss /= n;
        let g = self.predictor.backward(&cache, &up)?;
        self.opt.apply(&mut self.predictor, &g.params)?;
        let k = t.cols() as f64;
        for r in 0..t.rows() {
            let s = t.row(r).iter().zip(p.row(r)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / k;
            self.stats.push(s);
        }
        Ok(loss)
    }
}

/// Indices of the `m` highest scores, ties going to the later (more recent)
/// candidate. Candidates are expected oldest first.
pub fn select_novel(scores: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(b.cmp(&a)));
    idx.truncate(m);
    idx
}
