//! Trajectory weighting: per-task max-min normalization, expected-return
//! regression, the Boltzmann transition weights and the TopK filter.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ReplayError;

/// Below this many samples the regressor predicts the mean.
pub const MIN_REGRESSION_SAMPLES: usize = 20;
pub const MAX_FEATURES: usize = 6;

/// Undiscounted sum of rewards.
pub fn episodic_return(rewards: impl IntoIterator<Item = f64>) -> f64 {
    rewards.into_iter().sum()
}

/// `(R - min) / (max - min)` within each group; degenerate groups map to 0.5.
pub fn normalize_returns<K: Eq + std::hash::Hash>(returns: &[f64], groups: &[K]) -> Vec<f64> {
    assert_eq!(returns.len(), groups.len());
    let mut span: HashMap<&K, (f64, f64)> = HashMap::new();
    for (r, k) in returns.iter().zip(groups) {
        let e = span.entry(k).or_insert((f64::INFINITY, f64::NEG_INFINITY));
        e.0 = e.0.min(*r);
        e.1 = e.1.max(*r);
    }
    returns
        .iter()
        .zip(groups)
        .map(|(r, k)| {
            let (lo, hi) = span[k];
            if hi > lo {
                (r - lo) / (hi - lo)
            } else {
                0.5
            }
        })
        .collect()
}

/// Linear model of the return of a start/goal pair on at most
/// [`MAX_FEATURES`] inputs, or the sample mean when data are too thin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnRegressor {
    pub features: Vec<usize>,
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub fallback: bool,
}

impl ReturnRegressor {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.features.iter().zip(&self.coef).map(|(&j, c)| c * x[j]).sum::<f64>()
    }

    fn mean(y: &[f64]) -> Self {
        Self { features: Vec::new(), coef: Vec::new(), intercept: y.iter().sum::<f64>() / y.len() as f64, fallback: true }
    }
}

/// Least squares on the features most correlated (in absolute value) with
/// the target. Falls back to the mean below [`MIN_REGRESSION_SAMPLES`]
/// samples, with fewer than two distinct inputs, or when no feature varies.
pub fn fit_expected_return(x: &[Vec<f64>], y: &[f64]) -> Result<ReturnRegressor, ReplayError> {
    if x.is_empty() || x.len() != y.len() {
        return Err(ReplayError::Regression(format!("{} inputs for {} targets", x.len(), y.len())));
    }
    let n = x.len();
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) || !y.iter().all(|v| v.is_finite()) {
        return Err(ReplayError::Regression("ragged or non-finite data".into()));
    }
    let distinct = x.iter().any(|r| r != &x[0]);
    if n < MIN_REGRESSION_SAMPLES || !distinct {
        return Ok(ReturnRegressor::mean(y));
    }

    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    let mut ranked: Vec<(usize, f64)> = Vec::new();
    let mut means = vec![0.0; dim];
    for j in 0..dim {
        let mx = x.iter().map(|r| r[j]).sum::<f64>() / nf;
        means[j] = mx;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (r, &t) in x.iter().zip(y) {
            let (dx, dy) = (r[j] - mx, t - y_mean);
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
        if sxx > 1e-12 * nf {
            let corr = if syy > 0.0 { (sxy / (sxx * syy).sqrt()).abs() } else { 0.0 };
            ranked.push((j, corr));
        }
    }
    if ranked.is_empty() {
        return Ok(ReturnRegressor::mean(y));
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(MAX_FEATURES);
    let mut features: Vec<usize> = ranked.into_iter().map(|(j, _)| j).collect();
    features.sort_unstable();

    let p = features.len();
    let design = DMatrix::from_fn(n, p, |i, k| x[i][features[k]] - means[features[k]]);
    let target = DVector::from_iterator(n, y.iter().map(|t| t - y_mean));
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * target;
    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => {
            let ridge = 1e-8 * (gram.trace() / p as f64).max(1e-12);
            let reg = gram + DMatrix::identity(p, p) * ridge;
            reg.cholesky()
                .ok_or_else(|| ReplayError::Regression("ridge solve failed".into()))?
                .solve(&rhs)
        }
    };
    let coef: Vec<f64> = beta.iter().copied().collect();
    if !coef.iter().all(|c| c.is_finite()) {
        return Ok(ReturnRegressor::mean(y));
    }
    let intercept = y_mean - features.iter().zip(&coef).map(|(&j, c)| c * means[j]).sum::<f64>();
    Ok(ReturnRegressor { features, coef, intercept, fallback: false })
}

/// Per-transition weights `exp(c_i / alpha) / sum_j T_j exp(c_j / alpha)`
/// for trajectories of length `T_i` and corrected return `c_i`, evaluated with
/// the exponent shifted by its maximum.
pub fn hr_weights(lengths: &[usize], corrected: &[f64], alpha: f64) -> Result<Vec<f64>, ReplayError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(ReplayError::Alpha(alpha));
    }
    if lengths.is_empty() || lengths.len() != corrected.len() {
        return Err(ReplayError::Empty);
    }
    if lengths.contains(&0) || !corrected.iter().all(|c| c.is_finite()) {
        return Err(ReplayError::Malformed("zero-length trajectory or non-finite return".into()));
    }
    let logits: Vec<f64> = corrected.iter().map(|c| c / alpha).collect();
    let shift = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - shift).exp()).collect();
    let z: f64 = lengths.iter().zip(&e).map(|(&t, v)| t as f64 * v).sum();
    Ok(e.into_iter().map(|v| v / z).collect())
}

/// Shannon entropy (nats) of the transition distribution implied by
/// per-trajectory weights.
pub fn weight_entropy(lengths: &[usize], weights: &[f64]) -> f64 {
    lengths
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&t, &w)| -(t as f64) * w * w.ln())
        .sum()
}

/// Indices of the `ceil(k * N)` highest returns, ties going to the newer
/// (higher-index) entry. Output is ordered best first.
pub fn topk_filter(returns: &[f64], k: f64) -> Result<Vec<usize>, ReplayError> {
    if returns.is_empty() {
        return Err(ReplayError::Empty);
    }
    if !(k > 0.0 && k <= 1.0) {
        return Err(ReplayError::Malformed(format!("top-k fraction must be in (0, 1], got {k}")));
    }
    let keep = ((k * returns.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut idx: Vec<usize> = (0..returns.len()).collect();
    idx.sort_by(|&a, &b| returns[b].total_cmp(&returns[a]).then(b.cmp(&a)));
    idx.truncate(keep);
    Ok(idx)
}
