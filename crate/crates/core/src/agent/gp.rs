//! Model-free gradient penalty on the low-level critic.
//!
//! Bounds on `|dQ/ds|` and `|dQ/dsg|` are derived from the high-level
//! policy's input Jacobian over a high-level minibatch; the penalty is the
//! squared excess of the critic's input-gradient norms over those bounds.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::nn::{Matrix, Mlp};

use super::AgentError;

/// Entries of the goal-selected policy Jacobian smaller than this in
/// magnitude are clamped before taking reciprocals.
pub const EPS_INV: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpBounds {
    pub b_s: f64,
    pub b_sg: f64,
    pub batch_size: usize,
    pub computed_at: u64,
}

/// Bounds from the high-level policy Jacobian.
///
/// `inputs` rows are high-level policy inputs whose first `n_s` columns are
/// the state; `goal_dims` lists the state components that `phi` selects.
/// `B_s = sqrt(n_s)/(1-gamma) * max|J_s| + eta*sqrt(n_sg)` and
/// `B_sg = sqrt(n_sg)/(1-gamma) * (sqrt(n_sg) + eta * max|1/phi(J_s)|)`.
pub fn mf_gp_bounds(
    pi_h: &Mlp,
    inputs: &Matrix,
    gamma: f64,
    n_s: usize,
    goal_dims: &[usize],
    eta: f64,
    computed_at: u64,
) -> Result<GpBounds, AgentError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(AgentError::Config(format!("gamma must be in [0, 1), got {gamma}")));
    }
    if inputs.rows() == 0 {
        return Err(AgentError::Config("empty high-level batch".into()));
    }
    let n_sg = goal_dims.len();
    let cache = pi_h.forward_cached(inputs)?;
    let (mut max_js, mut max_inv) = (0.0f64, 0.0f64);
    for r in 0..inputs.rows() {
        let jac = pi_h.jacobian_rows(&cache, r)?;
        let mut js = 0.0;
        let mut inv = 0.0;
        for o in 0..jac.rows() {
            for c in 0..n_s {
                let v = jac.get(o, c);
                js += v * v;
            }
            for &c in goal_dims {
                let v = jac.get(o, c).abs().max(EPS_INV);
                inv += 1.0 / (v * v);
            }
        }
        max_js = max_js.max(js.sqrt());
        max_inv = max_inv.max(inv.sqrt());
    }
    let scale = 1.0 / (1.0 - gamma);
    let root_sg = (n_sg as f64).sqrt();
    let b_s = (n_s as f64).sqrt() * scale * max_js + eta * root_sg;
    let b_sg = root_sg * scale * (root_sg + eta * max_inv);
    if !(b_s.is_finite() && b_sg.is_finite()) {
        return Err(AgentError::NonFinite(format!("gradient bounds ({b_s}, {b_sg})")));
    }
    Ok(GpBounds { b_s, b_sg, batch_size: inputs.rows(), computed_at })
}

/// Adds zero-mean Gaussian noise of the given variance to columns `cols`.
pub fn perturb<R: Rng + ?Sized>(x: &Matrix, cols: Range<usize>, variance: f64, rng: &mut R) -> Matrix {
    let mut out = x.clone();
    if variance <= 0.0 {
        return out;
    }
    let noise = Normal::new(0.0, variance.sqrt()).expect("positive variance");
    for r in 0..out.rows() {
        for v in &mut out.row_mut(r)[cols.clone()] {
            *v += noise.sample(rng);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpStep {
    pub loss: f64,
    pub grads: Vec<f64>,
    /// Fraction of rows with `|dQ/ds| > B_s`.
    pub violation_s: f64,
    pub max_norm_s: f64,
    pub max_norm_sg: f64,
}

/// `lambda * mean_b (relu(|dQ/ds| - B_s)^2 + relu(|dQ/dsg| - B_sg)^2)` and
/// its gradient with respect to the critic parameters. Columns of `x` are
/// `[s (n_s), sg (n_sg), action]`.
pub fn gp_loss(critic: &Mlp, x: &Matrix, n_s: usize, n_sg: usize, bounds: &GpBounds, lambda: f64) -> Result<GpStep, AgentError> {
    let b = x.rows();
    let cache = critic.forward_cached(x)?;
    let tape = critic.input_grad_tape(&cache, &Matrix::filled(b, 1, 1.0))?;
    let g = &tape.input_grads;
    let mut cot = Matrix::zeros(b, x.cols());
    let mut loss = 0.0;
    let mut violations = 0usize;
    let (mut max_s, mut max_sg) = (0.0f64, 0.0f64);
    for r in 0..b {
        let row = g.row(r);
        let ns = row[..n_s].iter().map(|v| v * v).sum::<f64>().sqrt();
        let nsg = row[n_s..n_s + n_sg].iter().map(|v| v * v).sum::<f64>().sqrt();
        max_s = max_s.max(ns);
        max_sg = max_sg.max(nsg);
        let ex_s = (ns - bounds.b_s).max(0.0);
        let ex_sg = (nsg - bounds.b_sg).max(0.0);
        if ex_s > 0.0 {
            violations += 1;
        }
        loss += ex_s * ex_s + ex_sg * ex_sg;
        let c = cot.row_mut(r);
        if ex_s > 0.0 {
            let k = lambda * 2.0 * ex_s / (ns * b as f64);
            for j in 0..n_s {
                c[j] = k * row[j];
            }
        }
        if ex_sg > 0.0 {
            let k = lambda * 2.0 * ex_sg / (nsg * b as f64);
            for j in n_s..n_s + n_sg {
                c[j] = k * row[j];
            }
        }
    }
    loss *= lambda / b as f64;
    let grads = if loss > 0.0 { tape.param_vjp(critic, &cot)? } else { vec![0.0; critic.params().len()] };
    Ok(GpStep { loss, grads, violation_s: violations as f64 / b as f64, max_norm_s: max_s, max_norm_sg: max_sg })
}
