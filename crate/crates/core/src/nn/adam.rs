use serde::{Deserialize, Serialize};

use super::{Mlp, NnError};

/// Adam moment estimates for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self::with_betas(num_params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(num_params: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, step: 0, m: vec![0.0; num_params], v: vec![0.0; num_params] }
    }

    pub fn for_net(net: &Mlp, lr: f64) -> Self {
        Self::new(net.params().len(), lr)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// One bias-corrected Adam update. Non-finite gradients are rejected before
    /// any state is touched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() {
            return Err(NnError::Shape { expected: self.m.len(), got: params.len() });
        }
        if grads.len() != self.m.len() {
            return Err(NnError::Shape { expected: self.m.len(), got: grads.len() });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFinite(format!("gradient entry {i} is {}", grads[i])));
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }

    /// Applies `grads` to the parameters of `net`.
    pub fn apply(&mut self, net: &mut Mlp, grads: &[f64]) -> Result<(), NnError> {
        self.step(net.params_mut(), grads)
    }
}

/// `target <- tau * online + (1 - tau) * target`.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<(), NnError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(NnError::InvalidTau(tau));
    }
    if target.layer_sizes() != online.layer_sizes() {
        return Err(NnError::Shape { expected: target.params().len(), got: online.params().len() });
    }
    for (t, &o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = tau * o + (1.0 - tau) * *t;
    }
    Ok(())
}
