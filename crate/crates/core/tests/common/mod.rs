//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls into the code paths it is used to check: gradients come
//! from central differences of `forward`, shortest paths from exhaustive path
//! enumeration, FPS optima from exhaustive subset search, and HR weights from a
//! naive (unshifted) evaluation of the Boltzmann formula.

#![allow(dead_code)]

use hg2p::nn::{Mlp, OutputActivation};
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

pub fn random_net<R: Rng>(rng: &mut R) -> Mlp {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![rng.random_range(1..=6)];
    for _ in 0..depth {
        sizes.push(rng.random_range(2..=8));
    }
    *sizes.last_mut().unwrap() = rng.random_range(1..=3);
    let output = if rng.random_bool(0.5) {
        OutputActivation::Identity
    } else {
        OutputActivation::ScaledTanh { bound: rng.random_range(0.5..3.0) }
    };
    Mlp::new(&sizes, output, rng).unwrap()
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central differences of `upstream . f(x)` with respect to each parameter.
pub fn fd_grad_params(net: &Mlp, x: &[f64], upstream: &[f64]) -> Vec<f64> {
    let mut probe = net.clone();
    let n = net.params().len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let orig = net.params()[i];
        probe.params_mut()[i] = orig + FD_STEP;
        let plus = dot(&probe.forward(x).unwrap(), upstream);
        probe.params_mut()[i] = orig - FD_STEP;
        let minus = dot(&probe.forward(x).unwrap(), upstream);
        probe.params_mut()[i] = orig;
        out[i] = (plus - minus) / (2.0 * FD_STEP);
    }
    out
}

/// Central-difference Jacobian, row-major `out x in`.
pub fn fd_jacobian(net: &Mlp, x: &[f64]) -> Vec<f64> {
    let (n_in, n_out) = (net.input_dim(), net.output_dim());
    let mut jac = vec![0.0; n_in * n_out];
    let mut xp = x.to_vec();
    for j in 0..n_in {
        xp[j] = x[j] + FD_STEP;
        let plus = net.forward(&xp).unwrap();
        xp[j] = x[j] - FD_STEP;
        let minus = net.forward(&xp).unwrap();
        xp[j] = x[j];
        for k in 0..n_out {
            jac[k * n_in + j] = (plus[k] - minus[k]) / (2.0 * FD_STEP);
        }
    }
    jac
}

/// Every simple path from `src` to `dst` in a dense weight matrix (`None` =
/// no edge); returns `(cost, path)` of the cheapest one.
pub fn brute_force_shortest(weights: &[Vec<Option<f64>>], src: usize, dst: usize) -> Option<(f64, Vec<usize>)> {
    fn walk(
        w: &[Vec<Option<f64>>],
        node: usize,
        dst: usize,
        cost: f64,
        path: &mut Vec<usize>,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if node == dst {
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                *best = Some((cost, path.clone()));
            }
            return;
        }
        for next in 0..w.len() {
            if let Some(c) = w[node][next] {
                if !path.contains(&next) {
                    path.push(next);
                    walk(w, next, dst, cost + c, path, best);
                    path.pop();
                }
            }
        }
    }
    assert_ne!(src, dst, "source and destination must differ");
    let mut best = None;
    walk(weights, src, dst, 0.0, &mut vec![src], &mut best);
    best
}

/// Exhaustive best max-min pairwise distance over all `m`-subsets.
pub fn brute_force_max_min(points: &[Vec<f64>], m: usize) -> f64 {
    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }
    let n = points.len();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != m {
            continue;
        }
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut min_d = f64::INFINITY;
        for a in 0..idx.len() {
            for b in a + 1..idx.len() {
                min_d = min_d.min(dist(&points[idx[a]], &points[idx[b]]));
            }
        }
        best = best.max(min_d);
    }
    best
}

pub fn min_pairwise(points: &[Vec<f64>]) -> f64 {
    let mut min_d = f64::INFINITY;
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            let d = points[a].iter().zip(&points[b]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            min_d = min_d.min(d);
        }
    }
    min_d
}

/// Direct evaluation of the normalized Boltzmann transition weight, with no
/// max-shift: `exp(c_i / alpha) / sum_j T_j exp(c_j / alpha)`.
pub fn naive_hr_weights(lengths: &[usize], corrected: &[f64], alpha: f64) -> Vec<f64> {
    let z: f64 = lengths.iter().zip(corrected).map(|(&t, &c)| t as f64 * (c / alpha).exp()).sum();
    corrected.iter().map(|&c| (c / alpha).exp() / z).collect()
}
