mod common;

use common::*;
use hg2p::agent::{
    adjacency_loss, aclg_high_loss, gp_loss, mf_gp_bounds, AdjacencyConfig, AdjacencyModel, Batch, GpBounds, Td3,
    Td3Config,
};
use hg2p::nn::{Matrix, Mlp, OutputActivation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rows(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Matrix {
    Matrix::from_rows(&(0..n).map(|_| random_vec(rng, d, scale)).collect::<Vec<_>>())
}

/// Contrastive loss evaluated straight from the definition.
fn adjacency_oracle(net: &Mlp, scale: f64, a: &Matrix, b: &Matrix, labels: &[f64], zeta: f64, delta: f64) -> f64 {
    let mut total = 0.0;
    for r in 0..labels.len() {
        let xa: Vec<f64> = a.row(r).iter().map(|v| v / scale).collect();
        let xb: Vec<f64> = b.row(r).iter().map(|v| v / scale).collect();
        let (ea, eb) = (net.forward(&xa).unwrap(), net.forward(&xb).unwrap());
        let d = ea.iter().zip(&eb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let l = labels[r];
        total += l * (d - zeta).max(0.0) + (1.0 - l) * (zeta + delta - d).max(0.0);
    }
    total / labels.len() as f64
}

#[test]
fn adjacency_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut checked = 0;
    for case in 0..30 {
        let cfg = AdjacencyConfig { hidden: vec![6, 6], embed_dim: 3, zeta: 0.3, delta: 0.2, ..AdjacencyConfig::default() };
        let model = AdjacencyModel::new(2, cfg.clone(), &mut rng).unwrap();
        let a = rows(&mut rng, 6, 2, 12.0);
        let b = rows(&mut rng, 6, 2, 12.0);
        let labels: Vec<f64> = (0..6).map(|i| (i % 2) as f64).collect();
        let (loss, grads) = model.loss_and_grads(&a, &b, &labels).unwrap();
        let oracle = adjacency_oracle(&model.net, cfg.input_scale, &a, &b, &labels, cfg.zeta, cfg.delta);
        assert!((loss - oracle).abs() < 1e-12, "case {case}");

        // Skip draws where some pair sits within a hair of a hinge.
        let mut probe = model.net.clone();
        let mut numeric = vec![0.0; grads.len()];
        for i in 0..grads.len() {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + FD_STEP;
            let plus = adjacency_oracle(&probe, cfg.input_scale, &a, &b, &labels, cfg.zeta, cfg.delta);
            probe.params_mut()[i] = orig - FD_STEP;
            let minus = adjacency_oracle(&probe, cfg.input_scale, &a, &b, &labels, cfg.zeta, cfg.delta);
            probe.params_mut()[i] = orig;
            numeric[i] = (plus - minus) / (2.0 * FD_STEP);
        }
        if grads.iter().all(|g| *g == 0.0) {
            continue;
        }
        let e = rel_err(&grads, &numeric);
        assert!(e < 1e-4, "case {case}: rel err {e}");
        checked += 1;
    }
    assert!(checked >= 10, "too few informative cases: {checked}");
}

#[test]
fn adjacency_loss_vanishes_when_margins_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..100 {
        let n = rng.random_range(1..8);
        let ea = rows(&mut rng, n, 3, 1.0);
        let mut eb = Matrix::zeros(n, 3);
        let mut labels = Vec::new();
        for r in 0..n {
            // Adjacent pairs inside zeta, non-adjacent pairs beyond zeta + delta.
            let adjacent = rng.random_bool(0.5);
            let d = if adjacent { rng.random_range(0.0..1.0) } else { rng.random_range(1.2001..5.0) };
            let dir = random_vec(&mut rng, 3, 1.0);
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
            for c in 0..3 {
                eb.set(r, c, ea.get(r, c) + d * dir[c] / norm);
            }
            labels.push(if adjacent { 1.0 } else { 0.0 });
        }
        let l = adjacency_loss(&ea, &eb, &labels, 1.0, 0.2);
        assert_eq!(l.loss, 0.0);
        assert!(l.grad_a.as_slice().iter().all(|g| *g == 0.0));
    }
}

#[test]
fn landmark_term_drives_a_frozen_toy_actor_to_the_pseudo_landmark() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let actor = Mlp::new(&[4, 16, 2], OutputActivation::ScaledTanh { bound: 6.0 }, &mut rng).unwrap();
    // Zero critics: the actor objective reduces to the landmark term.
    let critic = Mlp::zeros(&[6, 1], OutputActivation::Identity).unwrap();
    let cfg = Td3Config { actor_lr: 1e-2, ..Td3Config::default() };
    let mut td3 = Td3::from_nets(actor, [critic.clone(), critic], vec![6.0, 6.0], 6.0, cfg);
    let adj = AdjacencyModel::new(2, AdjacencyConfig::default(), &mut rng).unwrap();
    let input = Matrix::from_rows(&[[1.0, 6.0, 0.0, 0.0]]);
    let phi_s = Matrix::from_rows(&[[1.0, 6.0]]);
    let target = Matrix::from_rows(&[[8.5, 2.0]]);
    for _ in 0..2000 {
        td3.actor_step(&input, |a| aclg_high_loss(&adj, &phi_s, a, Some(&target), 0.0, 1.0)).unwrap();
    }
    let out = td3.act(input.row(0)).unwrap();
    assert!((out[0] - 8.5).abs() < 1e-2 && (out[1] - 2.0).abs() < 1e-2, "{out:?}");
}

#[test]
fn twin_target_never_exceeds_either_single_critic_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..50 {
        let cfg = Td3Config { policy_noise: 0.0, hidden: vec![8, 8], ..Td3Config::default() };
        let td3 = Td3::new(3, vec![0.0, 0.0], 1.0, cfg.clone(), &mut rng).unwrap();
        let n = 16;
        let batch = Batch {
            input: rows(&mut rng, n, 3, 2.0),
            action: rows(&mut rng, n, 2, 1.0),
            reward: random_vec(&mut rng, n, 3.0),
            next_input: rows(&mut rng, n, 3, 2.0),
            not_done: (0..n).map(|i| (i % 3 != 0) as u8 as f64).collect(),
        };
        let y = td3.td_targets(&batch, &mut rng).unwrap();
        for i in 0..n {
            let s2 = batch.next_input.row(i);
            let a2 = td3.actor_target.forward(s2).unwrap();
            let x: Vec<f64> = s2.iter().chain(&a2).copied().collect();
            for k in 0..2 {
                let q = td3.critic_targets[k].forward(&x).unwrap()[0];
                let single = batch.reward[i] + cfg.gamma * batch.not_done[i] * q;
                assert!(y[i] <= single + 1e-12);
            }
        }
    }
}

/// Input-gradient norms of a scalar critic by central differences.
fn fd_norms(critic: &Mlp, x: &[f64], n_s: usize, n_sg: usize) -> (f64, f64) {
    let jac = fd_jacobian(critic, x);
    let ns = jac[..n_s].iter().map(|v| v * v).sum::<f64>().sqrt();
    let nsg = jac[n_s..n_s + n_sg].iter().map(|v| v * v).sum::<f64>().sqrt();
    (ns, nsg)
}

#[test]
fn penalty_is_zero_under_the_bounds_and_matches_the_definition_above() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for case in 0..100 {
        let h = rng.random_range(3..10);
        let critic = Mlp::new(&[8, h, h, 1], OutputActivation::Identity, &mut rng).unwrap();
        let n = rng.random_range(1..10);
        let x = rows(&mut rng, n, 8, 3.0);
        let norms: Vec<(f64, f64)> = (0..n).map(|r| fd_norms(&critic, x.row(r), 4, 2)).collect();
        let max_s = norms.iter().map(|p| p.0).fold(0.0, f64::max);
        let max_sg = norms.iter().map(|p| p.1).fold(0.0, f64::max);
        let lambda = rng.random_range(1e-4..2.0);

        let above = GpBounds { b_s: max_s * 1.01 + 1e-6, b_sg: max_sg * 1.01 + 1e-6, batch_size: n, computed_at: 0 };
        let step = gp_loss(&critic, &x, 4, 2, &above, lambda).unwrap();
        assert_eq!(step.loss, 0.0, "case {case}");
        assert!(step.grads.iter().all(|g| *g == 0.0));

        let below = GpBounds { b_s: 0.5 * max_s, b_sg: 0.5 * max_sg, batch_size: n, computed_at: 0 };
        let step = gp_loss(&critic, &x, 4, 2, &below, lambda).unwrap();
        let expect = lambda
            * norms.iter().map(|(s, g)| (s - below.b_s).max(0.0).powi(2) + (g - below.b_sg).max(0.0).powi(2)).sum::<f64>()
            / n as f64;
        assert!((step.loss - expect).abs() <= 1e-6 * expect.max(1e-12), "case {case}: {} vs {expect}", step.loss);
    }
}

#[test]
fn both_bounds_grow_with_the_discount() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    for _ in 0..20 {
        let pi = Mlp::new(&[6, 16, 16, 2], OutputActivation::ScaledTanh { bound: 6.0 }, &mut rng).unwrap();
        let x = rows(&mut rng, 32, 6, 6.0);
        for eta in [0.0, 1.0] {
            let lo = mf_gp_bounds(&pi, &x, 0.9, 4, &[0, 1], eta, 0).unwrap();
            let hi = mf_gp_bounds(&pi, &x, 0.99, 4, &[0, 1], eta, 0).unwrap();
            assert!(hi.b_sg > lo.b_sg);
            if lo.b_s > eta * 2f64.sqrt() {
                assert!(hi.b_s > lo.b_s);
            }
            assert!(lo.b_s >= eta * 2f64.sqrt() && lo.b_sg >= 2.0 / 0.1 - 1e-9);
        }
    }
}
