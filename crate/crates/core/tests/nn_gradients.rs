mod common;

use common::*;
use hg2p::nn::{Matrix, Mlp, OutputActivation};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn param_and_input_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for case in 0..100 {
        let net = random_net(&mut rng);
        let x = random_vec(&mut rng, net.input_dim(), 1.5);
        let up = random_vec(&mut rng, net.output_dim(), 1.0);

        let analytic = net.grad_params(&x, &up).unwrap();
        let numeric = fd_grad_params(&net, &x, &up);
        let e = rel_err(&analytic, &numeric);
        assert!(e < 1e-4, "case {case}: param gradient rel err {e}");

        let jac = net.grad_input(&x).unwrap();
        let numeric = fd_jacobian(&net, &x);
        let e = rel_err(jac.as_slice(), &numeric);
        assert!(e < 1e-4, "case {case}: jacobian rel err {e}");
    }
}

#[test]
fn input_gradient_penalty_pulls_back_to_weights() {
    // P(theta) = sum_b c_b . dQ/dx(x_b; theta); check dP/dtheta by differences.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..40 {
        let sizes = [4, rand::Rng::random_range(&mut rng, 3..9), rand::Rng::random_range(&mut rng, 3..9), 1];
        let net = Mlp::new(&sizes, OutputActivation::Identity, &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, 4, 2.0)).collect();
        let x = Matrix::from_rows(&rows);
        let cot = Matrix::from_rows(&(0..3).map(|_| random_vec(&mut rng, 4, 1.0)).collect::<Vec<_>>());
        let ones = Matrix::filled(3, 1, 1.0);

        let penalty = |n: &Mlp| -> f64 {
            let cache = n.forward_cached(&x).unwrap();
            let tape = n.input_grad_tape(&cache, &ones).unwrap();
            tape.input_grads.as_slice().iter().zip(cot.as_slice()).map(|(a, b)| a * b).sum()
        };

        let cache = net.forward_cached(&x).unwrap();
        let tape = net.input_grad_tape(&cache, &ones).unwrap();
        let analytic = tape.param_vjp(&net, &cot).unwrap();

        let mut probe = net.clone();
        let mut numeric = vec![0.0; analytic.len()];
        for i in 0..analytic.len() {
            let orig = net.params()[i];
            probe.params_mut()[i] = orig + FD_STEP;
            let plus = penalty(&probe);
            probe.params_mut()[i] = orig - FD_STEP;
            let minus = penalty(&probe);
            probe.params_mut()[i] = orig;
            numeric[i] = (plus - minus) / (2.0 * FD_STEP);
        }
        let e = rel_err(&analytic, &numeric);
        assert!(e < 1e-4, "case {case}: vjp rel err {e}");
    }
}

#[test]
fn tape_input_gradients_agree_with_backward() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let net = Mlp::new(&[5, 16, 16, 1], OutputActivation::Identity, &mut rng).unwrap();
    let x = Matrix::from_rows(&(0..8).map(|_| random_vec(&mut rng, 5, 1.0)).collect::<Vec<_>>());
    let cache = net.forward_cached(&x).unwrap();
    let ones = Matrix::filled(8, 1, 1.0);
    let g = net.backward(&cache, &ones).unwrap();
    let tape = net.input_grad_tape(&cache, &ones).unwrap();
    assert_eq!(g.input, tape.input_grads);
}

#[test]
fn forward_is_bitwise_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let net = Mlp::new(&[6, 32, 32, 2], OutputActivation::ScaledTanh { bound: 6.0 }, &mut rng).unwrap();
    let x = random_vec(&mut rng, 6, 5.0);
    let a = net.forward(&x).unwrap();
    let b = net.clone().forward(&x).unwrap();
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn tanh_policy_jacobian_is_finite_over_a_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let net = Mlp::new(&[2, 32, 32, 2], OutputActivation::ScaledTanh { bound: 6.0 }, &mut rng).unwrap();
    let mut prev: Option<f64> = None;
    for i in 0..=200 {
        let x = [-10.0 + 0.1 * i as f64, 3.0];
        let norm = net.grad_input(&x).unwrap().frobenius_norm();
        assert!(norm.is_finite());
        if let Some(p) = prev {
            // Jacobian norms of a ReLU net jump only at kinks; bounded steps on a fine grid.
            assert!((norm - p).abs() < 5.0);
        }
        prev = Some(norm);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn checkpoint_round_trip_preserves_bits(seed in 0u64..10_000, hidden in 1usize..12, out in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::new(&[3, hidden, out], OutputActivation::Identity, &mut rng).unwrap();
        let back = Mlp::from_json(&net.to_json()).unwrap();
        prop_assert_eq!(back, net);
    }
}
