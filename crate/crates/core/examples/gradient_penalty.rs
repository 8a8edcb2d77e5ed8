//! Gradient-penalty bounds from a high-level policy Jacobian, and the penalty
//! on a low-level critic as the bounds tighten.
//!
//! cargo run --release --example gradient_penalty

use hg2p::agent::{gp_loss, mf_gp_bounds, GpBounds};
use hg2p::nn::{Matrix, Mlp, OutputActivation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // High level reads [x, y, vx, vy, gx, gy] and emits a 2-D subgoal.
    let pi_h = Mlp::new(&[6, 32, 32, 2], OutputActivation::ScaledTanh { bound: 6.0 }, &mut rng)?;
    let batch = Matrix::from_rows(&(0..64).map(|_| (0..6).map(|_| rng.random_range(0.0..12.0)).collect::<Vec<_>>()).collect::<Vec<_>>());
    for gamma in [0.9, 0.95, 0.99] {
        for eta in [0.0, 1.0] {
            let b = mf_gp_bounds(&pi_h, &batch, gamma, 4, &[0, 1], eta, 0)?;
            println!("gamma {gamma:4} eta {eta}: B_s {:10.3}  B_sg {:12.3}", b.b_s, b.b_sg);
        }
    }

    // Low-level critic reads [s (4), sg (2), a (2)].
    let critic = Mlp::new(&[8, 32, 32, 1], OutputActivation::Identity, &mut rng)?;
    let x = Matrix::from_rows(&(0..64).map(|_| (0..8).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<_>>()).collect::<Vec<_>>());
    for scale in [10.0, 1.0, 0.1, 0.01] {
        let b = GpBounds { b_s: scale, b_sg: scale, batch_size: 64, computed_at: 0 };
        let step = gp_loss(&critic, &x, 4, 2, &b, 1e-4)?;
        println!(
            "bounds {scale:6}: penalty {:.3e}, violating rows {:.2}, largest |dQ/ds| {:.3}",
            step.loss, step.violation_s, step.max_norm_s
        );
    }
    Ok(())
}
