//! High-return weighting on a toy buffer: per-trajectory weights, weight
//! entropy, and pool composition as the temperature changes.
//!
//! cargo run --release --example hr_weights

use hg2p::replay::{weight_entropy, EpisodeBuffer, SamplerKind, Transition};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn episode(len: usize, heading: f64, reward: f64) -> Vec<Transition> {
    let at = |t: usize| vec![2.0 + 0.3 * t as f64 * heading.cos(), 2.0 + 0.3 * t as f64 * heading.sin(), 0.0, 0.0];
    (0..len)
        .map(|t| Transition {
            obs: at(t),
            action: vec![0.0; 2],
            reward,
            next_obs: at(t + 1),
            subgoal: vec![0.0; 2],
            next_subgoal: vec![0.0; 2],
            goal: vec![10.0, 10.0],
            done: t + 1 == len,
            step: t,
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut buf = EpisodeBuffer::new(10_000, 0.75);
    // Same start and goal; only the return differs.
    for (k, reward) in [-1.0, -0.8, -0.5, -0.9, -0.2].iter().enumerate() {
        buf.store_episode(episode(20, k as f64 * 0.3, *reward))?;
    }
    let lengths: Vec<usize> = buf.records().map(|r| r.length).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for alpha in [0.01, 0.1, 1.0, 10.0] {
        buf.recompute_weights(alpha)?;
        let w: Vec<f64> = buf.records().map(|r| r.weight * r.length as f64).collect();
        let entropy = weight_entropy(&lengths, &buf.records().map(|r| r.weight).collect::<Vec<_>>());
        let mut counts = vec![0; buf.num_trajectories()];
        for (slot, _) in buf.sample_pool(SamplerKind::Hr, 2000, alpha, 0.2, &mut rng)? {
            counts[slot] += 1;
        }
        println!("alpha {alpha:5}: trajectory mass {:.3?}  entropy {entropy:.3}  pool counts {counts:?}", w);
    }
    let r = buf.records().last().unwrap();
    println!("best trajectory: return {}, normalized {:.2}, expected {:.2}", r.episodic_return, r.normalized_return, r.expected_return);
    Ok(())
}
