//! Landmark selection: farthest point sampling over a state pool for
//! coverage, plus the states a random-network-distillation scorer finds most
//! novel after training on one corner of the arena.
//!
//! cargo run --release --example landmarks

use hg2p::graph::{select_landmarks, LandmarkKind, NoveltyScorer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pool: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.random_range(0.0..12.0), rng.random_range(0.0..12.0), 0.0, 0.0]).collect();

    let mut scorer = NoveltyScorer::new(2, &[64, 64], 16, 1e-3, 12.0, &mut rng)?;
    let visited: Vec<Vec<f64>> = (0..128).map(|_| vec![rng.random_range(0.0..4.0), rng.random_range(0.0..4.0)]).collect();
    for _ in 0..300 {
        scorer.train(&visited)?;
    }
    let candidates: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random_range(0.0..12.0), rng.random_range(0.0..12.0), 0.0, 0.0]).collect();
    let scores = scorer.scores(&candidates.iter().map(|c| c[..2].to_vec()).collect::<Vec<_>>())?;

    let set = select_landmarks(&pool, 12, &candidates, &scores, 6, |s| s[..2].to_vec(), &mut rng);
    for kind in [LandmarkKind::Coverage, LandmarkKind::Novelty] {
        println!("{kind:?} ({}):", set.count(kind));
        for (p, k) in set.points.iter().zip(&set.kinds) {
            if *k == kind {
                println!("  ({:5.2}, {:5.2})", p[0], p[1]);
            }
        }
    }
    let near = scorer.scores(&visited[..16])?.iter().sum::<f64>() / 16.0;
    println!("mean novelty on the visited corner {near:.2e}, top candidate {:.2e}", scores.iter().cloned().fold(0.0, f64::max));
    Ok(())
}
