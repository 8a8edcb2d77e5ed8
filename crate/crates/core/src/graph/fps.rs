//! Greedy farthest point sampling.

use rand::Rng;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy max-min selection of up to `m` indices starting from `first`.
///
/// Each step takes the point farthest from the chosen set, breaking ties by
/// lowest index. Selection stops early once every remaining point duplicates
/// a chosen one, so the result never contains duplicates and is the whole
/// (deduplicated) pool when `m` exceeds its distinct size.
pub fn fps_from(points: &[Vec<f64>], m: usize, first: usize) -> Vec<usize> {
    if points.is_empty() || m == 0 {
        return Vec::new();
    }
    assert!(first < points.len(), "seed index out of range");
    let mut chosen = vec![first];
    let mut min_d: Vec<f64> = points.iter().map(|p| dist2(p, &points[first])).collect();
    while chosen.len() < m {
        let mut best = 0;
        for (i, &d) in min_d.iter().enumerate() {
            if d > min_d[best] {
                best = i;
            }
        }
        if min_d[best] <= 1e-18 {
            break;
        }
        chosen.push(best);
        for (i, p) in points.iter().enumerate() {
            let d = dist2(p, &points[best]);
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    chosen
}

/// [`fps_from`] with a uniformly random seed point.
pub fn fps<R: Rng + ?Sized>(points: &[Vec<f64>], m: usize, rng: &mut R) -> Vec<usize> {
    if points.is_empty() {
        return Vec::new();
    }
    let first = rng.random_range(0..points.len());
    fps_from(points, m, first)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn single_pick_is_the_seed() {
        let pts = line(&[4.0, 1.0, 9.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pick = fps(&pts, 1, &mut rng);
        let mut again = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(pick, vec![again.random_range(0..3)]);
    }

    #[test]
    fn collinear_pool_picks_the_far_end() {
        assert_eq!(fps_from(&line(&[0.0, 1.0, 10.0]), 2, 0), vec![0, 2]);
        assert_eq!(fps_from(&line(&[0.0, 1.0, 10.0]), 3, 0), vec![0, 2, 1]);
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        assert_eq!(fps_from(&line(&[0.0, -2.0, 2.0]), 2, 0), vec![0, 1]);
    }

    #[test]
    fn oversized_request_returns_deduplicated_pool() {
        let pts = line(&[1.0, 1.0, 3.0, 3.0, 5.0]);
        let mut pick = fps_from(&pts, 10, 0);
        pick.sort_unstable();
        assert_eq!(pick, vec![0, 2, 4]);
    }
}
