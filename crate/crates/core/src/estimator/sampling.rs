use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::vector;

/// Sorted, distinct component indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinibatchSample {
    pub indices: Vec<usize>,
}

impl MinibatchSample {
    /// Validates and sorts an explicit index set.
    pub fn new(mut indices: Vec<usize>, n: usize) -> crate::Result<Self> {
        indices.sort_unstable();
        if indices.is_empty() || indices.windows(2).any(|w| w[0] == w[1]) || indices.iter().any(|&i| i >= n) {
            return Err(crate::Error::invalid(format!("minibatch {indices:?} is not a distinct subset of 0..{n}")));
        }
        Ok(Self { indices })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// Persistent permutation of `0..n`; each draw is a partial Fisher–Yates
/// shuffle of its first `b` slots, giving a uniform `b`-subset in `O(b)`.
#[derive(Debug, Clone)]
pub struct IndexPool {
    perm: Vec<usize>,
}

impl IndexPool {
    pub fn new(n: usize) -> Self {
        Self { perm: (0..n).collect() }
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    pub fn sample<R: Rng>(&mut self, b: usize, rng: &mut R) -> MinibatchSample {
        let n = self.perm.len();
        assert!(b <= n, "minibatch {b} larger than pool {n}");
        for k in 0..b {
            let j = rng.random_range(k..n);
            self.perm.swap(k, j);
        }
        let mut indices = self.perm[..b].to_vec();
        indices.sort_unstable();
        MinibatchSample { indices }
    }
}

/// Uniform draw from the Euclidean ball of radius `r` in `d` dimensions:
/// Gaussian direction times `r · U^{1/d}`.
pub fn sample_ball<R: Rng>(d: usize, r: f64, rng: &mut R) -> Vec<f64> {
    if r == 0.0 || d == 0 {
        return vec![0.0; d];
    }
    let mut dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = vector::norm(&dir);
    if norm == 0.0 {
        return vec![0.0; d];
    }
    let u: f64 = rng.random();
    let radius = r * u.powf(1.0 / d as f64);
    vector::scale(radius / norm, &mut dir);
    // Guard the support against rounding in the rescale.
    let got = vector::norm(&dir);
    if got > r {
        vector::scale(r / got, &mut dir);
    }
    dir
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_radius_is_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_ball(4, 0.0, &mut rng), vec![0.0; 4]);
    }

    #[test]
    fn ball_support_and_second_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let xi = sample_ball(3, 1.0, &mut rng);
            let s = vector::norm_sq(&xi);
            assert!(s <= 1.0);
            acc += s;
        }
        // E‖ξ‖² = d/(d+2) for the uniform unit ball.
        let mean = acc / draws as f64;
        assert!((mean - 0.6).abs() <= 0.002, "{mean}");
    }

    #[test]
    fn ball_is_reproducible() {
        let a = sample_ball(5, 0.3, &mut ChaCha8Rng::seed_from_u64(4));
        let b = sample_ball(5, 0.3, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }

    #[test]
    fn pool_draws_distinct_sorted_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pool = IndexPool::new(20);
        for _ in 0..200 {
            let s = pool.sample(7, &mut rng);
            assert_eq!(s.len(), 7);
            assert!(s.indices.windows(2).all(|w| w[0] < w[1]));
            assert!(s.indices.iter().all(|&i| i < 20));
        }
        assert_eq!(pool.sample(20, &mut rng).indices, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn pool_is_uniform_over_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pool = IndexPool::new(10);
        let mut hits = [0usize; 10];
        let rounds = 50_000;
        for _ in 0..rounds {
            for i in pool.sample(3, &mut rng).indices {
                hits[i] += 1;
            }
        }
        // each index appears with probability 3/10
        let expect = rounds as f64 * 0.3;
        let sd = (rounds as f64 * 0.3 * 0.7).sqrt();
        for h in hits {
            assert!((h as f64 - expect).abs() < 5.0 * sd, "{hits:?}");
        }
    }

    #[test]
    fn explicit_minibatch_validation() {
        assert!(MinibatchSample::new(vec![2, 0], 3).is_ok());
        assert!(MinibatchSample::new(vec![1, 1], 3).is_err());
        assert!(MinibatchSample::new(vec![3], 3).is_err());
        assert!(MinibatchSample::new(vec![], 3).is_err());
    }
}
