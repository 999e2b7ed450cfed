use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Objective value after each Lloyd iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansTrace {
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    /// Nearest centroid; ties go to the lower index.
    pub fn assign(&self, v: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centroids.iter().enumerate() {
            let d = sq_dist(v, c);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    pub fn objective(&self, vectors: &[Vec<f64>]) -> f64 {
        vectors.iter().map(|v| sq_dist(v, &self.centroids[self.assign(v)])).sum()
    }
}

fn seed_plus_plus(vectors: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![vectors[rng.gen_range(0..vectors.len())].clone()];
    let mut dists: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dists.iter().sum();
        let mut target = rng.gen_range(0.0..total);
        let mut pick = dists.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (i, &d) in dists.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = vectors[pick].clone();
        for (d, v) in dists.iter_mut().zip(vectors) {
            *d = d.min(sq_dist(v, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm from k-means++ seeds.
pub fn kmeans(vectors: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<(ClusterModel, KmeansTrace)> {
    if k == 0 {
        return Err(Error::InvalidArgument("k-means needs k >= 1".into()));
    }
    let Some(first) = vectors.first() else {
        return Err(Error::Empty("k-means over no vectors".into()));
    };
    let dim = first.len();
    if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::shape("kmeans", "vectors must share a positive dimension"));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("k-means input".into()));
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for v in vectors {
        if !distinct.iter().any(|d| *d == v) {
            distinct.push(v);
            if distinct.len() >= k {
                break;
            }
        }
    }
    if distinct.len() < k {
        return Err(Error::InvalidArgument(format!(
            "k-means needs {k} distinct vectors, found {}",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ClusterModel {
        centroids: seed_plus_plus(vectors, k, &mut rng),
        seed,
    };
    let mut assignment: Vec<usize> = vec![usize::MAX; vectors.len()];
    let mut trace = KmeansTrace {
        objective: Vec::new(),
        iterations: 0,
        converged: false,
    };
    for _ in 0..max_iter {
        let next: Vec<usize> = vectors.iter().map(|v| model.assign(v)).collect();
        if next == assignment {
            trace.converged = true;
            break;
        }
        assignment = next;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &a) in vectors.iter().zip(&assignment) {
            counts[a] += 1;
            sums[a].iter_mut().zip(v).for_each(|(s, x)| *s += x);
        }
        for ((c, s), &n) in model.centroids.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                *c = s.into_iter().map(|x| x / n as f64).collect();
            }
        }
        trace.iterations += 1;
        trace.objective.push(
            vectors
                .iter()
                .zip(&assignment)
                .map(|(v, &a)| sq_dist(v, &model.centroids[a]))
                .sum(),
        );
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, proptest};

    fn random_vectors(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn single_cluster_is_mean() {
        let v = random_vectors(50, 4, 1);
        let (m, _) = kmeans(&v, 1, 0, 100).unwrap();
        for j in 0..4 {
            let mean = v.iter().map(|r| r[j]).sum::<f64>() / 50.0;
            assert!((m.centroids[0][j] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn two_distant_points() {
        let mut v = vec![vec![0.0, 0.0]; 10];
        v.extend(vec![vec![100.0, 50.0]; 10]);
        let (m, t) = kmeans(&v, 2, 7, 100).unwrap();
        let mut cs = m.centroids.clone();
        cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(cs, vec![vec![0.0, 0.0], vec![100.0, 50.0]]);
        assert!(t.converged);
        assert_eq!(*t.objective.last().unwrap(), 0.0);
    }

    #[test]
    fn too_few_distinct() {
        let v = vec![vec![1.0], vec![1.0], vec![2.0]];
        assert!(kmeans(&v, 3, 0, 10).is_err());
        assert!(kmeans(&v, 2, 0, 10).is_ok());
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let v = random_vectors(80, 3, 9);
        assert_eq!(kmeans(&v, 5, 3, 100).unwrap().0, kmeans(&v, 5, 3, 100).unwrap().0);
    }

    proptest! {
        #[test]
        fn objective_never_increases(seed in 0u64..200, k in 1usize..6) {
            let v = random_vectors(60, 3, seed);
            let (m, t) = kmeans(&v, k, seed, 100).unwrap();
            prop_assert!(t.objective.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(m.centroids.iter().flatten().all(|x| x.is_finite()));
        }
    }
}
