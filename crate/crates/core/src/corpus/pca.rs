use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean-centered projection onto the leading principal axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// `k` orthonormal rows of length `dim`.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl PcaProjection {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::shape(
                "pca project",
                format!("expected {} values, got {}", self.dim(), x.len()),
            ));
        }
        Ok(self
            .components
            .iter()
            .map(|row| row.iter().zip(x).zip(&self.mean).map(|((p, xi), m)| p * (xi - m)).sum())
            .collect())
    }

    pub fn reconstruct(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.k() {
            return Err(Error::shape(
                "pca reconstruct",
                format!("expected {} values, got {}", self.k(), y.len()),
            ));
        }
        let mut out = self.mean.clone();
        for (row, &c) in self.components.iter().zip(y) {
            out.iter_mut().zip(row).for_each(|(o, p)| *o += c * p);
        }
        Ok(out)
    }
}

/// Fits the top-`k` eigenvectors of the sample covariance of `rows`.
pub fn fit_pca(rows: &[Vec<f64>], k: usize) -> Result<PcaProjection> {
    let n = rows.len();
    if k == 0 {
        return Err(Error::InvalidArgument("pca needs k >= 1".into()));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!("pca needs at least k = {k} rows, got {n}")));
    }
    let d = rows[0].len();
    if d < k {
        return Err(Error::InvalidArgument(format!("pca k = {k} exceeds dimension {d}")));
    }
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::shape("pca", "rows have differing lengths"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pca input".into()));
    }

    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let cov = (centered.transpose() * &centered) / denom;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &j in order.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(eig.eigenvalues[j].max(0.0));
    }
    Ok(PcaProjection {
        mean,
        components,
        explained_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn orthonormal_rows_and_sorted_variances() {
        let rows = random_rows(200, 100, 1);
        let p = fit_pca(&rows, 64).unwrap();
        for i in 0..64 {
            for j in 0..64 {
                let dot: f64 = p.components[i].iter().zip(&p.components[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-6, "({i},{j}) = {dot}");
            }
        }
        assert!(p.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn variances_match_svd_oracle() {
        let rows = random_rows(40, 8, 2);
        let p = fit_pca(&rows, 5).unwrap();
        let n = rows.len();
        let centered = DMatrix::from_fn(n, 8, |i, j| rows[i][j] - p.mean[j]);
        let mut sv: Vec<f64> = centered.svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        for (got, s) in p.explained_variance.iter().zip(sv) {
            assert!((got - s * s / (n - 1) as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn mean_projects_to_zero() {
        let rows = random_rows(30, 6, 3);
        let p = fit_pca(&rows, 3).unwrap();
        assert!(p.project(&p.mean).unwrap().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn rank_three_data_recovered_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let basis: Vec<Vec<f64>> = (0..3).map(|_| (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let rows: Vec<Vec<f64>> = (0..120)
            .map(|_| {
                let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
                (0..100).map(|j| 0.5 + (0..3).map(|b| c[b] * basis[b][j]).sum::<f64>()).collect()
            })
            .collect();
        let p = fit_pca(&rows, 64).unwrap();
        for r in &rows {
            let back = p.reconstruct(&p.project(r).unwrap()).unwrap();
            let err = back.iter().zip(r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "{err}");
        }
        let top = p.explained_variance[0];
        assert!(p.explained_variance[3..].iter().all(|v| *v < 1e-10 * top));
    }

    #[test]
    fn too_few_rows() {
        assert!(fit_pca(&random_rows(10, 100, 5), 64).is_err());
        assert!(fit_pca(&random_rows(10, 4, 5), 5).is_err());
    }
}
