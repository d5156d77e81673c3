use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UneError};
use crate::latent_store::LatentMatrix;
use crate::linalg::{center_columns, fix_row_signs, subtract_row, ThinSvd};

/// Principal-component model: `components` is `k x d` with orthonormal rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    pub components: DMatrix<f64>,
    /// Sample-covariance eigenvalues (`n - 1` denominator), non-increasing.
    pub explained_variance: DVector<f64>,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    /// `(x - mean) * componentsᵀ`, shape `n x k`.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(UneError::Shape(format!(
                "PCA expects {} columns, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        Ok(subtract_row(x, &self.mean) * self.components.transpose())
    }

    /// Maps scores back to the input space.
    pub fn inverse_transform(&self, scores: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if scores.ncols() != self.k() {
            return Err(UneError::Shape(format!(
                "PCA expects {} score columns, got {}",
                self.k(),
                scores.ncols()
            )));
        }
        let mut out = scores * &self.components;
        for (mut col, mu) in out.column_iter_mut().zip(self.mean.iter()) {
            col.add_scalar_mut(*mu);
        }
        Ok(out)
    }
}

/// Default PCA width: 500 components for very wide latents, 310 otherwise,
/// clamped to what the data supports.
pub fn default_pca_k(n: usize, d: usize) -> usize {
    let target = if d > 4096 { 500 } else { 310 };
    target.min(d).min(n.saturating_sub(1))
}

pub fn fit_pca(m: &LatentMatrix, k: usize) -> Result<PcaModel> {
    fit_pca_matrix(m.data(), k)
}

pub fn fit_pca_matrix(x: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = x.shape();
    let max_k = d.min(n.saturating_sub(1));
    if k == 0 || k > max_k {
        return Err(UneError::Rank {
            requested: k,
            attained: max_k,
        });
    }
    let (centered, mean) = center_columns(x);
    Ok(from_svd(&ThinSvd::new(&centered), mean, k, n))
}

/// Components whose singular value is below this fraction of the largest are
/// treated as numerically null by [`fit_pca_capped`]. f32 storage alone leaves
/// rank-deficient data with spurious directions around 1e-7 of the top one.
pub const PCA_RANK_TOL: f64 = 1e-5;

/// Like [`fit_pca_matrix`], but keeps at most `max_k` components and never
/// more than the numerical rank of the centered data.
pub fn fit_pca_capped(x: &DMatrix<f64>, max_k: usize) -> Result<PcaModel> {
    let n = x.nrows();
    let (centered, mean) = center_columns(x);
    let svd = ThinSvd::new(&centered);
    let k = max_k.min(svd.rank(PCA_RANK_TOL));
    if k == 0 {
        return Err(UneError::Rank {
            requested: max_k,
            attained: 0,
        });
    }
    Ok(from_svd(&svd, mean, k, n))
}

fn from_svd(svd: &ThinSvd, mean: DVector<f64>, k: usize, n: usize) -> PcaModel {
    let mut components = svd.v_t.rows(0, k).into_owned();
    fix_row_signs(&mut components);
    let denom = (n - 1) as f64;
    let explained_variance =
        DVector::from_iterator(k, svd.singular_values.iter().take(k).map(|s| s * s / denom));
    PcaModel {
        mean,
        components,
        explained_variance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, j| rng.sample::<f64, _>(StandardNormal) * (1.0 + j as f64 * 0.1))
    }

    #[test]
    fn capped_fit_stops_at_numerical_rank() {
        let basis = random(3, 10, 4);
        let coef = random(50, 3, 5);
        // round through f32 the way LAT1 storage does
        let x = (coef * basis).map(|v| v as f32 as f64);
        assert_eq!(fit_pca_capped(&x, 8).unwrap().k(), 3);
        assert_eq!(fit_pca_capped(&x, 2).unwrap().k(), 2);
        assert_eq!(fit_pca_matrix(&x, 8).unwrap().k(), 8);
    }

    #[test]
    fn line_in_3d() {
        let dir = [1.0, 2.0, -2.0];
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.3 - 2.0).collect();
        let x = DMatrix::from_fn(20, 3, |i, j| 1.0 + t[i] * dir[j] / 3.0);
        let pca = fit_pca_matrix(&x, 1).unwrap();
        let tm = t.iter().sum::<f64>() / 20.0;
        let var = t.iter().map(|v| (v - tm).powi(2)).sum::<f64>() / 19.0;
        assert!((pca.explained_variance[0] - var).abs() < 1e-10);
        let back = pca.inverse_transform(&pca.transform(&x).unwrap()).unwrap();
        assert!((back - &x).amax() <= 1e-10);
    }

    #[test]
    fn full_rank_reconstruction() {
        let x = random(30, 6, 1);
        let pca = fit_pca_matrix(&x, 6).unwrap();
        let back = pca.inverse_transform(&pca.transform(&x).unwrap()).unwrap();
        assert!((back - &x).amax() <= 1e-8);
        let gram = &pca.components * pca.components.transpose();
        assert!((gram - DMatrix::identity(6, 6)).amax() <= 1e-8);
    }

    #[test]
    fn matches_covariance_eigenvalues() {
        let x = random(200, 50, 2);
        let pca = fit_pca_matrix(&x, 10).unwrap();
        let (c, _) = center_columns(&x);
        let cov = c.transpose() * &c / 199.0;
        let mut eig: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        for (i, e) in eig.iter().take(10).enumerate() {
            let rel = (pca.explained_variance[i] - e).abs() / e;
            assert!(rel <= 1e-6, "component {i}: {rel}");
        }
    }

    #[test]
    fn rank_error_when_k_too_large() {
        let x = random(5, 10, 3);
        assert!(matches!(
            fit_pca_matrix(&x, 5),
            Err(UneError::Rank { requested: 5, attained: 4 })
        ));
    }

    #[test]
    fn default_k_rules() {
        assert_eq!(default_pca_k(15_000, 16_384), 500);
        assert_eq!(default_pca_k(15_000, 768), 310);
        assert_eq!(default_pca_k(100, 64), 64);
        assert_eq!(default_pca_k(40, 768), 39);
    }
}
