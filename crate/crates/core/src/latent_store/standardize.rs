use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UneError};

/// Standard deviations below this are clamped to it.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-column mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeStats {
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
}

impl StandardizeStats {
    pub fn identity(d: usize) -> Self {
        Self {
            mean: DVector::zeros(d),
            std: DVector::from_element(d, 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn fit_standardize(m: &DMatrix<f64>) -> Result<StandardizeStats> {
    let n = m.nrows();
    if n < 2 {
        return Err(UneError::InsufficientData(format!(
            "standardization needs at least 2 rows, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / nf));
    let std = DVector::from_iterator(
        m.ncols(),
        m.column_iter().zip(mean.iter()).map(|(c, &mu)| {
            let var = c.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / nf;
            var.sqrt().max(STD_FLOOR)
        }),
    );
    Ok(StandardizeStats { mean, std })
}

pub fn apply_standardize(m: &DMatrix<f64>, stats: &StandardizeStats) -> Result<DMatrix<f64>> {
    if m.ncols() != stats.dim() {
        return Err(UneError::Shape(format!(
            "matrix has {} columns, stats have {}",
            m.ncols(),
            stats.dim()
        )));
    }
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let (mu, sd) = (stats.mean[j], stats.std[j]);
        col.apply(|v| *v = (*v - mu) / sd);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn two_point_column_population_convention() {
        let m = DMatrix::from_column_slice(2, 1, &[1.0, 3.0]);
        let s = fit_standardize(&m).unwrap();
        assert_eq!(s.mean[0], 2.0);
        assert_eq!(s.std[0], 1.0);
        let z = apply_standardize(&m, &s).unwrap();
        assert_eq!(z.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn constant_column_is_clamped_to_zero() {
        let m = DMatrix::from_column_slice(3, 1, &[5.0, 5.0, 5.0]);
        let s = fit_standardize(&m).unwrap();
        assert_eq!(s.std[0], STD_FLOOR);
        assert!(apply_standardize(&m, &s).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn needs_two_rows() {
        let m = DMatrix::from_element(1, 3, 1.0);
        assert!(matches!(
            fit_standardize(&m),
            Err(UneError::InsufficientData(_))
        ));
    }

    #[test]
    fn random_matrix_standardizes_and_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = DMatrix::from_fn(100, 10, |_, j| {
            let g: f64 = StandardNormal.sample(&mut rng);
            3.0 * g + j as f64
        });
        let z = apply_standardize(&m, &fit_standardize(&m).unwrap()).unwrap();
        for col in z.column_iter() {
            // recomputed directly rather than through fit_standardize
            let mean = col.iter().sum::<f64>() / 100.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 100.0;
            assert!(mean.abs() <= 1e-6);
            assert!((var.sqrt() - 1.0).abs() <= 1e-4);
        }
        let again = apply_standardize(&z, &fit_standardize(&z).unwrap()).unwrap();
        assert!((again - &z).amax() <= 1e-4);
    }
}
