//! Ridge-regression maps between latent spaces and transferred-probe evaluation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UneError};
use crate::latent_store::{AttributeTable, LatentMatrix};
use crate::linalg::{center_columns, cosine, ThinSvd};
use crate::probing::{accuracy, LinearProbe};

/// Affine map `y = Wᵀx + bias` from a source to a target latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    /// `d_src x d_dst`
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub alpha: f64,
    /// `alpha * ||X_src||²_F / d_src`, the ridge penalty actually applied.
    pub effective_lambda: f64,
}

impl LinearMap {
    pub fn src_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dst_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.src_dim() {
            return Err(UneError::Shape(format!(
                "map expects {} source columns, got {}",
                self.src_dim(),
                x.ncols()
            )));
        }
        let mut y = x * &self.weights;
        for (mut col, b) in y.column_iter_mut().zip(self.bias.iter()) {
            col.add_scalar_mut(*b);
        }
        Ok(y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeTransfer {
    pub name: String,
    pub accuracy_native: f64,
    pub accuracy_mapped: f64,
    /// `100 * (native - mapped)`
    pub drop_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub n_samples: usize,
    /// Mean squared error per coordinate, averaged over rows and target dimensions.
    pub mse_per_coordinate: f64,
    pub mean_cosine: f64,
    pub attributes: Vec<AttributeTransfer>,
    pub mean_accuracy_drop_pp: f64,
    pub alpha: f64,
    pub effective_lambda: f64,
}

fn check_rows(src: &LatentMatrix, dst: &LatentMatrix) -> Result<()> {
    if src.nrows() != dst.nrows() {
        return Err(UneError::Alignment(format!(
            "source has {} rows, target has {}",
            src.nrows(),
            dst.nrows()
        )));
    }
    Ok(())
}

/// Centered ridge regression solved through the SVD of the centered source.
pub fn fit_ridge_map(src: &LatentMatrix, dst: &LatentMatrix, alpha: f64) -> Result<LinearMap> {
    check_rows(src, dst)?;
    if src.nrows() < 2 {
        return Err(UneError::InsufficientData(
            "ridge map needs at least 2 rows".into(),
        ));
    }
    if !(alpha > 0.0) {
        return Err(UneError::Config(format!("alpha must be positive, got {alpha}")));
    }
    let x = src.data();
    let effective_lambda = alpha * x.norm_squared() / x.ncols() as f64;
    let (xc, mean_src) = center_columns(x);
    let (yc, mean_dst) = center_columns(dst.data());
    let svd = ThinSvd::new(&xc);
    let shrink = svd
        .singular_values
        .map(|s| s / (s * s + effective_lambda));
    // W = V diag(shrink) Uᵀ Y_c
    let mut uty = svd.u.tr_mul(&yc);
    for (mut row, f) in uty.row_iter_mut().zip(shrink.iter()) {
        row *= *f;
    }
    let weights = svd.v_t.tr_mul(&uty);
    let bias = &mean_dst - weights.tr_mul(&mean_src);
    Ok(LinearMap {
        weights,
        bias,
        alpha,
        effective_lambda,
    })
}

/// Relative residual of the ridge normal equations
/// `||(X_cᵀX_c + λI)W - X_cᵀY_c||_F / ||X_cᵀY_c||_F`.
pub fn normal_equation_residual(src: &LatentMatrix, dst: &LatentMatrix, map: &LinearMap) -> f64 {
    let (xc, _) = center_columns(src.data());
    let (yc, _) = center_columns(dst.data());
    let xty = xc.tr_mul(&yc);
    let mut lhs = xc.tr_mul(&xc) * &map.weights;
    lhs += &map.weights * map.effective_lambda;
    (lhs - &xty).norm() / xty.norm().max(f64::MIN_POSITIVE)
}

/// Compares mapped source latents against true target latents, and the target
/// probe's accuracy on each.
pub fn evaluate_transfer(
    map: &LinearMap,
    src_test: &LatentMatrix,
    dst_test: &LatentMatrix,
    dst_probe: &LinearProbe,
    attrs: &AttributeTable,
) -> Result<TransferReport> {
    check_rows(src_test, dst_test)?;
    if dst_test.ncols() != map.dst_dim() || dst_probe.input_dim() != map.dst_dim() {
        return Err(UneError::Shape(format!(
            "map target dim {}, target latents {}, probe input {}",
            map.dst_dim(),
            dst_test.ncols(),
            dst_probe.input_dim()
        )));
    }
    if attrs.nrows() != dst_test.nrows() {
        return Err(UneError::Alignment(format!(
            "{} test rows but {} attribute rows",
            dst_test.nrows(),
            attrs.nrows()
        )));
    }
    let mapped = map.apply(src_test.data())?;
    let truth = dst_test.data();
    let n = truth.nrows();
    let mse = (&mapped - truth).norm_squared() / (n * truth.ncols()) as f64;
    let mean_cosine = (0..n)
        .map(|i| {
            let a: Vec<f64> = mapped.row(i).iter().copied().collect();
            let b: Vec<f64> = truth.row(i).iter().copied().collect();
            cosine(&a, &b)
        })
        .sum::<f64>()
        / n as f64;

    let native_scores = dst_probe.decision_values(truth)?;
    let mapped_scores = dst_probe.decision_values(&mapped)?;
    let mut attributes = Vec::new();
    for (a, name) in dst_probe.attribute_names.iter().enumerate() {
        if dst_probe.is_skipped(a) {
            continue;
        }
        let col = attrs
            .index_of(name)
            .ok_or_else(|| UneError::Key(format!("attribute table has no column '{name}'")))?;
        let labels = attrs.column(col);
        let native: Vec<f64> = native_scores.column(a).iter().copied().collect();
        let moved: Vec<f64> = mapped_scores.column(a).iter().copied().collect();
        let accuracy_native = accuracy(&native, &labels);
        let accuracy_mapped = accuracy(&moved, &labels);
        attributes.push(AttributeTransfer {
            name: name.clone(),
            accuracy_native,
            accuracy_mapped,
            drop_pp: 100.0 * (accuracy_native - accuracy_mapped),
        });
    }
    let mean_accuracy_drop_pp = if attributes.is_empty() {
        0.0
    } else {
        attributes.iter().map(|a| a.drop_pp).sum::<f64>() / attributes.len() as f64
    };
    Ok(TransferReport {
        n_samples: n,
        mse_per_coordinate: mse,
        mean_cosine,
        attributes,
        mean_accuracy_drop_pp,
        alpha: map.alpha,
        effective_lambda: map.effective_lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gauss(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn lm(m: DMatrix<f64>) -> LatentMatrix {
        LatentMatrix::new(m, "x", "train").unwrap()
    }

    #[test]
    fn self_map_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = lm(gauss(200, 8, &mut rng));
        let map = fit_ridge_map(&x, &x, 1e-12).unwrap();
        assert!((&map.weights - DMatrix::identity(8, 8)).norm() <= 1e-6);
        let y = map.apply(x.data()).unwrap();
        assert!((y - x.data()).norm_squared() / (200.0 * 8.0) <= 1e-10);
    }

    #[test]
    fn recovers_exact_linear_relation_with_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gauss(500, 6, &mut rng);
        let m = gauss(6, 4, &mut rng);
        let c = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let mut y = &x * &m;
        for (mut col, ci) in y.column_iter_mut().zip(c.iter()) {
            col.add_scalar_mut(*ci);
        }
        let (x, y) = (lm(x), lm(y));
        let map = fit_ridge_map(&x, &y, 1e-10).unwrap();
        assert!((&map.weights - &m).norm() <= 1e-6);
        assert!((&map.bias - &c).norm() <= 1e-6);
        assert!(normal_equation_residual(&x, &y, &map) <= 1e-8);
    }

    #[test]
    fn misaligned_rows_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = lm(gauss(10, 2, &mut rng));
        let b = lm(gauss(11, 2, &mut rng));
        assert!(matches!(fit_ridge_map(&a, &b, 1.0), Err(UneError::Alignment(_))));
    }

    #[test]
    fn training_mse_grows_with_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gauss(100, 10, &mut rng);
        let y = &x * gauss(10, 3, &mut rng) + gauss(100, 3, &mut rng) * 0.5;
        let (x, y) = (lm(x), lm(y));
        let mut last = 0.0;
        for alpha in [1e-6, 1e-3, 1e-2, 0.1, 1.0, 10.0] {
            let map = fit_ridge_map(&x, &y, alpha).unwrap();
            let mse = (map.apply(x.data()).unwrap() - y.data()).norm_squared();
            assert!(mse >= last - 1e-9);
            last = mse;
            assert!(normal_equation_residual(&x, &y, &map) <= 1e-8);
        }
    }

    #[test]
    fn predictions_invariant_to_source_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gauss(50, 5, &mut rng);
        let y = &x * gauss(5, 3, &mut rng) + gauss(50, 3, &mut rng) * 0.1;
        let base = fit_ridge_map(&lm(x.clone()), &lm(y.clone()), 0.5).unwrap();
        let scaled_x = &x * 7.5;
        let scaled = fit_ridge_map(&lm(scaled_x.clone()), &lm(y), 0.5).unwrap();
        let p0 = base.apply(&x).unwrap();
        let p1 = scaled.apply(&scaled_x).unwrap();
        assert!((p0 - p1).amax() <= 1e-6);
    }
}
