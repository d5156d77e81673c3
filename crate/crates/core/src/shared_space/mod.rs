//! MAXVAR generalized CCA over several latent spaces, and comparisons of
//! retrieval structure between spaces.

mod persist;
mod spearman;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UneError};
use crate::latent_store::{AttributeTable, LatentMatrix};
use crate::linalg::{center_columns, fix_column_signs, subtract_row, ThinSvd};
use crate::probing::{probe_all, ProbeConfig};

pub use persist::{load_shared, save_shared, SHARED_SIDECAR};
pub use spearman::{random_subset, spearman_structure, RetrievalProfile, SpearmanStructure};

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Named view combinations used for shared-space experiments.
pub const SHARED_PRESETS: &[(&str, &[&str])] = &[
    ("X1", &["sd21", "lcm", "clip-b16", "dinov3"]),
    ("X2", &["sd15", "lcm", "openclip-b16", "dinov3"]),
    ("X3", &["sd15", "sd21", "clip-l14", "openclip-b16"]),
    ("X4", &["sd15", "sd21", "clip-l14", "dinov3"]),
    ("X5", &["sd15", "sd21", "lcm", "clip-l14", "openclip-b16", "dinov3"]),
];

pub fn shared_preset(name: &str) -> Result<&'static [&'static str]> {
    SHARED_PRESETS
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, models)| *models)
        .ok_or_else(|| UneError::Key(format!("unknown shared-space preset '{name}'")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GccaConfig {
    /// Singular values below `rank_tol * s_max` of a view are dropped.
    pub rank_tol: f64,
    /// One ridge penalty per view, or a single value for all; empty means 0.
    pub lambdas: Vec<f64>,
    /// Extra rounds of `X <- polar(center(Σ Z_i A_i))` after the closed-form solve.
    pub alternations: usize,
}

impl Default for GccaConfig {
    fn default() -> Self {
        Self {
            rank_tol: DEFAULT_RANK_TOL,
            lambdas: Vec::new(),
            alternations: 0,
        }
    }
}

impl GccaConfig {
    fn lambda(&self, i: usize, m: usize) -> Result<f64> {
        let l = match self.lambdas.len() {
            0 => 0.0,
            1 => self.lambdas[0],
            len if len == m => self.lambdas[i],
            len => {
                return Err(UneError::Config(format!(
                    "{len} ridge penalties given for {m} views"
                )))
            }
        };
        if !(l >= 0.0) {
            return Err(UneError::Config(format!("ridge penalty must be >= 0, got {l}")));
        }
        Ok(l)
    }
}

/// Shared representation `x` (`n x k`, orthonormal, centered columns) with one
/// projector `A_i` (`d_i x k`) per view.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedSpace {
    pub x: DMatrix<f64>,
    pub projectors: Vec<DMatrix<f64>>,
    /// Training column means per view, subtracted before projecting.
    pub view_means: Vec<DVector<f64>>,
    pub lambdas: Vec<f64>,
    pub source_model_ids: Vec<String>,
    /// Top-k eigenvalues of `Σ_i P_i` (each in `[0, m]`).
    pub eigenvalues: Vec<f64>,
    /// `Σ_i ||Z_i A_i - X||²_F`
    pub residual: f64,
    pub view_residuals: Vec<f64>,
    /// Rank of the stacked view bases.
    pub attained_rank: usize,
    pub rank_tol: f64,
    pub alternations: usize,
}

impl SharedSpace {
    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_views(&self) -> usize {
        self.projectors.len()
    }
}

struct PreparedView {
    centered: DMatrix<f64>,
    mean: DVector<f64>,
    svd: ThinSvd,
    rank: usize,
}

fn prepare(view: &LatentMatrix, rank_tol: f64) -> PreparedView {
    let (centered, mean) = center_columns(view.data());
    let svd = ThinSvd::new(&centered);
    let rank = svd.rank(rank_tol);
    PreparedView {
        centered,
        mean,
        svd,
        rank,
    }
}

/// Removes the all-ones direction from every column.
fn deflate_ones(m: &mut DMatrix<f64>) {
    let n = m.nrows() as f64;
    for mut col in m.column_iter_mut() {
        let mu = col.sum() / n;
        col.add_scalar_mut(-mu);
    }
}

/// `A = (ZᵀZ + λI)⁺ Zᵀ X` through the view's SVD, restricted to its numerical rank.
fn solve_projector(v: &PreparedView, x: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let r = v.rank;
    let u = v.svd.u.columns(0, r);
    let mut utx = u.tr_mul(x);
    for (j, mut row) in utx.row_iter_mut().enumerate() {
        let s = v.svd.singular_values[j];
        row *= s / (s * s + lambda);
    }
    v.svd.v_t.rows(0, r).tr_mul(&utx)
}

fn validate_views(views: &[LatentMatrix]) -> Result<usize> {
    let first = views
        .first()
        .ok_or_else(|| UneError::Config("GCCA needs at least one view".into()))?;
    let n = first.nrows();
    if let Some(bad) = views.iter().find(|v| v.nrows() != n) {
        return Err(UneError::Alignment(format!(
            "view '{}' has {} rows, expected {n}",
            bad.model_id(),
            bad.nrows()
        )));
    }
    Ok(n)
}

pub fn gcca_fit(views: &[LatentMatrix], k: usize, cfg: &GccaConfig) -> Result<SharedSpace> {
    let n = validate_views(views)?;
    let m = views.len();
    if k == 0 || k > n.saturating_sub(1) {
        return Err(UneError::Rank {
            requested: k,
            attained: n.saturating_sub(1),
        });
    }
    let lambdas = (0..m).map(|i| cfg.lambda(i, m)).collect::<Result<Vec<_>>>()?;
    let prepared: Vec<PreparedView> = views.par_iter().map(|v| prepare(v, cfg.rank_tol)).collect();

    let total: usize = prepared.iter().map(|p| p.rank).sum();
    let mut stacked = DMatrix::zeros(n, total);
    let mut offset = 0;
    for p in &prepared {
        stacked
            .columns_mut(offset, p.rank)
            .copy_from(&p.svd.u.columns(0, p.rank));
        offset += p.rank;
    }
    deflate_ones(&mut stacked);
    let joint = ThinSvd::new(&stacked);
    // Singular values of stacked orthonormal bases are at most sqrt(m).
    let attained_rank = joint
        .singular_values
        .iter()
        .filter(|&&s| s > cfg.rank_tol * (m as f64).sqrt())
        .count();
    if k > attained_rank {
        return Err(UneError::Rank {
            requested: k,
            attained: attained_rank,
        });
    }
    let mut x = joint.u.columns(0, k).into_owned();
    fix_column_signs(&mut x);
    let eigenvalues: Vec<f64> = joint.singular_values.iter().take(k).map(|s| s * s).collect();

    let mut projectors: Vec<DMatrix<f64>> = prepared
        .iter()
        .zip(&lambdas)
        .map(|(p, &l)| solve_projector(p, &x, l))
        .collect();
    for _ in 0..cfg.alternations {
        let mut sum = DMatrix::zeros(n, k);
        for (p, a) in prepared.iter().zip(&projectors) {
            sum += &p.centered * a;
        }
        deflate_ones(&mut sum);
        let svd = ThinSvd::new(&sum);
        x = &svd.u * &svd.v_t;
        fix_column_signs(&mut x);
        projectors = prepared
            .iter()
            .zip(&lambdas)
            .map(|(p, &l)| solve_projector(p, &x, l))
            .collect();
    }
    let view_residuals: Vec<f64> = prepared
        .iter()
        .zip(&projectors)
        .map(|(p, a)| (&p.centered * a - &x).norm_squared())
        .collect();
    Ok(SharedSpace {
        residual: view_residuals.iter().sum(),
        view_residuals,
        x,
        projectors,
        view_means: prepared.into_iter().map(|p| p.mean).collect(),
        lambdas,
        source_model_ids: views.iter().map(|v| v.model_id().to_string()).collect(),
        eigenvalues,
        attained_rank,
        rank_tol: cfg.rank_tol,
        alternations: cfg.alternations,
    })
}

/// MAXVAR objective `Σ_i min_A ||Z_i A - X||²_F` of an arbitrary candidate `X`,
/// with unregularized least-squares projectors.
pub fn maxvar_objective(views: &[LatentMatrix], x: &DMatrix<f64>, rank_tol: f64) -> Result<f64> {
    let n = validate_views(views)?;
    if x.nrows() != n {
        return Err(UneError::Shape(format!(
            "candidate has {} rows, views have {n}",
            x.nrows()
        )));
    }
    Ok(views
        .iter()
        .map(|v| {
            let p = prepare(v, rank_tol);
            let a = solve_projector(&p, x, 0.0);
            (&p.centered * a - x).norm_squared()
        })
        .sum())
}

/// `(new_latents - training mean of view i) * A_i`.
pub fn project_to_shared(space: &SharedSpace, view_index: usize, new_latents: &LatentMatrix) -> Result<DMatrix<f64>> {
    let a = space.projectors.get(view_index).ok_or(UneError::Index {
        index: view_index,
        len: space.n_views(),
    })?;
    if new_latents.ncols() != a.nrows() {
        return Err(UneError::Shape(format!(
            "view {view_index} has dimension {}, got {} columns",
            a.nrows(),
            new_latents.ncols()
        )));
    }
    Ok(subtract_row(new_latents.data(), &space.view_means[view_index]) * a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub mean_accuracy: f64,
    /// `(attribute, accuracy)`; skipped attributes are omitted.
    pub accuracies: Vec<(String, f64)>,
    pub residual: f64,
}

/// Probe accuracy on the shared representation for each `k`.
///
/// Probes are trained on `X` from the training views and evaluated on the mean
/// of the test views' projections.
pub fn shared_probe_curve(
    train_views: &[LatentMatrix],
    test_views: &[LatentMatrix],
    train_attrs: &AttributeTable,
    test_attrs: &AttributeTable,
    k_grid: &[usize],
    gcca: &GccaConfig,
    probe: &ProbeConfig,
) -> Result<Vec<CurvePoint>> {
    if train_views.len() != test_views.len() {
        return Err(UneError::Config(format!(
            "{} training views but {} test views",
            train_views.len(),
            test_views.len()
        )));
    }
    let n_test = validate_views(test_views)?;
    let mut out = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let space = gcca_fit(train_views, k, gcca)?;
        let mut test_x = DMatrix::zeros(n_test, k);
        for (i, v) in test_views.iter().enumerate() {
            test_x += project_to_shared(&space, i, v)?;
        }
        test_x /= test_views.len() as f64;
        let train = LatentMatrix::new(space.x.clone(), "shared", "train")?;
        let test = LatentMatrix::new(test_x, "shared", "test")?;
        let cfg = ProbeConfig {
            pca_k: Some(k),
            ..*probe
        };
        let (_, report) = probe_all(&train, &test, train_attrs, test_attrs, &cfg)?;
        out.push(CurvePoint {
            k,
            mean_accuracy: report.mean_accuracy,
            accuracies: report
                .attributes
                .iter()
                .filter_map(|a| a.accuracy.map(|acc| (a.name.clone(), acc)))
                .collect(),
            residual: space.residual,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::principal_angles;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gauss(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn view(m: DMatrix<f64>, id: &str) -> LatentMatrix {
        LatentMatrix::new(m, id, "train").unwrap()
    }

    fn check_constraints(s: &SharedSpace) {
        let k = s.k();
        let n = s.x.nrows() as f64;
        assert!((s.x.tr_mul(&s.x) - DMatrix::identity(k, k)).amax() <= 1e-6);
        for col in s.x.column_iter() {
            assert!(col.sum().abs() <= 1e-6 * n.sqrt());
        }
    }

    #[test]
    fn single_view_reconstructs_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = view(gauss(60, 5, &mut rng), "a");
        let s = gcca_fit(&[v], 5, &GccaConfig::default()).unwrap();
        assert!(s.residual <= 1e-10);
        check_constraints(&s);
    }

    #[test]
    fn rank_error_reports_attained_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = view(gauss(50, 3, &mut rng), "a");
        let b = view(gauss(50, 2, &mut rng), "b");
        match gcca_fit(&[a, b], 6, &GccaConfig::default()) {
            Err(UneError::Rank { requested: 6, attained: 5 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn independent_views_have_large_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = view(gauss(500, 8, &mut rng), "a");
        let b = view(gauss(500, 8, &mut rng), "b");
        let s = gcca_fit(&[a, b], 8, &GccaConfig::default()).unwrap();
        assert!(s.residual / 8.0 >= 0.5, "{}", s.residual);
    }

    #[test]
    fn residual_grows_with_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = gauss(100, 4, &mut rng);
        let a = view(&z * gauss(4, 6, &mut rng) + gauss(100, 6, &mut rng) * 0.3, "a");
        let b = view(&z * gauss(4, 5, &mut rng) + gauss(100, 5, &mut rng) * 0.3, "b");
        let views = [a, b];
        let mut last = -1.0;
        for k in 1..=8 {
            let s = gcca_fit(&views, k, &GccaConfig::default()).unwrap();
            assert!(s.residual >= last - 1e-10);
            last = s.residual;
        }
    }

    #[test]
    fn rotation_of_a_view_keeps_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = gauss(80, 3, &mut rng);
        let a = &z * gauss(3, 5, &mut rng) + gauss(80, 5, &mut rng) * 0.2;
        let b = &z * gauss(3, 4, &mut rng) + gauss(80, 4, &mut rng) * 0.2;
        let q = ThinSvd::new(&gauss(5, 5, &mut rng)).u;
        let s1 = gcca_fit(&[view(a.clone(), "a"), view(b.clone(), "b")], 3, &GccaConfig::default()).unwrap();
        let s2 = gcca_fit(&[view(&a * q, "a"), view(b, "b")], 3, &GccaConfig::default()).unwrap();
        let angles = principal_angles(&s1.x, &s2.x, 1e-12);
        assert!(angles.iter().all(|&t| t <= 1e-6), "{angles:?}");
    }

    #[test]
    fn alternation_keeps_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z = gauss(70, 3, &mut rng);
        let a = view(&z * gauss(3, 5, &mut rng) + gauss(70, 5, &mut rng) * 0.5, "a");
        let b = view(&z * gauss(3, 4, &mut rng) + gauss(70, 4, &mut rng) * 0.5, "b");
        let cfg = GccaConfig {
            alternations: 3,
            lambdas: vec![0.1],
            ..Default::default()
        };
        let s = gcca_fit(&[a, b], 3, &cfg).unwrap();
        check_constraints(&s);
    }

    #[test]
    fn projection_of_view_mean_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = view(gauss(40, 4, &mut rng), "a");
        let b = view(gauss(40, 3, &mut rng), "b");
        let s = gcca_fit(&[a.clone(), b], 2, &GccaConfig::default()).unwrap();
        let mean_row = LatentMatrix::from_row_slice(1, 4, s.view_means[0].as_slice(), "a", "x").unwrap();
        assert!(project_to_shared(&s, 0, &mean_row).unwrap().amax() <= 1e-12);
        let back = project_to_shared(&s, 0, &a).unwrap();
        assert!(((back - &s.x).norm_squared() - s.view_residuals[0]).abs() <= 1e-9);
        let wrong = LatentMatrix::new(DMatrix::zeros(2, 7), "a", "x").unwrap();
        assert!(matches!(project_to_shared(&s, 0, &wrong), Err(UneError::Shape(_))));
    }

    #[test]
    fn presets_are_known() {
        assert_eq!(shared_preset("x3").unwrap().len(), 4);
        assert_eq!(shared_preset("X5").unwrap().len(), 6);
        assert!(matches!(shared_preset("X9"), Err(UneError::Key(_))));
    }
}
