use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use une_core::editing::{edit, edit_to_intensity, orthogonalize, SemanticDirection};
use une_core::gaussianity::{anderson_darling, dagostino_pearson, shapiro_wilk};
use une_core::latent_store::lat1::{decode, encode};
use une_core::latent_store::{apply_standardize, fit_standardize, split, DatasetManifest, LatentMatrix};
use une_core::latent_store::AttributeTable;
use une_core::linalg::principal_angles;
use une_core::probing::{
    fit_logistic, fit_pca_matrix, fit_probe, logistic_gradient, logistic_objective, LogisticConfig, ProbeConfig,
};
use une_core::shared_space::{gcca_fit, GccaConfig};
use une_core::synthetic::{build_oracle, random_orthonormal, OracleConfig};
use une_core::transfer::{fit_ridge_map, normal_equation_residual};

fn gaussian(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

fn sample(n: usize, seed: u64) -> Vec<f64> {
    gaussian(n, 1, seed).iter().copied().collect()
}

fn rotation(d: usize, seed: u64) -> DMatrix<f64> {
    random_orthonormal(d, d, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn latent(m: DMatrix<f64>) -> LatentMatrix {
    LatentMatrix::new(m, "m", "train").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lat1_round_trip_is_bit_exact(rows in 1usize..12, cols in 1usize..12, seed: u64, scale in -30i32..30) {
        let m = gaussian(rows, cols, seed).map(|v| (v * 2f64.powi(scale)) as f32 as f64);
        let bytes = encode(&m).unwrap();
        prop_assert_eq!(bytes.len(), 16 + 4 * rows * cols);
        let back = decode(&bytes).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn standardize_is_idempotent(n in 2usize..40, d in 1usize..6, seed: u64, shift in -100.0f64..100.0, scale in 0.01f64..100.0) {
        let m = gaussian(n, d, seed).map(|v| v * scale + shift);
        let once = apply_standardize(&m, &fit_standardize(&m).unwrap()).unwrap();
        let twice = apply_standardize(&once, &fit_standardize(&once).unwrap()).unwrap();
        prop_assert!((&twice - &once).amax() <= 1e-4);
    }

    #[test]
    fn split_is_a_partition(n in 2usize..60, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(&mut rng);
        let cut = rng.random_range(1..n);
        let manifest = DatasetManifest {
            dataset_name: "p".into(),
            models: Default::default(),
            attributes_path: None,
            train_indices: idx[..cut].to_vec(),
            test_indices: idx[cut..].to_vec(),
            checksums: Default::default(),
        };
        // column 0 carries the row index so membership is visible after splitting
        let m = latent(DMatrix::from_fn(n, 2, |i, j| if j == 0 { i as f64 } else { 0.5 }));
        let (tr, te) = split(&m, &manifest).unwrap();
        prop_assert_eq!(tr.nrows() + te.nrows(), n);
        let mut seen: Vec<usize> = tr.data().column(0).iter().chain(te.data().column(0).iter()).map(|&v| v as usize).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn ad_correction_never_lowers_the_statistic(n in 8usize..300, seed: u64) {
        let ad = anderson_darling(&sample(n, seed)).unwrap();
        prop_assert!(ad.corrected >= ad.statistic);
    }

    #[test]
    fn normality_tests_ignore_order(n in 20usize..200, seed: u64) {
        let x = sample(n, seed);
        let mut y = x.clone();
        y.reverse();
        y.rotate_left(seed as usize % n);
        let (ax, ay) = (anderson_darling(&x).unwrap(), anderson_darling(&y).unwrap());
        let (dx, dy) = (dagostino_pearson(&x).unwrap(), dagostino_pearson(&y).unwrap());
        let (sx, sy) = (shapiro_wilk(&x).unwrap(), shapiro_wilk(&y).unwrap());
        prop_assert_eq!(ax.accept, ay.accept);
        prop_assert_eq!(dx.accept(), dy.accept());
        prop_assert_eq!(sx.accept(), sy.accept());
        prop_assert!((ax.statistic - ay.statistic).abs() < 1e-9);
        prop_assert!((sx.w - sy.w).abs() < 1e-12);
    }

    #[test]
    fn normality_tests_are_affine_invariant(n in 20usize..200, seed: u64, a in 0.001f64..1000.0, b in -1e3f64..1e3) {
        let x = sample(n, seed);
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let (ax, ay) = (anderson_darling(&x).unwrap(), anderson_darling(&y).unwrap());
        let (dx, dy) = (dagostino_pearson(&x).unwrap(), dagostino_pearson(&y).unwrap());
        let (sx, sy) = (shapiro_wilk(&x).unwrap(), shapiro_wilk(&y).unwrap());
        prop_assert!((ax.statistic - ay.statistic).abs() <= 1e-9);
        prop_assert!((dx.k2 - dy.k2).abs() <= 1e-9);
        prop_assert!((sx.w - sy.w).abs() <= 1e-9);
        prop_assert!((sx.p_value - sy.p_value).abs() <= 1e-9);
    }

    #[test]
    fn pca_error_does_not_grow_with_k(n in 6usize..30, d in 2usize..8, seed: u64) {
        let x = gaussian(n, d, seed);
        let max_k = d.min(n - 1);
        let mut prev = f64::INFINITY;
        for k in 1..=max_k {
            let pca = fit_pca_matrix(&x, k).unwrap();
            let gram = &pca.components * pca.components.transpose();
            prop_assert!((gram - DMatrix::identity(k, k)).amax() < 1e-10);
            let err = (pca.inverse_transform(&pca.transform(&x).unwrap()).unwrap() - &x).norm();
            prop_assert!(err <= prev + 1e-10);
            prev = err;
        }
    }

    #[test]
    fn logistic_gradient_matches_central_differences(n in 5usize..30, d in 1usize..5, seed: u64, lambda in 1e-4f64..1.0) {
        let x = gaussian(n, d, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let w = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b: f64 = rng.sample(StandardNormal);
        let (gw, gb) = logistic_gradient(&x, &y, lambda, &w, b);
        let h = 1e-5;
        for j in 0..d {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += h;
            wm[j] -= h;
            let fd = (logistic_objective(&x, &y, lambda, &wp, b) - logistic_objective(&x, &y, lambda, &wm, b)) / (2.0 * h);
            prop_assert!((fd - gw[j]).abs() <= 1e-6 * gw[j].abs().max(1e-3));
        }
        let fd = (logistic_objective(&x, &y, lambda, &w, b + h) - logistic_objective(&x, &y, lambda, &w, b - h)) / (2.0 * h);
        prop_assert!((fd - gb).abs() <= 1e-6 * gb.abs().max(1e-3));
    }

    #[test]
    fn heavier_penalty_never_grows_the_weights(n in 20usize..60, d in 1usize..5, seed: u64) {
        let x = gaussian(n, d, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let y: Vec<u8> = (0..n).map(|i| (x[(i, 0)] + rng.sample::<f64, _>(StandardNormal) > 0.0) as u8).collect();
        prop_assume!(y.contains(&1) && y.contains(&0));
        let mut prev = f64::INFINITY;
        for lambda in [1e-3, 1e-2, 0.1, 1.0, 10.0] {
            let fit = fit_logistic(&x, &y, &LogisticConfig::new(lambda)).unwrap();
            prop_assert!(fit.w.norm() <= prev * (1.0 + 1e-6));
            prev = fit.w.norm();
        }
    }

    #[test]
    fn probe_predictions_survive_rotation(seed: u64) {
        let (n, d) = (50, 5);
        let x = gaussian(n, d, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let labels: Vec<Vec<u8>> = (0..n)
            .map(|i| vec![(x[(i, 0)] - 0.5 * x[(i, 1)] + rng.sample::<f64, _>(StandardNormal) > 0.0) as u8])
            .collect();
        prop_assume!(labels.iter().any(|r| r[0] == 1) && labels.iter().any(|r| r[0] == 0));
        let attrs = AttributeTable::new(vec!["a".into()], labels).unwrap();
        let r = rotation(d, seed ^ 4);
        let cfg = ProbeConfig { l2_lambda: Some(1e-8), pca_k: Some(d), ..Default::default() };
        let p1 = fit_probe(&latent(x.clone()), &attrs, &cfg).unwrap();
        let p2 = fit_probe(&latent(&x * &r), &attrs, &cfg).unwrap();
        let s1 = p1.decision_values(&x).unwrap();
        let s2 = p2.decision_values(&(&x * &r)).unwrap();
        for i in 0..n {
            if s1[(i, 0)].abs() > 1e-6 {
                prop_assert_eq!(s1[(i, 0)] > 0.0, s2[(i, 0)] > 0.0);
            }
        }
    }

    #[test]
    fn ridge_satisfies_normal_equations(n in 8usize..40, ds in 1usize..10, dd in 1usize..6, seed: u64, alpha in 1e-6f64..10.0) {
        let src = latent(gaussian(n, ds, seed));
        let dst = latent(gaussian(n, dd, seed ^ 5));
        let map = fit_ridge_map(&src, &dst, alpha).unwrap();
        prop_assert!(normal_equation_residual(&src, &dst, &map) <= 1e-8);
    }

    #[test]
    fn ridge_training_error_grows_with_alpha(n in 8usize..40, ds in 1usize..8, seed: u64) {
        let src = latent(gaussian(n, ds, seed));
        let dst = latent(gaussian(n, 3, seed ^ 6));
        let mut prev = 0.0f64;
        for alpha in [1e-6, 1e-3, 1e-2, 0.1, 1.0, 10.0] {
            let map = fit_ridge_map(&src, &dst, alpha).unwrap();
            let mse = (map.apply(src.data()).unwrap() - dst.data()).norm_squared();
            prop_assert!(mse >= prev - 1e-9 * prev.max(1.0));
            prev = mse;
        }
    }

    #[test]
    fn ridge_predictions_are_scale_equivariant(seed: u64, c in 0.01f64..100.0, alpha in 1e-3f64..10.0) {
        let x = gaussian(50, 6, seed);
        let src = latent(x.clone());
        let scaled = latent(&x * c);
        let dst = latent(gaussian(50, 3, seed ^ 7));
        let y1 = fit_ridge_map(&src, &dst, alpha).unwrap().apply(src.data()).unwrap();
        let y2 = fit_ridge_map(&scaled, &dst, alpha).unwrap().apply(scaled.data()).unwrap();
        prop_assert!((y1 - y2).amax() <= 1e-6);
    }

    #[test]
    fn gcca_output_constraints_and_rotation_invariance(seed: u64, k in 1usize..4) {
        let n = 40;
        let z = gaussian(n, 4, seed);
        let views: Vec<LatentMatrix> = (0..3)
            .map(|i| latent(&z * gaussian(4, 6 + i, seed ^ (10 + i as u64)) + gaussian(n, 6 + i, seed ^ (20 + i as u64)) * 0.3))
            .collect();
        let cfg = GccaConfig::default();
        let s = gcca_fit(&views, k, &cfg).unwrap();
        prop_assert!((s.x.tr_mul(&s.x) - DMatrix::identity(k, k)).amax() <= 1e-6);
        for col in s.x.column_iter() {
            prop_assert!(col.sum().abs() <= 1e-6 * (n as f64).sqrt());
        }

        let mut rotated = views.clone();
        let r = rotation(views[1].ncols(), seed ^ 30);
        rotated[1] = latent(views[1].data() * r);
        let s2 = gcca_fit(&rotated, k, &cfg).unwrap();
        let angles = principal_angles(&s.x, &s2.x, 1e-12);
        prop_assert!(angles.iter().all(|&a| a <= 1e-6), "{angles:?}");

        let bigger = gcca_fit(&views, k + 1, &cfg).unwrap();
        prop_assert!(bigger.residual >= s.residual - 1e-9);
    }

    #[test]
    fn edits_compose_linearly(d in 1usize..20, seed: u64, a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let train = gaussian(30, d, seed);
        let w = gaussian(d, 1, seed ^ 8).column(0).into_owned();
        let dir = SemanticDirection::new(w, 0.3, "t", &train).unwrap();
        let z = gaussian(d, 1, seed ^ 9).column(0).into_owned();
        let twice = edit(&edit(&z, &dir, a).unwrap(), &dir, b).unwrap();
        let once = edit(&z, &dir, a + b).unwrap();
        let scale = 1.0 + z.amax() + (a.abs() + b.abs()) * dir.w.amax();
        prop_assert!((twice - once).amax() <= 4.0 * f64::EPSILON * scale);
    }

    #[test]
    fn orthogonalized_edits_keep_spurious_scores(d in 2usize..20, seed: u64, t in -3.0f64..3.0) {
        let train = gaussian(40, d, seed);
        let w1 = gaussian(d, 1, seed ^ 11).column(0).into_owned();
        let w2 = gaussian(d, 1, seed ^ 12).column(0).into_owned();
        let target = SemanticDirection::new(w1, 0.1, "target", &train).unwrap();
        let spurious = SemanticDirection::new(w2, -0.4, "spurious", &train).unwrap();
        let Ok(ortho) = orthogonalize(&target, &spurious, &train) else {
            // only a (near-)collinear pair may be rejected
            let c = target.w.dot(&spurious.w).abs() / (target.w.norm() * spurious.w.norm());
            prop_assert!(c > 1.0 - 1e-9);
            return Ok(());
        };
        let again = orthogonalize(&ortho, &spurious, &train).unwrap();
        assert_relative_eq!(again.w, ortho.w, max_relative = 1e-12, epsilon = 1e-12 * ortho.w.norm());

        let z = gaussian(d, 1, seed ^ 13).column(0).into_owned();
        let moved = edit_to_intensity(&z, &ortho, t).unwrap();
        let drift = (spurious.score(&moved) - spurious.score(&z)).abs();
        prop_assert!(drift <= 1e-9 * (1.0 + spurious.w.norm() * (moved - &z).norm()));
        let z2 = edit_to_intensity(&z, &ortho, t).unwrap();
        prop_assert!((ortho.intensity(&z2) - t).abs() <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn oracle_is_deterministic_under_seed(seed: u64, sigma in 0.0f64..1.0) {
        let mut cfg = OracleConfig::oracle_default(sigma, seed);
        cfg.n = 60;
        let a = build_oracle(&cfg).unwrap();
        let b = build_oracle(&cfg).unwrap();
        prop_assert_eq!(a.ground_truth(), b.ground_truth());
        for (va, vb) in a.views.iter().zip(&b.views) {
            prop_assert_eq!(va.data(), vb.data());
        }
        prop_assert_eq!(&a.attributes, &b.attributes);
        prop_assert_eq!(&a.train_indices, &b.train_indices);
    }
}
