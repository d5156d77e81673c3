//! Univariate normality tests and the random 1D projection battery.

mod special;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UneError};
use crate::latent_store::LatentMatrix;

pub use special::{ln_norm_cdf, norm_cdf, norm_ppf, norm_sf};
pub use tests::{
    anderson_darling, dagostino_pearson, shapiro_wilk, AndersonDarling, DagostinoPearson,
    ShapiroWilk, AD_CRITICAL_5PCT, ALPHA,
};

/// Magnitude of the symmetric jitter added to projections whose values are all tied.
pub const TIE_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    pub n_projections: usize,
    pub subset_size: usize,
    pub seed: u64,
    /// Draw a fresh row subset for every projection instead of one shared subset.
    pub resample_subset: bool,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            n_projections: 5000,
            subset_size: 250,
            seed: 0,
            resample_subset: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    /// Mean of the corrected AD statistic.
    pub avg_ad_statistic: f64,
    pub ad_accept_rate: f64,
    /// Mean DP p-value.
    pub avg_dp_pvalue: f64,
    pub dp_accept_rate: f64,
    /// Mean SW p-value.
    pub avg_sw_pvalue: f64,
    pub sw_accept_rate: f64,
    pub n_projections: usize,
    pub subset_size: usize,
    pub seed: u64,
    pub resample_subset: bool,
    /// Projections whose values were all tied and received `tie_jitter` noise.
    pub jittered_projections: usize,
    pub tie_jitter: f64,
}

#[derive(Debug, Clone, Copy)]
struct ProjectionOutcome {
    ad: f64,
    ad_accept: bool,
    dp_p: f64,
    sw_p: f64,
    jittered: bool,
}

fn projection_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform direction on the unit sphere in `d` dimensions.
pub fn random_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = v.norm();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

/// Runs AD, DP and SW on one 1D sample, jittering an all-tied sample first.
fn test_projection<R: Rng + ?Sized>(mut y: Vec<f64>, rng: &mut R) -> Result<ProjectionOutcome> {
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let jittered = hi - lo == 0.0;
    if jittered {
        // The tests are shift invariant; recentring keeps the jitter above one ulp.
        for v in &mut y {
            *v = if rng.random::<bool>() { TIE_JITTER } else { -TIE_JITTER };
        }
    }
    let ad = anderson_darling(&y)?;
    let dp = dagostino_pearson(&y)?;
    let sw = shapiro_wilk(&y)?;
    Ok(ProjectionOutcome {
        ad: ad.corrected,
        ad_accept: ad.accept,
        dp_p: dp.p_value,
        sw_p: sw.p_value,
        jittered,
    })
}

fn project(rows: &DMatrix<f64>, dir: &DVector<f64>) -> Vec<f64> {
    (rows * dir).as_slice().to_vec()
}

/// Projects a row subset onto `n_projections` random unit directions and
/// aggregates the three normality tests over the resulting 1D samples.
///
/// Projection `j` draws from its own ChaCha8 stream `j + 1` (stream 0 picks the
/// shared subset), so the report does not depend on the rayon thread count.
pub fn projection_battery(m: &LatentMatrix, cfg: &BatteryConfig) -> Result<NormalityReport> {
    let (n, d) = (m.nrows(), m.ncols());
    if cfg.n_projections == 0 {
        return Err(UneError::Config("n_projections must be at least 1".into()));
    }
    if cfg.subset_size > n {
        return Err(UneError::InsufficientData(format!(
            "subset of {} rows requested from {n} rows",
            cfg.subset_size
        )));
    }
    if cfg.subset_size < 20 {
        return Err(UneError::InsufficientData(format!(
            "subset of {} rows is below the 20 rows the DP test needs",
            cfg.subset_size
        )));
    }
    let data = m.data();
    let shared = if cfg.resample_subset {
        None
    } else {
        let mut rng = projection_rng(cfg.seed, 0);
        let idx = index::sample(&mut rng, n, cfg.subset_size).into_vec();
        Some(data.select_rows(idx.iter()))
    };

    let outcomes: Vec<ProjectionOutcome> = (0..cfg.n_projections)
        .into_par_iter()
        .map(|j| {
            let mut rng = projection_rng(cfg.seed, j as u64 + 1);
            let dir = random_unit_vector(d, &mut rng);
            let y = match &shared {
                Some(rows) => project(rows, &dir),
                None => {
                    let idx = index::sample(&mut rng, n, cfg.subset_size).into_vec();
                    project(&data.select_rows(idx.iter()), &dir)
                }
            };
            test_projection(y, &mut rng)
        })
        .collect::<Result<_>>()?;

    let k = outcomes.len() as f64;
    let mut sums = [0.0f64; 6];
    let mut jittered = 0;
    for o in &outcomes {
        sums[0] += o.ad;
        sums[1] += o.ad_accept as u8 as f64;
        sums[2] += o.dp_p;
        sums[3] += (o.dp_p > ALPHA) as u8 as f64;
        sums[4] += o.sw_p;
        sums[5] += (o.sw_p > ALPHA) as u8 as f64;
        jittered += o.jittered as usize;
    }
    Ok(NormalityReport {
        avg_ad_statistic: sums[0] / k,
        ad_accept_rate: sums[1] / k,
        avg_dp_pvalue: sums[2] / k,
        dp_accept_rate: sums[3] / k,
        avg_sw_pvalue: sums[4] / k,
        sw_accept_rate: sums[5] / k,
        n_projections: cfg.n_projections,
        subset_size: cfg.subset_size,
        seed: cfg.seed,
        resample_subset: cfg.resample_subset,
        jittered_projections: jittered,
        tie_jitter: TIE_JITTER,
    })
}
