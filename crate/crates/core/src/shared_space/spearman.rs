use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UneError};

/// `size` distinct row indices out of `n`, sorted; the whole range when `size >= n`.
pub fn random_subset(n: usize, size: usize, seed: u64) -> Vec<usize> {
    if size >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = index::sample(&mut rng, n, size).into_vec();
    v.sort_unstable();
    v
}

/// Cosine similarity of each anchor to every other row of a subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalProfile {
    pub subset: Vec<usize>,
    /// `similarities[a]` has `subset.len() - 1` entries: anchor `a` against
    /// every other subset row, in subset order with the anchor itself left out.
    pub similarities: Vec<Vec<f64>>,
}

impl RetrievalProfile {
    pub fn build(space: &DMatrix<f64>, subset: &[usize]) -> Result<Self> {
        let unit = unit_rows(space, subset)?;
        let similarities = (0..subset.len()).map(|a| anchor_similarities(&unit, a)).collect();
        Ok(Self {
            subset: subset.to_vec(),
            similarities,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairQuantiles {
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
}

/// Mean per-anchor Spearman correlation between the retrieval profiles of each
/// pair of spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanStructure {
    /// `m x m`, symmetric, unit diagonal. Row-major nested vectors.
    pub matrix: Vec<Vec<f64>>,
    /// Anchors left out of each pair because a similarity vector was constant.
    pub skipped_anchors: Vec<Vec<usize>>,
    /// Quantiles of the per-anchor correlations; `None` on the diagonal or when
    /// every anchor was skipped.
    pub quantiles: Vec<Vec<Option<PairQuantiles>>>,
    pub subset_size: usize,
}

/// Rows of `space` selected by `subset`, scaled to unit norm (zero rows stay zero).
fn unit_rows(space: &DMatrix<f64>, subset: &[usize]) -> Result<DMatrix<f64>> {
    if let Some(&bad) = subset.iter().find(|&&i| i >= space.nrows()) {
        return Err(UneError::Index {
            index: bad,
            len: space.nrows(),
        });
    }
    let mut rows = space.select_rows(subset.iter());
    for mut row in rows.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(rows)
}

fn anchor_similarities(unit: &DMatrix<f64>, a: usize) -> Vec<f64> {
    let sims: DVector<f64> = unit * unit.row(a).transpose();
    sims.iter()
        .enumerate()
        .filter(|&(j, _)| j != a)
        .map(|(_, &s)| s.clamp(-1.0, 1.0))
        .collect()
}

/// Mid-ranks, centered and scaled to unit norm; `None` if all values tie.
fn normalized_ranks(values: &[f64]) -> Option<Vec<f64>> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        i = j + 1;
    }
    let mean = (n - 1) as f64 / 2.0;
    ranks.iter_mut().for_each(|r| *r -= mean);
    let norm = ranks.iter().map(|r| r * r).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    ranks.iter_mut().for_each(|r| *r /= norm);
    Some(ranks)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn spearman_structure(spaces: &[DMatrix<f64>], subset: &[usize]) -> Result<SpearmanStructure> {
    let m = spaces.len();
    if m == 0 {
        return Err(UneError::Config("no spaces given".into()));
    }
    if subset.len() < 3 {
        return Err(UneError::InsufficientData(format!(
            "retrieval structure needs at least 3 anchors, got {}",
            subset.len()
        )));
    }
    let n = spaces[0].nrows();
    if let Some(bad) = spaces.iter().find(|s| s.nrows() != n) {
        return Err(UneError::Alignment(format!(
            "spaces have {} and {} rows",
            n,
            bad.nrows()
        )));
    }
    let units = spaces
        .iter()
        .map(|s| unit_rows(s, subset))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|p| (p + 1..m).map(move |q| (p, q)))
        .collect();

    // per anchor: one correlation (or None) per pair
    let per_anchor: Vec<Vec<Option<f64>>> = (0..subset.len())
        .into_par_iter()
        .map(|a| {
            let ranks: Vec<Option<Vec<f64>>> = units
                .iter()
                .map(|u| normalized_ranks(&anchor_similarities(u, a)))
                .collect();
            pairs
                .iter()
                .map(|&(p, q)| match (&ranks[p], &ranks[q]) {
                    (Some(x), Some(y)) => Some(x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0)),
                    _ => None,
                })
                .collect()
        })
        .collect();

    let mut matrix = vec![vec![0.0; m]; m];
    let mut skipped = vec![vec![0usize; m]; m];
    let mut quantiles = vec![vec![None; m]; m];
    for (i, row) in matrix.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for (pi, &(p, q)) in pairs.iter().enumerate() {
        let mut values: Vec<f64> = per_anchor.iter().filter_map(|v| v[pi]).collect();
        let skip = subset.len() - values.len();
        skipped[p][q] = skip;
        skipped[q][p] = skip;
        if values.is_empty() {
            matrix[p][q] = f64::NAN;
            matrix[q][p] = f64::NAN;
            continue;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        matrix[p][q] = mean;
        matrix[q][p] = mean;
        values.sort_by(|a, b| a.total_cmp(b));
        let qs = PairQuantiles {
            p25: quantile(&values, 0.25),
            median: quantile(&values, 0.5),
            p75: quantile(&values, 0.75),
        };
        quantiles[p][q] = Some(qs.clone());
        quantiles[q][p] = Some(qs);
    }
    Ok(SpearmanStructure {
        matrix,
        skipped_anchors: skipped,
        quantiles,
        subset_size: subset.len(),
    })
}
