//! Linear probes: PCA, per-column scaling and one logistic classifier per attribute.

mod logistic;
mod pca;
mod persist;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UneError};
use crate::latent_store::{apply_standardize, fit_standardize, AttributeTable, LatentMatrix, StandardizeStats};

pub use logistic::{fit_logistic, logistic_gradient, logistic_objective, LogisticConfig, LogisticFit};
pub use pca::{default_pca_k, fit_pca, fit_pca_capped, fit_pca_matrix, PcaModel, PCA_RANK_TOL};
pub use persist::{load_probe, save_probe, PROBE_SIDECAR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// `None` uses [`default_pca_k`], capped at the numerical rank of the training data.
    pub pca_k: Option<usize>,
    /// `None` uses `1 / n_train`.
    pub l2_lambda: Option<f64>,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            pca_k: None,
            l2_lambda: None,
            max_iters: 100,
            grad_tol: 1e-6,
        }
    }
}

/// Solver diagnostics for one attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// One logistic classifier per attribute on top of a shared PCA + scaling front end.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub attribute_names: Vec<String>,
    /// `A x k`, row `a` holds attribute `a`'s weights in standardized PCA coordinates.
    pub weights: DMatrix<f64>,
    pub biases: DVector<f64>,
    pub pca: PcaModel,
    pub scaler: StandardizeStats,
    pub l2_lambda: f64,
    /// `None` for attributes that were constant on the training split.
    pub fit_info: Vec<Option<FitInfo>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeScore {
    pub name: String,
    pub skipped: bool,
    pub accuracy: Option<f64>,
    /// `None` when skipped or when the evaluation split has a single class.
    pub auc: Option<f64>,
    pub fit: Option<FitInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub split: String,
    pub n_samples: usize,
    pub pca_k: usize,
    pub l2_lambda: f64,
    pub attributes: Vec<AttributeScore>,
    /// Mean over non-skipped attributes.
    pub mean_accuracy: f64,
    pub mean_auc: Option<f64>,
    pub skipped: Vec<String>,
}

impl LinearProbe {
    pub fn n_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn input_dim(&self) -> usize {
        self.pca.dim()
    }

    pub fn attribute_index(&self, name: &str) -> Result<usize> {
        self.attribute_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| UneError::Key(format!("probe has no attribute '{name}'")))
    }

    pub fn is_skipped(&self, a: usize) -> bool {
        self.fit_info[a].is_none()
    }

    /// Standardized PCA features of raw latents.
    pub fn features(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        apply_standardize(&self.pca.transform(x)?, &self.scaler)
    }

    /// Decision values `wᵀf + b`, shape `n x A`.
    pub fn decision_values(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut s = self.features(x)? * self.weights.transpose();
        for (mut col, b) in s.column_iter_mut().zip(self.biases.iter()) {
            col.add_scalar_mut(*b);
        }
        Ok(s)
    }

    /// Attribute `a`'s classifier expressed on raw latents: `(w_raw, b_raw)`
    /// such that `w_rawᵀz + b_raw` equals the decision value for `z`.
    pub fn raw_direction(&self, a: usize) -> (DVector<f64>, f64) {
        let w_std = self.weights.row(a).transpose();
        let w_pca = w_std.component_div(&self.scaler.std);
        let w_raw = self.pca.components.tr_mul(&w_pca);
        let b_raw = self.biases[a] - w_pca.dot(&self.scaler.mean) - w_raw.dot(&self.pca.mean);
        (w_raw, b_raw)
    }

    /// Accuracy and AUC of every attribute on `x`, matching attribute columns by name.
    pub fn evaluate(&self, x: &DMatrix<f64>, attrs: &AttributeTable, split: &str) -> Result<ProbeReport> {
        if x.nrows() != attrs.nrows() {
            return Err(UneError::Alignment(format!(
                "{} latent rows but {} attribute rows",
                x.nrows(),
                attrs.nrows()
            )));
        }
        let scores = self.decision_values(x)?;
        let mut out = Vec::with_capacity(self.n_attributes());
        for (a, name) in self.attribute_names.iter().enumerate() {
            if self.is_skipped(a) {
                out.push(AttributeScore {
                    name: name.clone(),
                    skipped: true,
                    accuracy: None,
                    auc: None,
                    fit: None,
                });
                continue;
            }
            let col = attrs
                .index_of(name)
                .ok_or_else(|| UneError::Key(format!("attribute table has no column '{name}'")))?;
            let labels = attrs.column(col);
            let s: Vec<f64> = scores.column(a).iter().copied().collect();
            out.push(AttributeScore {
                name: name.clone(),
                skipped: false,
                accuracy: Some(accuracy(&s, &labels)),
                auc: auc(&s, &labels).ok(),
                fit: self.fit_info[a],
            });
        }
        Ok(ProbeReport::from_scores(split, x.nrows(), self, out))
    }
}

impl ProbeReport {
    fn from_scores(split: &str, n: usize, probe: &LinearProbe, attributes: Vec<AttributeScore>) -> Self {
        let accs: Vec<f64> = attributes.iter().filter_map(|s| s.accuracy).collect();
        let aucs: Vec<f64> = attributes.iter().filter_map(|s| s.auc).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Self {
            split: split.to_string(),
            n_samples: n,
            pca_k: probe.pca.k(),
            l2_lambda: probe.l2_lambda,
            skipped: attributes
                .iter()
                .filter(|s| s.skipped)
                .map(|s| s.name.clone())
                .collect(),
            mean_accuracy: if accs.is_empty() { 0.0 } else { mean(&accs) },
            mean_auc: if aucs.is_empty() { None } else { Some(mean(&aucs)) },
            attributes,
        }
    }

    /// Accuracy of the named attribute, if it was evaluated.
    pub fn accuracy_of(&self, name: &str) -> Option<f64> {
        self.attributes.iter().find(|s| s.name == name).and_then(|s| s.accuracy)
    }
}

/// Fraction of rows where `score > 0` agrees with the label.
pub fn accuracy(scores: &[f64], labels: &[u8]) -> f64 {
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| ((s > 0.0) as u8) == y)
        .count();
    correct as f64 / scores.len().max(1) as f64
}

/// Probability that a random positive outscores a random negative, ties counting half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(UneError::Alignment(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(UneError::DegenerateLabels("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Mann-Whitney with mid-ranks for ties.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += mid_rank;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Fits the PCA + scaler front end on `train` and one classifier per attribute,
/// then evaluates on `test`.
pub fn probe_all(
    train: &LatentMatrix,
    test: &LatentMatrix,
    train_attrs: &AttributeTable,
    test_attrs: &AttributeTable,
    cfg: &ProbeConfig,
) -> Result<(LinearProbe, ProbeReport)> {
    let probe = fit_probe(train, train_attrs, cfg)?;
    if test.ncols() != train.ncols() {
        return Err(UneError::Shape(format!(
            "train has {} columns, test has {}",
            train.ncols(),
            test.ncols()
        )));
    }
    let report = probe.evaluate(test.data(), test_attrs, test.split_id())?;
    Ok((probe, report))
}

/// Training half of [`probe_all`].
pub fn fit_probe(train: &LatentMatrix, attrs: &AttributeTable, cfg: &ProbeConfig) -> Result<LinearProbe> {
    let (n, d) = (train.nrows(), train.ncols());
    if attrs.nrows() != n {
        return Err(UneError::Alignment(format!(
            "{n} training rows but {} attribute rows",
            attrs.nrows()
        )));
    }
    let l2_lambda = cfg.l2_lambda.unwrap_or(1.0 / n as f64);
    let pca = match cfg.pca_k {
        Some(k) => fit_pca(train, k)?,
        None => fit_pca_capped(train.data(), default_pca_k(n, d))?,
    };
    let k = pca.k();
    let scores = pca.transform(train.data())?;
    let scaler = fit_standardize(&scores)?;
    let feats = apply_standardize(&scores, &scaler)?;
    let lcfg = LogisticConfig {
        l2_lambda,
        max_iters: cfg.max_iters,
        grad_tol: cfg.grad_tol,
    };
    let fits: Vec<Option<LogisticFit>> = (0..attrs.n_attributes())
        .into_par_iter()
        .map(|a| {
            let y = attrs.column(a);
            let pos = y.iter().filter(|&&v| v == 1).count();
            if pos == 0 || pos == y.len() {
                return Ok(None);
            }
            fit_logistic(&feats, &y, &lcfg).map(Some)
        })
        .collect::<Result<_>>()?;
    let a_count = fits.len();
    let mut weights = DMatrix::zeros(a_count, k);
    let mut biases = DVector::zeros(a_count);
    let mut fit_info = Vec::with_capacity(a_count);
    for (a, fit) in fits.into_iter().enumerate() {
        match fit {
            Some(f) => {
                weights.row_mut(a).copy_from(&f.w.transpose());
                biases[a] = f.b;
                fit_info.push(Some(FitInfo {
                    grad_norm: f.grad_norm,
                    iterations: f.iterations,
                    converged: f.converged,
                }));
            }
            None => fit_info.push(None),
        }
    }
    Ok(LinearProbe {
        attribute_names: attrs.names().to_vec(),
        weights,
        biases,
        pca,
        scaler,
        l2_lambda,
        fit_info,
    })
}
