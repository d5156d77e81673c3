//! Linear latent edits along probe normals, with orthogonalization against
//! spurious directions and intensity calibration.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UneError};
use crate::latent_store::LatentMatrix;
use crate::probing::LinearProbe;

/// A direction whose norm falls below this fraction of the input norm after
/// projection is treated as zero.
pub const DEGENERATE_REL_TOL: f64 = 1e-10;

/// Hyperplane `wᵀz + b = 0` in raw latent coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticDirection {
    pub w: DVector<f64>,
    pub b: f64,
    pub attribute_name: String,
    /// Population std of the signed distances `(wᵀz + b) / ||w||` over training latents.
    pub margin_std: f64,
    /// Attributes whose directions were projected out of `w`.
    #[serde(default)]
    pub orthogonal_to: Vec<String>,
}

impl SemanticDirection {
    /// Builds a direction and measures its margin spread on `train`.
    pub fn new(w: DVector<f64>, b: f64, attribute_name: impl Into<String>, train: &DMatrix<f64>) -> Result<Self> {
        let attribute_name = attribute_name.into();
        let norm = w.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(UneError::DegenerateDirection(format!(
                "direction for '{attribute_name}' has zero norm"
            )));
        }
        check_dim(train.ncols(), w.len())?;
        let margin_std = margin_spread(&w, b, train)?;
        Ok(Self {
            w,
            b,
            attribute_name,
            margin_std,
            orthogonal_to: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn score(&self, z: &DVector<f64>) -> f64 {
        self.w.dot(z) + self.b
    }

    pub fn signed_distance(&self, z: &DVector<f64>) -> f64 {
        self.score(z) / self.w.norm()
    }

    /// Signed distance in units of `margin_std`.
    pub fn intensity(&self, z: &DVector<f64>) -> f64 {
        self.signed_distance(z) / self.margin_std
    }
}

fn check_dim(got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(UneError::Shape(format!(
            "latent dimension {got} does not match direction dimension {want}"
        )));
    }
    Ok(())
}

fn margin_spread(w: &DVector<f64>, b: f64, train: &DMatrix<f64>) -> Result<f64> {
    let n = train.nrows();
    if n < 2 {
        return Err(UneError::InsufficientData(
            "margin spread needs at least 2 training rows".into(),
        ));
    }
    let norm = w.norm();
    let d = (train * w).map(|s| (s + b) / norm);
    let mean = d.sum() / n as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(UneError::DegenerateDirection(
            "signed distances are constant on the training split".into(),
        ));
    }
    Ok(sd)
}

/// Pulls the probe's classifier for `attribute` back to raw latent space.
pub fn direction_from_probe(probe: &LinearProbe, attribute: &str, train: &LatentMatrix) -> Result<SemanticDirection> {
    let a = probe.attribute_index(attribute)?;
    if probe.is_skipped(a) {
        return Err(UneError::DegenerateDirection(format!(
            "attribute '{attribute}' was constant during training and has no classifier"
        )));
    }
    check_dim(train.ncols(), probe.input_dim())?;
    let (w, b) = probe.raw_direction(a);
    SemanticDirection::new(w, b, attribute, train.data())
}

/// `z + alpha * w`
pub fn edit(z: &DVector<f64>, dir: &SemanticDirection, alpha: f64) -> Result<DVector<f64>> {
    check_dim(z.len(), dir.dim())?;
    Ok(z + &dir.w * alpha)
}

/// Moves `z` along `w` until its signed distance equals `t * margin_std`.
pub fn edit_to_intensity(z: &DVector<f64>, dir: &SemanticDirection, t: f64) -> Result<DVector<f64>> {
    check_dim(z.len(), dir.dim())?;
    let norm = dir.w.norm();
    if !(norm > 0.0) {
        return Err(UneError::DegenerateDirection("zero edit direction".into()));
    }
    let alpha = (t * dir.margin_std - dir.signed_distance(z)) / norm;
    Ok(z + &dir.w * alpha)
}

/// Applies [`edit_to_intensity`] to every row.
pub fn edit_rows_to_intensity(latents: &DMatrix<f64>, dir: &SemanticDirection, t: f64) -> Result<DMatrix<f64>> {
    check_dim(latents.ncols(), dir.dim())?;
    let rows: Vec<DVector<f64>> = (0..latents.nrows())
        .into_par_iter()
        .map(|i| edit_to_intensity(&latents.row(i).transpose(), dir, t))
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(latents.nrows(), latents.ncols(), |i, j| rows[i][j]))
}

/// Removes the `spurious` component from `target`'s direction. The new plane
/// keeps the score of the training mean, and `margin_std` is re-measured on `train`.
pub fn orthogonalize(
    target: &SemanticDirection,
    spurious: &SemanticDirection,
    train: &DMatrix<f64>,
) -> Result<SemanticDirection> {
    orthogonalize_many(target, &[spurious], train)
}

/// Gram-Schmidt against an orthonormalized set of spurious directions.
pub fn orthogonalize_many(
    target: &SemanticDirection,
    spurious: &[&SemanticDirection],
    train: &DMatrix<f64>,
) -> Result<SemanticDirection> {
    check_dim(train.ncols(), target.dim())?;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for s in spurious {
        check_dim(s.dim(), target.dim())?;
        let norm = s.w.norm();
        if !(norm > 0.0) {
            return Err(UneError::DegenerateDirection(format!(
                "spurious direction '{}' has zero norm",
                s.attribute_name
            )));
        }
        let mut v = s.w.clone();
        for _ in 0..2 {
            for q in &basis {
                v -= q * q.dot(&v);
            }
        }
        let vn = v.norm();
        // linearly dependent spurious directions add nothing
        if vn > DEGENERATE_REL_TOL * norm {
            basis.push(v / vn);
        }
    }
    let mut w = target.w.clone();
    for _ in 0..2 {
        for q in &basis {
            let c = q.dot(&w);
            if c != 0.0 {
                w -= q * c;
            }
        }
    }
    if !(w.norm() > DEGENERATE_REL_TOL * target.w.norm()) {
        return Err(UneError::DegenerateDirection(format!(
            "'{}' lies in the span of the spurious directions",
            target.attribute_name
        )));
    }
    let n = train.nrows() as f64;
    let train_mean = DVector::from_iterator(train.ncols(), train.column_iter().map(|c| c.sum() / n));
    let b = target.score(&train_mean) - w.dot(&train_mean);
    let mut out = SemanticDirection::new(w, b, target.attribute_name.clone(), train)?;
    out.orthogonal_to = target.orthogonal_to.clone();
    for s in spurious {
        if !out.orthogonal_to.contains(&s.attribute_name) {
            out.orthogonal_to.push(s.attribute_name.clone());
        }
    }
    Ok(out)
}
