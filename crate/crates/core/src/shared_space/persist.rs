//! Shared-space directory: `x.lat1`, `projector_<i>.lat1` and a JSON sidecar.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::SharedSpace;
use crate::error::{Result, UneError};
use crate::latent_store::lat1::{load_matrix, save_matrix};

pub const SHARED_SIDECAR: &str = "shared.json";
const FORMAT: &str = "une-shared/1";

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format: String,
    k: usize,
    n: usize,
    source_model_ids: Vec<String>,
    x_file: String,
    projector_files: Vec<String>,
    view_means: Vec<Vec<f64>>,
    lambdas: Vec<f64>,
    eigenvalues: Vec<f64>,
    residual: f64,
    view_residuals: Vec<f64>,
    attained_rank: usize,
    rank_tol: f64,
    alternations: usize,
}

pub fn save_shared(space: &SharedSpace, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| UneError::io(dir, e))?;
    save_matrix(&space.x, dir.join("x.lat1"))?;
    let mut projector_files = Vec::new();
    for (i, a) in space.projectors.iter().enumerate() {
        let name = format!("projector_{i}.lat1");
        save_matrix(a, dir.join(&name))?;
        projector_files.push(name);
    }
    let sidecar = Sidecar {
        format: FORMAT.into(),
        k: space.k(),
        n: space.x.nrows(),
        source_model_ids: space.source_model_ids.clone(),
        x_file: "x.lat1".into(),
        projector_files,
        view_means: space
            .view_means
            .iter()
            .map(|m| m.iter().copied().collect())
            .collect(),
        lambdas: space.lambdas.clone(),
        eigenvalues: space.eigenvalues.clone(),
        residual: space.residual,
        view_residuals: space.view_residuals.clone(),
        attained_rank: space.attained_rank,
        rank_tol: space.rank_tol,
        alternations: space.alternations,
    };
    let path = dir.join(SHARED_SIDECAR);
    let text = serde_json::to_string_pretty(&sidecar)?;
    fs::write(&path, text + "\n").map_err(|e| UneError::io(&path, e))
}

pub fn load_shared(dir: impl AsRef<Path>) -> Result<SharedSpace> {
    let dir = dir.as_ref();
    let path = dir.join(SHARED_SIDECAR);
    let text = fs::read_to_string(&path).map_err(|e| UneError::io(&path, e))?;
    let s: Sidecar = serde_json::from_str(&text)?;
    if s.format != FORMAT {
        return Err(UneError::Format(format!("unknown shared-space format '{}'", s.format)));
    }
    let x = load_matrix(dir.join(&s.x_file))?;
    let projectors = s
        .projector_files
        .iter()
        .map(|f| load_matrix(dir.join(f)))
        .collect::<Result<Vec<_>>>()?;
    let m = projectors.len();
    let consistent = x.shape() == (s.n, s.k)
        && s.view_means.len() == m
        && s.source_model_ids.len() == m
        && projectors
            .iter()
            .zip(&s.view_means)
            .all(|(a, mu)| a.ncols() == s.k && a.nrows() == mu.len());
    if !consistent {
        return Err(UneError::Format(format!(
            "shared-space files in {} have inconsistent shapes",
            dir.display()
        )));
    }
    Ok(SharedSpace {
        x,
        projectors,
        view_means: s.view_means.into_iter().map(DVector::from_vec).collect(),
        lambdas: s.lambdas,
        source_model_ids: s.source_model_ids,
        eigenvalues: s.eigenvalues,
        residual: s.residual,
        view_residuals: s.view_residuals,
        attained_rank: s.attained_rank,
        rank_tol: s.rank_tol,
        alternations: s.alternations,
    })
}
