//! On-disk probe layout: a directory holding `weights.lat1` (`A x k`),
//! `components.lat1` (`k x d`) and a JSON sidecar with everything else.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{FitInfo, LinearProbe, PcaModel};
use crate::error::{Result, UneError};
use crate::latent_store::lat1::{load_matrix, save_matrix};
use crate::latent_store::StandardizeStats;

pub const PROBE_SIDECAR: &str = "probe.json";
const WEIGHTS_FILE: &str = "weights.lat1";
const COMPONENTS_FILE: &str = "components.lat1";
const FORMAT: &str = "une-probe/1";

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format: String,
    attribute_names: Vec<String>,
    biases: Vec<f64>,
    l2_lambda: f64,
    fit_info: Vec<Option<FitInfo>>,
    pca_mean: Vec<f64>,
    explained_variance: Vec<f64>,
    scaler_mean: Vec<f64>,
    scaler_std: Vec<f64>,
    weights_file: String,
    components_file: String,
}

/// Weights and components are stored as f32; the sidecar keeps full precision.
pub fn save_probe(probe: &LinearProbe, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| UneError::io(dir, e))?;
    save_matrix(&probe.weights, dir.join(WEIGHTS_FILE))?;
    save_matrix(&probe.pca.components, dir.join(COMPONENTS_FILE))?;
    let sidecar = Sidecar {
        format: FORMAT.into(),
        attribute_names: probe.attribute_names.clone(),
        biases: probe.biases.iter().copied().collect(),
        l2_lambda: probe.l2_lambda,
        fit_info: probe.fit_info.clone(),
        pca_mean: probe.pca.mean.iter().copied().collect(),
        explained_variance: probe.pca.explained_variance.iter().copied().collect(),
        scaler_mean: probe.scaler.mean.iter().copied().collect(),
        scaler_std: probe.scaler.std.iter().copied().collect(),
        weights_file: WEIGHTS_FILE.into(),
        components_file: COMPONENTS_FILE.into(),
    };
    let path = dir.join(PROBE_SIDECAR);
    let text = serde_json::to_string_pretty(&sidecar)?;
    fs::write(&path, text + "\n").map_err(|e| UneError::io(&path, e))
}

pub fn load_probe(dir: impl AsRef<Path>) -> Result<LinearProbe> {
    let dir = dir.as_ref();
    let path = dir.join(PROBE_SIDECAR);
    let text = fs::read_to_string(&path).map_err(|e| UneError::io(&path, e))?;
    let s: Sidecar = serde_json::from_str(&text)?;
    if s.format != FORMAT {
        return Err(UneError::Format(format!("unknown probe format '{}'", s.format)));
    }
    let weights = load_matrix(dir.join(&s.weights_file))?;
    let components = load_matrix(dir.join(&s.components_file))?;
    let (a, k, d) = (s.attribute_names.len(), components.nrows(), components.ncols());
    let consistent = weights.shape() == (a, k)
        && s.biases.len() == a
        && s.fit_info.len() == a
        && s.pca_mean.len() == d
        && s.explained_variance.len() == k
        && s.scaler_mean.len() == k
        && s.scaler_std.len() == k;
    if !consistent {
        return Err(UneError::Format(format!(
            "probe files in {} have inconsistent shapes",
            dir.display()
        )));
    }
    Ok(LinearProbe {
        attribute_names: s.attribute_names,
        weights,
        biases: DVector::from_vec(s.biases),
        pca: PcaModel {
            mean: DVector::from_vec(s.pca_mean),
            components,
            explained_variance: DVector::from_vec(s.explained_variance),
        },
        scaler: StandardizeStats {
            mean: DVector::from_vec(s.scaler_mean),
            std: DVector::from_vec(s.scaler_std),
        },
        l2_lambda: s.l2_lambda,
        fit_info: s.fit_info,
    })
}
