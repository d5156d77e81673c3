//! In-memory and on-disk data model for per-sample latent codes.
//!
//! A [`LatentMatrix`] holds one model's latents for one split, one row per
//! sample. Rows of matrices belonging to the same split are aligned by the
//! manifest's sample index, never by file order.

mod attributes;
pub mod lat1;
mod manifest;
mod standardize;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, UneError};

pub use attributes::AttributeTable;
pub use lat1::{load_latents, save_latents};
pub use manifest::{sha256_file, DatasetManifest, SplitPaths};
pub use standardize::{apply_standardize, fit_standardize, StandardizeStats, STD_FLOOR};

/// Dense `n x d` latent matrix (rows are samples) tagged with its model and split.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    data: DMatrix<f64>,
    model_id: String,
    split_id: String,
}

impl LatentMatrix {
    pub fn new(
        data: DMatrix<f64>,
        model_id: impl Into<String>,
        split_id: impl Into<String>,
    ) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(UneError::Format(format!(
                "latent matrix must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % data.nrows(), pos / data.nrows());
            return Err(UneError::Data(format!(
                "non-finite value at row {row}, column {col}"
            )));
        }
        Ok(Self {
            data,
            model_id: model_id.into(),
            split_id: split_id.into(),
        })
    }

    /// Builds a matrix from row-major values.
    pub fn from_row_slice(
        rows: usize,
        cols: usize,
        values: &[f64],
        model_id: impl Into<String>,
        split_id: impl Into<String>,
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(UneError::Shape(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                values.len()
            )));
        }
        Self::new(
            DMatrix::from_row_slice(rows, cols, values),
            model_id,
            split_id,
        )
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn split_id(&self) -> &str {
        &self.split_id
    }

    pub fn with_ids(mut self, model_id: impl Into<String>, split_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self.split_id = split_id.into();
        self
    }

    pub fn row_vector(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    /// Rows gathered in the order given by `indices`.
    pub fn select_rows(&self, indices: &[usize], split_id: impl Into<String>) -> Result<Self> {
        let n = self.nrows();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(UneError::Index { index: bad, len: n });
        }
        Self::new(
            self.data.select_rows(indices.iter()),
            self.model_id.clone(),
            split_id,
        )
    }
}

/// Splits `m` into (train, test) using the manifest's index lists, in manifest order.
pub fn split(m: &LatentMatrix, manifest: &DatasetManifest) -> Result<(LatentMatrix, LatentMatrix)> {
    let n = m.nrows();
    if let Some(&bad) = manifest
        .train_indices
        .iter()
        .chain(&manifest.test_indices)
        .find(|&&i| i >= n)
    {
        return Err(UneError::Index { index: bad, len: n });
    }
    manifest.validate_partition()?;
    let train = m.select_rows(&manifest.train_indices, "train")?;
    let test = m.select_rows(&manifest.test_indices, "test")?;
    Ok((train, test))
}
