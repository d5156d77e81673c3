//! Synthetic ground truth: a standard-normal embedding `Z`, noisy linear views
//! `Z Cᵀ + σE`, planted linear attributes and non-Gaussian control distributions.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UneError};
use crate::gaussianity::random_unit_vector;
use crate::latent_store::{AttributeTable, LatentMatrix};

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    // filled row by row so that values do not depend on storage order
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UneConfig {
    pub dim: usize,
    pub n: usize,
    pub seed: u64,
}

/// `n x D` i.i.d. standard normal matrix.
pub fn sample_une(cfg: &UneConfig) -> Result<LatentMatrix> {
    if cfg.dim == 0 || cfg.n < 2 {
        return Err(UneError::Config(format!(
            "need D >= 1 and n >= 2, got D={} n={}",
            cfg.dim, cfg.n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    LatentMatrix::new(gaussian_matrix(cfg.n, cfg.dim, &mut rng), "une", "all")
}

/// How the `d x D` mixing matrix of a view is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingRecipe {
    Explicit(DMatrix<f64>),
    /// Entries i.i.d. `N(0, 1/D)`.
    Gaussian { dim: usize },
    /// Orthonormal rows when `dim <= D`, orthonormal columns otherwise.
    Orthonormal { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IneConfig {
    pub mixing: MixingRecipe,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Random `rows x cols` matrix with orthonormal rows (`rows <= cols`) or columns.
pub fn random_orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    if rows <= cols {
        let g = gaussian_matrix(cols, rows, rng);
        g.qr().q().transpose()
    } else {
        gaussian_matrix(rows, cols, rng).qr().q()
    }
}

pub fn mixing_matrix(recipe: &MixingRecipe, une_dim: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let c = match recipe {
        MixingRecipe::Explicit(c) => {
            if c.ncols() != une_dim {
                return Err(UneError::Shape(format!(
                    "mixing matrix has {} columns, embedding has dimension {une_dim}",
                    c.ncols()
                )));
            }
            c.clone()
        }
        MixingRecipe::Gaussian { dim } => gaussian_matrix(*dim, une_dim, rng) / (une_dim as f64).sqrt(),
        MixingRecipe::Orthonormal { dim } => random_orthonormal(*dim, une_dim, rng),
    };
    if c.nrows() == 0 || c.iter().any(|v| !v.is_finite()) {
        return Err(UneError::Config("mixing matrix must be non-empty and finite".into()));
    }
    Ok(c)
}

/// `Z Cᵀ + σE` where `E` is standard normal. `E` depends only on the seed, so
/// views built with different `σ` share one noise realization.
pub fn make_ine_with_mixing(une: &LatentMatrix, c: &DMatrix<f64>, noise_sigma: f64, noise_rng: &mut ChaCha8Rng) -> Result<LatentMatrix> {
    if c.ncols() != une.ncols() {
        return Err(UneError::Shape(format!(
            "mixing matrix has {} columns, embedding has dimension {}",
            c.ncols(),
            une.ncols()
        )));
    }
    if !(noise_sigma >= 0.0) {
        return Err(UneError::Config(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let mut out = une.data() * c.transpose();
    let e = gaussian_matrix(une.nrows(), c.nrows(), noise_rng);
    if noise_sigma > 0.0 {
        out += e * noise_sigma;
    }
    LatentMatrix::new(out, "ine", une.split_id())
}

pub fn make_ine(une: &LatentMatrix, cfg: &IneConfig) -> Result<LatentMatrix> {
    let c = mixing_matrix(&cfg.mixing, une.ncols(), &mut stream_rng(cfg.seed, 1))?;
    make_ine_with_mixing(une, &c, cfg.noise_sigma, &mut stream_rng(cfg.seed, 2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum AttributeKind {
    /// `1` where `uᵀz > 0`.
    Binary,
    /// `uᵀz + offset`.
    Continuous { offset: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedAttribute {
    pub name: String,
    /// Direction in the embedding space.
    pub u: DVector<f64>,
    pub kind: AttributeKind,
}

impl PlantedAttribute {
    pub fn new(name: impl Into<String>, u: DVector<f64>, kind: AttributeKind) -> Result<Self> {
        if !(u.norm() > 0.0) {
            return Err(UneError::DegenerateDirection("planted direction has zero norm".into()));
        }
        Ok(Self {
            name: name.into(),
            u,
            kind,
        })
    }

    pub fn values(&self, une: &LatentMatrix) -> Result<DVector<f64>> {
        if une.ncols() != self.u.len() {
            return Err(UneError::Shape(format!(
                "attribute direction has dimension {}, embedding has {}",
                self.u.len(),
                une.ncols()
            )));
        }
        let s = une.data() * &self.u;
        Ok(match self.kind {
            AttributeKind::Binary => s.map(|v| (v > 0.0) as u8 as f64),
            AttributeKind::Continuous { offset } => s.add_scalar(offset),
        })
    }
}

/// Binary attributes along random unit directions, named `attr_<j>`.
pub fn random_binary_attributes(une_dim: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<PlantedAttribute> {
    (0..count)
        .map(|j| PlantedAttribute {
            name: format!("attr_{j}"),
            u: random_unit_vector(une_dim, rng),
            kind: AttributeKind::Binary,
        })
        .collect()
}

/// Label table for the binary attributes in `planted`.
pub fn label_table(une: &LatentMatrix, planted: &[PlantedAttribute]) -> Result<AttributeTable> {
    let binary: Vec<&PlantedAttribute> = planted
        .iter()
        .filter(|p| matches!(p.kind, AttributeKind::Binary))
        .collect();
    let cols = binary
        .iter()
        .map(|p| p.values(une))
        .collect::<Result<Vec<_>>>()?;
    let rows = (0..une.nrows())
        .map(|i| cols.iter().map(|c| c[i] as u8).collect())
        .collect();
    AttributeTable::new(binary.iter().map(|p| p.name.clone()).collect(), rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ControlKind {
    /// One random point repeated `n` times.
    Delta,
    /// Uniform unit-variance cube in `rank` dimensions, embedded by a random
    /// orthonormal map.
    UniformLowdim { rank: usize },
    /// Equal mixture of `N(±mu·√d·e, I_d)` along a random unit direction `e`.
    /// The √d factor keeps the modes apart after projecting onto a random
    /// unit direction, whose overlap with `e` is of order `1/√d`.
    Bimodal { mu: f64 },
}

impl ControlKind {
    /// Parses `delta`, `uniform_lowdim[:rank]` or `bimodal[:mu]`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, param) = match spec.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (spec, None),
        };
        let num = |default: f64| -> Result<f64> {
            match param {
                None => Ok(default),
                Some(p) => p
                    .parse::<f64>()
                    .map_err(|_| UneError::Config(format!("bad control parameter '{p}'"))),
            }
        };
        match name {
            "delta" if param.is_none() => Ok(ControlKind::Delta),
            "uniform_lowdim" | "uniform" => {
                let r = num(5.0)?;
                if r < 1.0 || r.fract() != 0.0 {
                    return Err(UneError::Config(format!("uniform rank must be a positive integer, got {r}")));
                }
                Ok(ControlKind::UniformLowdim { rank: r as usize })
            }
            "bimodal" => Ok(ControlKind::Bimodal { mu: num(4.0)? }),
            _ => Err(UneError::Config(format!("unknown control distribution '{spec}'"))),
        }
    }
}

pub fn control_distribution(kind: ControlKind, n: usize, d: usize, seed: u64) -> Result<LatentMatrix> {
    if n == 0 || d == 0 {
        return Err(UneError::Config(format!("need n, d >= 1, got n={n} d={d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = match kind {
        ControlKind::Delta => {
            let point: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            DMatrix::from_fn(n, d, |_, j| point[j])
        }
        ControlKind::UniformLowdim { rank } => {
            if rank == 0 || rank > d {
                return Err(UneError::Config(format!("uniform rank {rank} must be in 1..={d}")));
            }
            let half = 3f64.sqrt();
            let mut cube = DMatrix::zeros(n, rank);
            for i in 0..n {
                for j in 0..rank {
                    cube[(i, j)] = rng.random_range(-half..half);
                }
            }
            cube * random_orthonormal(rank, d, &mut rng)
        }
        ControlKind::Bimodal { mu } => {
            if !(mu >= 0.0) || !mu.is_finite() {
                return Err(UneError::Config(format!("bimodal separation must be >= 0, got {mu}")));
            }
            let e = random_unit_vector(d, &mut rng) * (mu * (d as f64).sqrt());
            let mut m = gaussian_matrix(n, d, &mut rng);
            for i in 0..n {
                let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                for j in 0..d {
                    m[(i, j)] += s * e[j];
                }
            }
            m
        }
    };
    LatentMatrix::new(data, "control", "all")
}

/// Parameters of a complete synthetic dataset: one embedding, several views and
/// planted binary attributes, with a train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub une_dim: usize,
    pub view_dims: Vec<usize>,
    pub n: usize,
    pub n_attributes: usize,
    pub train_fraction: f64,
    pub noise_sigma: f64,
    pub orthonormal_mixing: bool,
    pub seed: u64,
}

impl OracleConfig {
    /// D=16, views of width 32, 64 and 64, n=2000, 8 attributes, 80/20 split.
    pub fn oracle_default(noise_sigma: f64, seed: u64) -> Self {
        Self {
            une_dim: 16,
            view_dims: vec![32, 64, 64],
            n: 2000,
            n_attributes: 8,
            train_fraction: 0.8,
            noise_sigma,
            orthonormal_mixing: false,
            seed,
        }
    }

    /// Noise levels swept by the oracle experiments.
    pub const SIGMA_GRID: [f64; 4] = [0.0, 0.1, 0.5, 1.0];
}

#[derive(Debug, Clone)]
pub struct OracleDataset {
    pub config: OracleConfig,
    pub une: LatentMatrix,
    /// `d_i x D`
    pub mixing: Vec<DMatrix<f64>>,
    /// Full (all rows) views, ids `ine_<i>`.
    pub views: Vec<LatentMatrix>,
    pub planted: Vec<PlantedAttribute>,
    pub attributes: AttributeTable,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Ground truth written next to simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: OracleConfig,
    /// Row-major `d_i x D` mixing matrices.
    pub mixing: Vec<Vec<Vec<f64>>>,
    pub attributes: Vec<GroundTruthAttribute>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthAttribute {
    pub name: String,
    pub u: Vec<f64>,
}

impl OracleDataset {
    pub fn view_id(i: usize) -> String {
        format!("ine_{i}")
    }

    pub fn train_view(&self, i: usize) -> Result<LatentMatrix> {
        self.views[i].select_rows(&self.train_indices, "train")
    }

    pub fn test_view(&self, i: usize) -> Result<LatentMatrix> {
        self.views[i].select_rows(&self.test_indices, "test")
    }

    pub fn train_attrs(&self) -> Result<AttributeTable> {
        self.attributes.select_rows(&self.train_indices)
    }

    pub fn test_attrs(&self) -> Result<AttributeTable> {
        self.attributes.select_rows(&self.test_indices)
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            config: self.config.clone(),
            mixing: self
                .mixing
                .iter()
                .map(|c| c.row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect(),
            attributes: self
                .planted
                .iter()
                .map(|p| GroundTruthAttribute {
                    name: p.name.clone(),
                    u: p.u.iter().copied().collect(),
                })
                .collect(),
        }
    }
}

/// Builds the dataset. The embedding, mixing matrices, attributes, split and
/// noise realizations depend only on the seed, so datasets that differ only in
/// `noise_sigma` are nested.
pub fn build_oracle(cfg: &OracleConfig) -> Result<OracleDataset> {
    if cfg.view_dims.is_empty() || cfg.view_dims.contains(&0) {
        return Err(UneError::Config("oracle needs at least one view of positive width".into()));
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(UneError::Config(format!(
            "train fraction must be in (0, 1), got {}",
            cfg.train_fraction
        )));
    }
    let une = sample_une(&UneConfig {
        dim: cfg.une_dim,
        n: cfg.n,
        seed: cfg.seed,
    })?;
    let planted = random_binary_attributes(cfg.une_dim, cfg.n_attributes, &mut stream_rng(cfg.seed, 2));
    let attributes = label_table(&une, &planted)?;

    let mut order: Vec<usize> = (0..cfg.n).collect();
    order.shuffle(&mut stream_rng(cfg.seed, 1));
    let n_train = ((cfg.n as f64) * cfg.train_fraction).round() as usize;
    if n_train < 2 || n_train >= cfg.n {
        return Err(UneError::Config(format!("split leaves {n_train} of {} rows for training", cfg.n)));
    }
    let mut train_indices = order[..n_train].to_vec();
    let mut test_indices = order[n_train..].to_vec();
    train_indices.sort_unstable();
    test_indices.sort_unstable();

    let mut mixing = Vec::new();
    let mut views = Vec::new();
    for (i, &dim) in cfg.view_dims.iter().enumerate() {
        let recipe = if cfg.orthonormal_mixing {
            MixingRecipe::Orthonormal { dim }
        } else {
            MixingRecipe::Gaussian { dim }
        };
        let c = mixing_matrix(&recipe, cfg.une_dim, &mut stream_rng(cfg.seed, 100 + i as u64))?;
        let view = make_ine_with_mixing(&une, &c, cfg.noise_sigma, &mut stream_rng(cfg.seed, 200 + i as u64))?
            .with_ids(OracleDataset::view_id(i), "all");
        mixing.push(c);
        views.push(view);
    }
    Ok(OracleDataset {
        config: cfg.clone(),
        une,
        mixing,
        views,
        planted,
        attributes,
        train_indices,
        test_indices,
    })
}
