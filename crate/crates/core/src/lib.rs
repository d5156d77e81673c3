//! Numerical toolkit for studying latent spaces as noisy linear views of a
//! shared standard-normal embedding.
//!
//! The modules follow the data flow: [`latent_store`] reads and writes latent
//! matrices, [`gaussianity`] tests them for normality along random directions,
//! [`probing`] fits linear attribute classifiers, [`transfer`] maps one space
//! onto another, [`shared_space`] recovers a common subspace across several
//! spaces, [`editing`] moves latents along classifier normals, and
//! [`synthetic`] generates data with known ground truth for all of the above.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod editing;
pub mod error;
pub mod gaussianity;
pub mod latent_store;
pub mod linalg;
pub mod probing;
pub mod report;
pub mod shared_space;
pub mod synthetic;
pub mod transfer;

pub use error::{Result, UneError};
pub use latent_store::LatentMatrix;
