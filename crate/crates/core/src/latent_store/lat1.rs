//! LAT1 binary tensor format.
//!
//! Layout (little-endian):
//!
//! ```text
//! 0..4    magic  b"LAT1"
//! 4..8    u32    version (= 1)
//! 8..12   u32    rows
//! 12..16  u32    cols
//! 16..    f32    rows * cols values, row-major
//! ```
//!
//! Nothing follows the payload. Values are widened to `f64` on load.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use super::LatentMatrix;
use crate::error::{Result, UneError};

pub const MAGIC: &[u8; 4] = b"LAT1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lat1Header {
    pub rows: u32,
    pub cols: u32,
}

impl Lat1Header {
    pub fn payload_len(&self) -> u64 {
        self.rows as u64 * self.cols as u64 * 4
    }
}

pub fn decode_header(bytes: &[u8]) -> Result<Lat1Header> {
    if bytes.len() < HEADER_LEN {
        return Err(UneError::Format(format!(
            "file too short for LAT1 header ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(UneError::Format("bad magic, expected \"LAT1\"".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(UneError::Format(format!("unsupported LAT1 version {version}")));
    }
    let header = Lat1Header {
        rows: word(8),
        cols: word(12),
    };
    if header.rows == 0 || header.cols == 0 {
        return Err(UneError::Format(format!(
            "LAT1 shape must be non-empty, got {}x{}",
            header.rows, header.cols
        )));
    }
    Ok(header)
}

/// Decodes a complete LAT1 byte buffer into a row-major `f64` matrix.
pub fn decode(bytes: &[u8]) -> Result<DMatrix<f64>> {
    let header = decode_header(bytes)?;
    let found = (bytes.len() - HEADER_LEN) as u64;
    if found != header.payload_len() {
        return Err(UneError::Truncation {
            expected: header.payload_len(),
            found,
        });
    }
    let (rows, cols) = (header.rows as usize, header.cols as usize);
    let payload = &bytes[HEADER_LEN..];
    let mut out = DMatrix::zeros(rows, cols);
    for (idx, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(UneError::Data(format!(
                "non-finite value at row {}, column {}",
                idx / cols,
                idx % cols
            )));
        }
        out[(idx / cols, idx % cols)] = v as f64;
    }
    Ok(out)
}

/// Encodes a matrix as LAT1. Entries are narrowed to `f32`; anything that is
/// not finite after narrowing is rejected.
pub fn encode(data: &DMatrix<f64>) -> Result<Vec<u8>> {
    let (rows, cols) = data.shape();
    if rows == 0 || cols == 0 {
        return Err(UneError::Format("cannot encode an empty matrix".into()));
    }
    let rows32 = u32::try_from(rows).map_err(|_| UneError::Format("too many rows".into()))?;
    let cols32 = u32::try_from(cols).map_err(|_| UneError::Format("too many columns".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&rows32.to_le_bytes());
    out.extend_from_slice(&cols32.to_le_bytes());
    for i in 0..rows {
        for j in 0..cols {
            let v = data[(i, j)] as f32;
            if !v.is_finite() {
                return Err(UneError::Data(format!(
                    "value at row {i}, column {j} is not representable as a finite f32"
                )));
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Loads a LAT1 file. The model id is taken from the file stem.
pub fn load_latents(path: impl AsRef<Path>) -> Result<LatentMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| UneError::io(path, e))?;
    let data = decode(&bytes)?;
    let model_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    LatentMatrix::new(data, model_id, "unspecified")
}

pub fn save_latents(m: &LatentMatrix, path: impl AsRef<Path>) -> Result<()> {
    save_matrix(m.data(), path)
}

/// Writes any finite matrix (probe weights, projectors, ...) as LAT1.
pub fn save_matrix(data: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(data)?;
    let mut file = fs::File::create(path).map_err(|e| UneError::io(path, e))?;
    file.write_all(&bytes).map_err(|e| UneError::io(path, e))?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| UneError::io(path, e))?;
    decode(&bytes)
}
