//! Binary matrix container shared by external frame embeddings and the
//! feature/mel caches.
//!
//! Layout (little endian):
//! `b"HEDM"`, `u32` version, `u32` header length, header JSON
//! `{"utterance_id", "frame_rate", "dim"}`, `u64` row count, then
//! `rows * dim` `f32` values in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Matrix;

const MAGIC: &[u8; 4] = b"HEDM";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("not a matrix container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u32),
    #[error("corrupt container: {0}")]
    Corrupt(String),
    #[error("{utterance_id}: {frames} frames but audio implies {expected:.1} (tolerance 2)")]
    FrameCountMismatch {
        utterance_id: String,
        frames: usize,
        expected: f64,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixHeader {
    pub utterance_id: String,
    pub frame_rate: f64,
    pub dim: usize,
}

/// A frames x dim matrix with its header (e.g. an external SSL embedding).
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixFile {
    pub header: MatrixHeader,
    pub matrix: Matrix,
}

impl MatrixFile {
    pub fn new(utterance_id: impl Into<String>, frame_rate: f64, matrix: Matrix) -> Self {
        Self {
            header: MatrixHeader {
                utterance_id: utterance_id.into(),
                frame_rate,
                dim: matrix.cols(),
            },
            matrix,
        }
    }

    /// Frame count must match `duration * frame_rate` within two frames.
    pub fn check_duration(&self, duration_secs: f64) -> Result<(), ContainerError> {
        let expected = duration_secs * self.header.frame_rate;
        if (self.matrix.rows() as f64 - expected).abs() > 2.0 {
            return Err(ContainerError::FrameCountMismatch {
                utterance_id: self.header.utterance_id.clone(),
                frames: self.matrix.rows(),
                expected,
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + header.len() + self.matrix.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.matrix.rows() as u64).to_le_bytes());
        for &v in self.matrix.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self, ContainerError> {
        let mut magic = [0u8; 4];
        read_exact(&mut bytes, &mut magic)?;
        if &magic != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let version = read_u32(&mut bytes)?;
        if version != VERSION {
            return Err(ContainerError::Version(version));
        }
        let header_len = read_u32(&mut bytes)? as usize;
        let mut header = vec![0u8; header_len];
        read_exact(&mut bytes, &mut header)?;
        let header: MatrixHeader =
            serde_json::from_slice(&header).map_err(|e| ContainerError::Corrupt(e.to_string()))?;
        let mut rows = [0u8; 8];
        read_exact(&mut bytes, &mut rows)?;
        let rows = u64::from_le_bytes(rows) as usize;
        let n = rows
            .checked_mul(header.dim)
            .ok_or_else(|| ContainerError::Corrupt("row count overflow".into()))?;
        if bytes.len() != n * 4 {
            return Err(ContainerError::Corrupt(format!(
                "payload has {} bytes, expected {}",
                bytes.len(),
                n * 4
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(Self {
            matrix: Matrix::from_vec(rows, header.dim, data),
            header,
        })
    }
}

fn read_exact(src: &mut &[u8], buf: &mut [u8]) -> Result<(), ContainerError> {
    src.read_exact(buf)
        .map_err(|_| ContainerError::Corrupt("truncated container".into()))
}

fn read_u32(src: &mut &[u8]) -> Result<u32, ContainerError> {
    let mut b = [0u8; 4];
    read_exact(src, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_matrix_file(path: &Path, file: &MatrixFile) -> Result<(), ContainerError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&file.to_bytes())?;
    Ok(())
}

pub fn read_matrix_file(path: &Path) -> Result<MatrixFile, ContainerError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    MatrixFile::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let m = Matrix::from_fn(5, 3, |r, c| (r as f64) * 0.5 - c as f64);
        let f = MatrixFile::new("u1", 50.0, m);
        let bytes = f.to_bytes();
        assert_eq!(MatrixFile::from_bytes(&bytes).unwrap(), f);
        assert!(matches!(
            MatrixFile::from_bytes(&bytes[..bytes.len() - 2]),
            Err(ContainerError::Corrupt(_))
        ));
        assert!(matches!(
            MatrixFile::from_bytes(b"nope"),
            Err(ContainerError::BadMagic)
        ));
    }

    #[test]
    fn duration_check_allows_two_frames() {
        let f = MatrixFile::new("u1", 50.0, Matrix::zeros(52, 2));
        assert!(f.check_duration(1.0).is_ok());
        assert!(f.check_duration(0.9).is_err());
    }
}
