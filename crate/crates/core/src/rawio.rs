//! Raw tensor files: four little-endian `u32` dims `[batch, channels, dim_x, dim_y]`
//! followed by interleaved little-endian `f32` (re, im) pairs.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::cgemm::ComplexMatrix;
use crate::spectral::{ComplexF32, SpectralTensor};

const HEADER_BYTES: usize = 16;

#[derive(Debug, Error)]
pub enum RawIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed raw tensor: {0}")]
    Format(String),
}

pub fn encode(dims: [usize; 4], data: &[ComplexF32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + data.len() * 8);
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<([usize; 4], Vec<ComplexF32>), RawIoError> {
    if bytes.len() < HEADER_BYTES {
        return Err(RawIoError::Format(format!(
            "{} bytes, header needs {HEADER_BYTES}",
            bytes.len()
        )));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let dims = [word(0), word(1), word(2), word(3)];
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| RawIoError::Format(format!("dims {dims:?} overflow")))?;
    let body = &bytes[HEADER_BYTES..];
    if Some(body.len()) != count.checked_mul(8) {
        return Err(RawIoError::Format(format!(
            "dims {dims:?} need {count} complex values, body has {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| {
            ComplexF32::new(
                f32::from_le_bytes(c[..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..].try_into().unwrap()),
            )
        })
        .collect();
    Ok((dims, data))
}

pub fn write_tensor(path: &Path, t: &SpectralTensor) -> Result<(), RawIoError> {
    fs::write(path, encode(t.shape(), t.data()))?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<SpectralTensor, RawIoError> {
    let (d, data) = decode(&fs::read(path)?)?;
    SpectralTensor::from_vec(d[0], d[1], d[2], d[3], data).map_err(|e| RawIoError::Format(e.to_string()))
}

/// Weights are stored with dims `[1, 1, output_dim, hidden_dim]`, which is
/// exactly the column-major `hidden_dim x output_dim` matrix.
pub fn write_weights(path: &Path, w: &ComplexMatrix) -> Result<(), RawIoError> {
    fs::write(path, encode([1, 1, w.cols, w.rows], w.data()))?;
    Ok(())
}

pub fn read_weights(path: &Path) -> Result<ComplexMatrix, RawIoError> {
    let (d, data) = decode(&fs::read(path)?)?;
    if d[0] != 1 || d[1] != 1 {
        return Err(RawIoError::Format(format!("weights dims {d:?}, expected [1, 1, N, H]")));
    }
    ComplexMatrix::from_col_major(d[3], d[2], data).map_err(|e| RawIoError::Format(e.to_string()))
}
