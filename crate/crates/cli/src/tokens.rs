//! OTKN token files: a 24-byte little-endian header followed by the row-major
//! payload.
//!
//! | offset | size | field                      |
//! |--------|------|----------------------------|
//! | 0      | 4    | magic `OTKN`               |
//! | 4      | 2    | version (1)                |
//! | 6      | 1    | dtype (0 = f32, 1 = f64)   |
//! | 7      | 1    | flags (0)                  |
//! | 8      | 8    | rows                       |
//! | 16     | 8    | cols                       |

use std::fs;
use std::path::Path;

use orthofilt_core::Matrix;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const MAGIC: [u8; 4] = *b"OTKN";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("byte {offset}: {detail}")]
pub struct FormatError {
    pub offset: u64,
    pub detail: String,
}

fn fail<T>(offset: usize, detail: impl Into<String>) -> Result<T, FormatError> {
    Err(FormatError {
        offset: offset as u64,
        detail: detail.into(),
    })
}

pub fn encode(m: &Matrix, dtype: Dtype) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.as_slice().len() * dtype.width());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(dtype.code());
    out.push(0);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for (i, &v) in m.as_slice().iter().enumerate() {
        match dtype {
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
            Dtype::F32 => {
                let q = v as f32;
                if !q.is_finite() {
                    return fail(HEADER_LEN + 4 * i, format!("value {v} overflows f32"));
                }
                out.extend_from_slice(&q.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(Matrix, Dtype), FormatError> {
    if bytes.len() < HEADER_LEN {
        return fail(
            bytes.len(),
            format!("truncated header: expected {HEADER_LEN} bytes, found {}", bytes.len()),
        );
    }
    if bytes[0..4] != MAGIC {
        return fail(0, format!("bad magic {:?}, expected \"OTKN\"", &bytes[0..4]));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return fail(4, format!("unsupported version {version}, expected {VERSION}"));
    }
    let dtype = match bytes[6] {
        0 => Dtype::F32,
        1 => Dtype::F64,
        other => return fail(6, format!("unknown dtype code {other}")),
    };
    if bytes[7] != 0 {
        return fail(7, format!("reserved flags byte is {}, expected 0", bytes[7]));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"));
    let (rows, cols) = (word(8), word(16));
    if rows == 0 || cols == 0 {
        return fail(8, format!("empty matrix {rows}x{cols}"));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.width() as u64))
        .ok_or_else(|| FormatError {
            offset: 8,
            detail: format!("payload size of {rows}x{cols} overflows"),
        })?;
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if expected != actual {
        return fail(
            HEADER_LEN,
            format!("payload length mismatch: expected {expected} bytes, found {actual}"),
        );
    }
    let payload = &bytes[HEADER_LEN..];
    let mut data = Vec::with_capacity((rows * cols) as usize);
    for (i, chunk) in payload.chunks_exact(dtype.width()).enumerate() {
        let v = match dtype {
            Dtype::F32 => f32::from_le_bytes(chunk.try_into().expect("4-byte chunk")) as f64,
            Dtype::F64 => f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")),
        };
        if !v.is_finite() {
            return fail(HEADER_LEN + i * dtype.width(), "non-finite value");
        }
        data.push(v);
    }
    let m = Matrix::new(rows as usize, cols as usize, data).map_err(|e| FormatError {
        offset: 8,
        detail: e.to_string(),
    })?;
    Ok((m, dtype))
}

pub fn read_tokens(path: &Path) -> CliResult<(Matrix, Dtype)> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|e| CliError::Format {
        path: path.display().to_string(),
        offset: e.offset,
        detail: e.detail,
    })
}

pub fn write_tokens(path: &Path, m: &Matrix, dtype: Dtype) -> CliResult<()> {
    let bytes = encode(m, dtype).map_err(|e| CliError::Format {
        path: path.display().to_string(),
        offset: e.offset,
        detail: e.detail,
    })?;
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
