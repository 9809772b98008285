//! Binary dump of the four output maps.
//!
//! Layout: the 6-byte magic `MSCSP1`, `rows` and `cols` as little-endian
//! `u32`, then the `center`, `scale`, `offset_x` and `offset_y` planes as
//! little-endian `f32` in row-major order.

use std::path::Path;

use mscsp_core::{DetectionMaps, Grid};

use crate::error::IoError;

pub const MAGIC: &[u8; 6] = b"MSCSP1";
const HEADER_LEN: usize = 6 + 4 + 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DumpError {
    #[error("missing `MSCSP1` header")]
    BadMagic,
    #[error("truncated dump: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },
    #[error("maps do not share one shape")]
    Shape,
    #[error("map dimensions exceed the u32 range")]
    TooLarge,
}

/// Serializes `maps`; values are narrowed to `f32`.
pub fn encode_maps(maps: &DetectionMaps) -> Result<Vec<u8>, DumpError> {
    let (rows, cols) = maps.common_shape().map_err(|_| DumpError::Shape)?;
    let r = u32::try_from(rows).map_err(|_| DumpError::TooLarge)?;
    let c = u32::try_from(cols).map_err(|_| DumpError::TooLarge)?;
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * rows * cols);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&r.to_le_bytes());
    out.extend_from_slice(&c.to_le_bytes());
    for plane in [&maps.center, &maps.scale, &maps.offset_x, &maps.offset_y] {
        for &v in plane.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_maps(bytes: &[u8]) -> Result<DetectionMaps, DumpError> {
    if bytes.len() < HEADER_LEN {
        return Err(DumpError::Length {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..6] != MAGIC {
        return Err(DumpError::BadMagic);
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (rows, cols) = (word(6), word(10));
    let n = rows.checked_mul(cols).ok_or(DumpError::TooLarge)?;
    let expected = n
        .checked_mul(16)
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or(DumpError::TooLarge)?;
    if bytes.len() != expected {
        return Err(DumpError::Length {
            expected,
            found: bytes.len(),
        });
    }
    let mut planes = bytes[HEADER_LEN..].chunks_exact(4 * n.max(1)).map(|chunk| {
        let data = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        Grid::from_vec(rows, cols, data).expect("plane length checked")
    });
    if n == 0 {
        return Ok(DetectionMaps::zeros(rows, cols));
    }
    let mut next = || planes.next().expect("four planes");
    Ok(DetectionMaps {
        center: next(),
        scale: next(),
        offset_x: next(),
        offset_y: next(),
    })
}

pub fn write_maps(path: &Path, maps: &DetectionMaps) -> Result<(), IoError> {
    let bytes = encode_maps(maps).map_err(|e| IoError::format(path, e.to_string()))?;
    crate::error::write(path, bytes)
}

pub fn read_maps(path: &Path) -> Result<DetectionMaps, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode_maps(&bytes).map_err(|e| IoError::format(path, e.to_string()))
}
