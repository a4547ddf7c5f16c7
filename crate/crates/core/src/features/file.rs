//! Binary feature file: `"SBFT" | version u32 | kind u8 | stacked u8 |
//! reserved u16 | frames u32 | dims u32 | frames x dims f32`, little-endian,
//! row-major.

use std::fs;
use std::path::Path;

use super::{FeatureError, FeatureKind, FeatureMatrix};

pub const FEATURE_MAGIC: &[u8; 4] = b"SBFT";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

/// Narrows to f32, keeping wrapped-phase kinds inside `[-pi, pi)`. The f32
/// nearest to pi lies above it, so both ends step one ulp inwards.
fn narrow(v: f64, wrapped: bool) -> f32 {
    use std::f64::consts::PI;
    let x = v as f32;
    let inside = f32::from_bits(std::f32::consts::PI.to_bits() - 1);
    if wrapped && x as f64 >= PI {
        return inside;
    }
    if wrapped && (x as f64) < -PI {
        return -inside;
    }
    x
}

pub fn encode_features(m: &FeatureMatrix) -> Result<Vec<u8>, FeatureError> {
    let frames = u32::try_from(m.n_frames()).map_err(|_| FeatureError::Format("too many frames".into()))?;
    let dims = u32::try_from(m.dims()).map_err(|_| FeatureError::Format("too many dims".into()))?;
    let wrapped = m.kind().is_wrapped_phase();
    let mut out = Vec::with_capacity(HEADER_LEN + m.values().len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.push(m.kind().code());
    out.push(m.is_stacked() as u8);
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&frames.to_le_bytes());
    out.extend_from_slice(&dims.to_le_bytes());
    for &v in m.values() {
        out.extend_from_slice(&narrow(v, wrapped).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix, FeatureError> {
    if bytes.len() < 4 || &bytes[..4] != FEATURE_MAGIC {
        return Err(FeatureError::Format("bad magic, not a feature file".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(FeatureError::Format(format!(
            "truncated header: {} of {HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != FEATURE_VERSION {
        return Err(FeatureError::Format(format!(
            "unsupported version {version}, expected {FEATURE_VERSION}"
        )));
    }
    let kind = FeatureKind::from_code(bytes[8])
        .ok_or_else(|| FeatureError::Format(format!("unknown kind code {}", bytes[8])))?;
    let stacked = match bytes[9] {
        0 => false,
        1 => true,
        other => return Err(FeatureError::Format(format!("bad stacked flag {other}"))),
    };
    let frames = u32_at(12) as usize;
    let dims = u32_at(16) as usize;
    let expected = frames
        .checked_mul(dims)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| FeatureError::Format("header dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(FeatureError::Format(format!(
            "truncated payload: header says {frames} x {dims} ({expected} bytes), found {} bytes",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    FeatureMatrix::new(kind, stacked, frames, dims, values)
}

pub fn write_features(path: impl AsRef<Path>, m: &FeatureMatrix) -> Result<(), FeatureError> {
    fs::write(path, encode_features(m)?)?;
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix, FeatureError> {
    decode_features(&fs::read(path)?)
}
