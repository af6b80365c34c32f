//! Binary feature cache: one MFCC matrix per file, little-endian.
//!
//! ```text
//! "CMFC" | u32 version | u32 n_mfcc | u32 n_frames
//! | n_mfcc*n_frames f64 (row-major) | u32 id_len | id bytes (UTF-8)
//! ```

use std::io::{Read, Write};

use super::{FeatureError, FeatureMatrix};

pub const CACHE_MAGIC: &[u8; 4] = b"CMFC";
pub const CACHE_VERSION: u32 = 1;

pub fn write_feature_file<W: Write>(mut w: W, m: &FeatureMatrix) -> Result<(), FeatureError> {
    let mut buf = Vec::with_capacity(20 + 8 * m.coefficients.len() + m.source_id.len());
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(m.n_mfcc as u32).to_le_bytes());
    buf.extend_from_slice(&(m.n_frames as u32).to_le_bytes());
    for v in &m.coefficients {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(m.source_id.len() as u32).to_le_bytes());
    buf.extend_from_slice(m.source_id.as_bytes());
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, FeatureError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> FeatureError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        FeatureError::Format("truncated file".into())
    } else {
        FeatureError::Io(e)
    }
}

pub fn read_feature_file<R: Read>(mut r: R) -> Result<FeatureMatrix, FeatureError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != CACHE_MAGIC {
        return Err(FeatureError::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != CACHE_VERSION {
        return Err(FeatureError::Format(format!("unsupported version {version}")));
    }
    let n_mfcc = read_u32(&mut r)? as usize;
    let n_frames = read_u32(&mut r)? as usize;
    let count = n_mfcc
        .checked_mul(n_frames)
        .filter(|&c| c <= 1 << 28)
        .ok_or_else(|| FeatureError::Format("matrix dimensions overflow".into()))?;
    let mut raw = vec![0u8; count * 8];
    r.read_exact(&mut raw).map_err(truncated)?;
    let coefficients = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    let id_len = read_u32(&mut r)? as usize;
    let mut id = vec![0u8; id_len];
    r.read_exact(&mut id).map_err(truncated)?;
    let source_id = String::from_utf8(id).map_err(|_| FeatureError::Format("source id is not UTF-8".into()))?;
    Ok(FeatureMatrix { n_mfcc, n_frames, coefficients, source_id })
}
