//! EVQF feature files: `"EVQF"`, `u32` LE frame count, `u32` LE feature dim,
//! then `T * D` little-endian `f32` values in frame-major order.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::VideoFeatures;
use crate::error::{Error, Result};

pub const EVQF_MAGIC: &[u8; 4] = b"EVQF";
const HEADER_LEN: usize = 12;

pub fn encode_evqf(frames: &Array2<f32>) -> Vec<u8> {
    let (t, d) = frames.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + t * d * 4);
    out.extend_from_slice(EVQF_MAGIC);
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for v in frames.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_evqf(bytes: &[u8]) -> Result<Array2<f32>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "EVQF header needs {HEADER_LEN} bytes, found {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != EVQF_MAGIC {
        return Err(Error::Format(format!("bad magic bytes {:?}", &bytes[..4])));
    }
    let t = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    let expected = t
        .checked_mul(d)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("header dimensions {t}x{d} overflow")))?;
    if payload.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((t, d), values).map_err(|e| Error::Format(e.to_string()))
}

/// Reads a feature file. The video id is the file stem.
pub fn load_features(path: impl AsRef<Path>, fps: f64) -> Result<VideoFeatures> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let frames = decode_evqf(&bytes)?;
    let video_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    VideoFeatures::new(video_id, frames, fps)
}

pub fn write_features(path: impl AsRef<Path>, frames: &Array2<f32>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_evqf(frames)).map_err(|e| Error::io(path, e))
}
