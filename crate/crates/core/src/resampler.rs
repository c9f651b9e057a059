//! Fixed-length clip extraction from a predicted interval.
//!
//! Frames are sliced from the precomputed per-frame features of the
//! untrimmed video; no gradient flows back through the index selection.

use ndarray::Array2;

use crate::corpus::{Interval, VideoFeatures};
use crate::error::{Error, Result};

/// Number of frames handed to the translator.
pub const CLIP_FRAMES: usize = 32;

/// Seconds to frame positions are rounded after nudging by this much, so that
/// values like `0.5 * 24 = 11.999999999` still land on frame 12.
const FRAME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatures {
    /// `CLIP_FRAMES x D`.
    pub frames: Array2<f32>,
    pub source_indices: Vec<usize>,
}

/// Frame range `[start_frame, end_frame)` covered by `interval`, always at
/// least one frame wide and inside `[0, total_frames]`.
pub fn interval_to_frames(
    interval: Interval,
    fps: f64,
    total_frames: usize,
) -> Result<(usize, usize)> {
    if total_frames == 0 {
        return Err(Error::Validation("video has no frames".into()));
    }
    if !(fps > 0.0) || !fps.is_finite() {
        return Err(Error::Validation(format!(
            "fps must be positive, got {fps}"
        )));
    }
    if !(interval.start.is_finite() && interval.end.is_finite()) || interval.start > interval.end {
        return Err(Error::Validation(format!("invalid interval {interval:?}")));
    }
    let start = (interval.start * fps + FRAME_EPS).floor().max(0.0) as usize;
    let start = start.min(total_frames - 1);
    let end = (interval.end * fps - FRAME_EPS).ceil().max(0.0) as usize;
    let end = end.min(total_frames).max(start + 1);
    Ok((start, end))
}

/// `source_indices[i] = start_frame + floor(i * L / n)` with `L = end - start`.
pub fn resample_indices(start_frame: usize, end_frame: usize, n: usize) -> Vec<usize> {
    let len = (end_frame - start_frame) as u128;
    (0..n)
        .map(|i| start_frame + (i as u128 * len / n as u128) as usize)
        .collect()
}

pub fn resample_n(
    video: &VideoFeatures,
    start_frame: usize,
    end_frame: usize,
    n: usize,
) -> Result<ClipFeatures> {
    let total = video.num_frames();
    if start_frame >= end_frame || end_frame > total {
        return Err(Error::Validation(format!(
            "frame range [{start_frame}, {end_frame}) outside video of {total} frames"
        )));
    }
    let source_indices = resample_indices(start_frame, end_frame, n);
    let frames = video.frames.select(ndarray::Axis(0), &source_indices);
    Ok(ClipFeatures {
        frames,
        source_indices,
    })
}

pub fn resample32(
    video: &VideoFeatures,
    start_frame: usize,
    end_frame: usize,
) -> Result<ClipFeatures> {
    resample_n(video, start_frame, end_frame, CLIP_FRAMES)
}

/// Interval in seconds straight to a clip.
pub fn clip_for_interval(video: &VideoFeatures, interval: Interval) -> Result<ClipFeatures> {
    let (s, e) = interval_to_frames(interval, video.fps, video.num_frames())?;
    resample32(video, s, e)
}
