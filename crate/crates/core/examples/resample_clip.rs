//! Maps a time interval to frames and resamples it to a fixed-length clip.
//!
//!     cargo run --example resample_clip -- 5.97 7.0

use groundloop::corpus::{Interval, VideoFeatures};
use groundloop::resampler::{clip_for_interval, interval_to_frames, resample_indices, CLIP_FRAMES};
use ndarray::Array2;

fn main() -> groundloop::Result<()> {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<f64>().expect("seconds"));
    let start = args.next().unwrap_or(5.97);
    let end = args.next().unwrap_or(7.0);

    let fps = 24.0;
    let frames = Array2::from_shape_fn((480, 4), |(i, j)| (i as f32 / 10.0).sin() + j as f32);
    let video = VideoFeatures::new("demo", frames, fps)?;
    let interval = Interval::new(start, end);

    let (s, e) = interval_to_frames(interval, fps, video.num_frames())?;
    println!(
        "[{start}, {end}] s at {fps} fps -> frames [{s}, {e}) ({} frames)",
        e - s
    );
    let clip = clip_for_interval(&video, interval)?;
    println!("{CLIP_FRAMES} sampled indices: {:?}", clip.source_indices);
    println!("clip shape {:?}", clip.frames.dim());

    for len in [16, 32, 64, 100] {
        let offsets: Vec<usize> = resample_indices(0, len, CLIP_FRAMES)
            .into_iter()
            .take(8)
            .collect();
        println!("L={len:>3}: first offsets {offsets:?}");
    }
    Ok(())
}
