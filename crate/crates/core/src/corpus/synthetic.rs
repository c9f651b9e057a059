//! Planted-event toy corpus.
//!
//! Every video is Gaussian background noise with one contiguous event. While
//! the event is on, the channel block owned by its (verb, noun) pair is lifted
//! by a fixed amplitude. The query is a templated sentence naming the pair and
//! the gold interval is exactly the planted span.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    write_annotations, write_features, GroundingSample, Interval, VideoFeatures, DEFAULT_FPS,
};
use crate::error::{Error, Result};
use crate::simplify::BUNDLED_LEXICON;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSpec {
    /// Verb lemma, e.g. `open`.
    pub verb: String,
    pub noun: String,
}

impl EventSpec {
    pub fn new(verb: &str, noun: &str) -> Self {
        Self {
            verb: verb.into(),
            noun: noun.into(),
        }
    }

    fn third_person(&self) -> String {
        let v = &self.verb;
        if ["s", "sh", "ch", "x", "o"].iter().any(|s| v.ends_with(s)) {
            format!("{v}es")
        } else {
            format!("{v}s")
        }
    }

    fn gerund(&self) -> String {
        let v = &self.verb;
        match v.strip_suffix('e') {
            Some(stem) if !v.ends_with("ee") => format!("{stem}ing"),
            _ => format!("{v}ing"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_videos: usize,
    /// Frames per video.
    pub frames: usize,
    pub feature_dim: usize,
    pub events: Vec<EventSpec>,
    pub noise_scale: f64,
    pub amplitude: f64,
    pub event_min_frames: usize,
    pub event_max_frames: usize,
    pub fps: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let events = [
            ("open", "door"),
            ("close", "door"),
            ("hold", "bag"),
            ("pour", "glass"),
            ("take", "book"),
            ("wash", "cup"),
            ("eat", "sandwich"),
            ("fold", "towel"),
        ]
        .iter()
        .map(|(v, n)| EventSpec::new(v, n))
        .collect();
        Self {
            n_videos: 64,
            frames: 48,
            feature_dim: 16,
            events,
            noise_scale: 0.2,
            amplitude: 1.0,
            event_min_frames: 10,
            event_max_frames: 18,
            fps: DEFAULT_FPS,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_videos == 0 || self.frames == 0 || self.feature_dim == 0 {
            return Err(Error::Config(
                "n_videos, frames and feature_dim must be positive".into(),
            ));
        }
        if self.events.is_empty() {
            return Err(Error::Config("event vocabulary is empty".into()));
        }
        if self.feature_dim < self.events.len() {
            return Err(Error::Config(format!(
                "{} events need at least {} feature channels, got {}",
                self.events.len(),
                self.events.len(),
                self.feature_dim
            )));
        }
        if self.event_min_frames < 1 {
            return Err(Error::Config("events must span at least one frame".into()));
        }
        if self.event_min_frames > self.event_max_frames || self.event_max_frames > self.frames {
            return Err(Error::Config(format!(
                "event length range {}..={} does not fit {} frames",
                self.event_min_frames, self.event_max_frames, self.frames
            )));
        }
        if !(self.noise_scale >= 0.0 && self.fps > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Config(
                "noise_scale, amplitude and fps must be sane".into(),
            ));
        }
        Ok(())
    }

    /// Channels owned by event `k`: a disjoint block of `D / n_events` channels.
    pub fn channel_block(&self, event: usize) -> std::ops::Range<usize> {
        let width = self.feature_dim / self.events.len();
        event * width..(event + 1) * width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedEvent {
    pub event: usize,
    pub start_frame: usize,
    /// Exclusive.
    pub end_frame: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub videos: Vec<VideoFeatures>,
    pub samples: Vec<GroundingSample>,
    pub planted: Vec<PlantedEvent>,
}

#[derive(Debug, Clone)]
pub struct SyntheticFiles {
    pub feature_files: Vec<PathBuf>,
    pub annotations: PathBuf,
    pub lexicon: PathBuf,
}

const TEMPLATES: [&str; 4] = [
    "a person {3s} the {noun}.",
    "the person is {ing} a {noun}",
    "person {3s} a {noun}",
    "someone is {ing} the {noun}.",
];

/// Builds the dataset in memory. A pure function of `config` and `seed`.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<SyntheticDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, config.noise_scale).map_err(|e| Error::Config(e.to_string()))?;
    let duration = config.frames as f64 / config.fps;

    let mut videos = Vec::with_capacity(config.n_videos);
    let mut samples = Vec::with_capacity(config.n_videos);
    let mut planted = Vec::with_capacity(config.n_videos);
    for i in 0..config.n_videos {
        let event = i % config.events.len();
        let spec = &config.events[event];
        let len = rng.random_range(config.event_min_frames..=config.event_max_frames);
        let start = rng.random_range(0..=config.frames - len);
        let template = TEMPLATES[rng.random_range(0..TEMPLATES.len())];

        let mut frames = Array2::<f32>::zeros((config.frames, config.feature_dim));
        for v in frames.iter_mut() {
            *v = noise.sample(&mut rng) as f32;
        }
        for t in start..start + len {
            for c in config.channel_block(event) {
                frames[[t, c]] += config.amplitude as f32;
            }
        }

        let video_id = format!("syn{i:04}");
        let query = template
            .replace("{3s}", &spec.third_person())
            .replace("{ing}", &spec.gerund())
            .replace("{noun}", &spec.noun);
        let gold = Interval::new(start as f64 / config.fps, (start + len) as f64 / config.fps);
        samples.push(GroundingSample::new(&video_id, query, gold, duration)?);
        videos.push(VideoFeatures::new(video_id, frames, config.fps)?);
        planted.push(PlantedEvent {
            event,
            start_frame: start,
            end_frame: start + len,
        });
    }
    Ok(SyntheticDataset {
        config: config.clone(),
        videos,
        samples,
        planted,
    })
}

impl SyntheticDataset {
    /// Writes `features/<video_id>.evqf`, `annotations.jsonl` and `lexicon.tsv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<SyntheticFiles> {
        let dir = dir.as_ref();
        let feature_dir = dir.join("features");
        fs::create_dir_all(&feature_dir).map_err(|e| Error::io(&feature_dir, e))?;
        let mut feature_files = Vec::with_capacity(self.videos.len());
        for v in &self.videos {
            let path = feature_dir.join(format!("{}.evqf", v.video_id));
            write_features(&path, &v.frames)?;
            feature_files.push(path);
        }
        let annotations = dir.join("annotations.jsonl");
        write_annotations(&annotations, &self.samples)?;
        let lexicon = dir.join("lexicon.tsv");
        fs::write(&lexicon, BUNDLED_LEXICON).map_err(|e| Error::io(&lexicon, e))?;
        Ok(SyntheticFiles {
            feature_files,
            annotations,
            lexicon,
        })
    }
}
