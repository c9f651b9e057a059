//! Samples, feature files, vocabularies and the synthetic dataset generator.

mod annotations;
mod evqf;
mod synthetic;
mod vocab;

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplify::SimplifiedQuery;

pub use annotations::{
    load_annotations, parse_annotations, write_annotations, AnnotationRecord, LineError,
    ParsedAnnotations,
};
pub use evqf::{decode_evqf, encode_evqf, load_features, write_features, EVQF_MAGIC};
pub use synthetic::{
    generate_synthetic, EventSpec, PlantedEvent, SyntheticConfig, SyntheticDataset, SyntheticFiles,
};
pub use vocab::{build_vocab, Vocabulary, EOS, PAD, RESERVED, SOS, UNK};

/// Frame rate assumed when a feature file does not say otherwise.
pub const DEFAULT_FPS: f64 = 24.0;

/// A time span in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Checks the invariants required of a gold annotation.
    pub fn validate_gold(&self, duration: f64) -> Result<()> {
        if !(self.start.is_finite() && self.end.is_finite() && duration.is_finite()) {
            return Err(Error::Validation("non-finite interval or duration".into()));
        }
        if self.start < 0.0 {
            return Err(Error::Validation(format!(
                "start {} is negative",
                self.start
            )));
        }
        if self.start >= self.end {
            return Err(Error::Validation(format!(
                "start {} is not before end {}",
                self.start, self.end
            )));
        }
        if self.end > duration {
            return Err(Error::Validation(format!(
                "end {} exceeds duration {}",
                self.end, duration
            )));
        }
        Ok(())
    }
}

/// Per-frame features of one untrimmed video, `T x D`, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeatures {
    pub video_id: String,
    pub frames: Array2<f32>,
    pub fps: f64,
}

impl VideoFeatures {
    pub fn new(video_id: impl Into<String>, frames: Array2<f32>, fps: f64) -> Result<Self> {
        let (t, d) = frames.dim();
        if t == 0 || d == 0 {
            return Err(Error::Validation(format!("empty feature matrix {t}x{d}")));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Validation(format!(
                "fps must be positive, got {fps}"
            )));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "feature matrix has non-finite entries".into(),
            ));
        }
        Ok(Self {
            video_id: video_id.into(),
            frames,
            fps,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn duration(&self) -> f64 {
        self.num_frames() as f64 / self.fps
    }
}

/// One query grounded in one video.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingSample {
    pub video_id: String,
    /// Raw query text as annotated.
    pub query: String,
    /// Lowercased tokens of `query`.
    pub tokens: Vec<String>,
    pub gold: Interval,
    pub duration: f64,
    pub simplified_gold: Option<SimplifiedQuery>,
}

impl GroundingSample {
    pub fn new(
        video_id: impl Into<String>,
        query: impl Into<String>,
        gold: Interval,
        duration: f64,
    ) -> Result<Self> {
        let query = query.into();
        let tokens = crate::simplify::tokenize(&query);
        if tokens.is_empty() {
            return Err(Error::Validation("query has no tokens".into()));
        }
        gold.validate_gold(duration)?;
        Ok(Self {
            video_id: video_id.into(),
            query,
            tokens,
            gold,
            duration,
            simplified_gold: None,
        })
    }

    /// Key used to align prediction and translation dumps.
    pub fn key(&self) -> (String, String) {
        (self.video_id.clone(), self.query.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::Test => "test",
        })
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub samples: Vec<GroundingSample>,
}

/// Train/valid/test proportions. They need not sum to one; they are normalised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitProportions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitProportions {
    fn default() -> Self {
        Self {
            train: 0.5,
            valid: 0.25,
            test: 0.25,
        }
    }
}

/// Splits samples by video so that all queries of a video land in the same
/// split. Videos are shuffled with `seed` before cutting.
pub fn split_dataset(
    samples: &[GroundingSample],
    proportions: SplitProportions,
    seed: u64,
) -> Result<[DatasetSplit; 3]> {
    let SplitProportions { train, valid, test } = proportions;
    let total = train + valid + test;
    if [train, valid, test]
        .iter()
        .any(|p| !(*p >= 0.0) || !p.is_finite())
        || total <= 0.0
    {
        return Err(Error::Config(format!(
            "invalid split proportions {proportions:?}"
        )));
    }
    let mut videos: Vec<&str> = samples
        .iter()
        .map(|s| s.video_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    videos.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n = videos.len();
    let n_train = ((train / total) * n as f64).round() as usize;
    let n_valid = (((train + valid) / total) * n as f64).round() as usize - n_train;
    let assign = |video: &str| -> SplitName {
        let pos = videos.iter().position(|v| *v == video).unwrap_or(0);
        if pos < n_train {
            SplitName::Train
        } else if pos < n_train + n_valid {
            SplitName::Valid
        } else {
            SplitName::Test
        }
    };

    let mut splits = [
        DatasetSplit {
            name: SplitName::Train,
            samples: Vec::new(),
        },
        DatasetSplit {
            name: SplitName::Valid,
            samples: Vec::new(),
        },
        DatasetSplit {
            name: SplitName::Test,
            samples: Vec::new(),
        },
    ];
    for sample in samples {
        let idx = match assign(&sample.video_id) {
            SplitName::Train => 0,
            SplitName::Valid => 1,
            SplitName::Test => 2,
        };
        splits[idx].samples.push(sample.clone());
    }
    Ok(splits)
}
