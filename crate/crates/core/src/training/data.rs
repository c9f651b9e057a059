use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use crate::corpus::{
    load_annotations, load_features, GroundingSample, Interval, SyntheticDataset, VideoFeatures,
    Vocabulary, DEFAULT_FPS,
};
use crate::error::{Error, Result};
use crate::neural::Real;
use crate::simplify::{attach_simplified, PosLexicon, SimplifyOptions};

/// Annotated samples and the features of every video they reference.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub videos: BTreeMap<String, VideoFeatures>,
    pub samples: Vec<GroundingSample>,
    pub lexicon: PosLexicon,
}

impl Dataset {
    pub fn new(
        videos: Vec<VideoFeatures>,
        samples: Vec<GroundingSample>,
        lexicon: PosLexicon,
    ) -> Result<Self> {
        let videos: BTreeMap<_, _> = videos
            .into_iter()
            .map(|v| (v.video_id.clone(), v))
            .collect();
        let missing: Vec<String> = samples
            .iter()
            .filter(|s| !videos.contains_key(&s.video_id))
            .map(|s| format!("no features for video {}", s.video_id))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Join { missing });
        }
        if samples.is_empty() {
            return Err(Error::Validation("dataset has no samples".into()));
        }
        Ok(Self {
            videos,
            samples,
            lexicon,
        })
    }

    /// Reads `annotations.jsonl`, `features/<video_id>.evqf` and, when
    /// present, `lexicon.tsv` (otherwise the bundled lexicon).
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let samples = load_annotations(dir.join("annotations.jsonl"))?;
        let lex_path = dir.join("lexicon.tsv");
        let lexicon = if lex_path.exists() {
            PosLexicon::load(&lex_path)?
        } else {
            PosLexicon::bundled()
        };
        let mut videos = Vec::new();
        let ids: std::collections::BTreeSet<&str> =
            samples.iter().map(|s| s.video_id.as_str()).collect();
        for id in ids {
            let path = dir.join("features").join(format!("{id}.evqf"));
            videos.push(load_features(&path, DEFAULT_FPS)?);
        }
        Self::new(videos, samples, lexicon)
    }

    pub fn from_synthetic(ds: &SyntheticDataset) -> Result<Self> {
        Self::new(ds.videos.clone(), ds.samples.clone(), PosLexicon::bundled())
    }

    pub fn feature_dim(&self) -> usize {
        self.videos
            .values()
            .next()
            .map_or(0, VideoFeatures::feature_dim)
    }

    /// Fills in missing simplified targets.
    pub fn simplify(&mut self, options: SimplifyOptions) {
        attach_simplified(&mut self.samples, &self.lexicon, options);
    }
}

/// A sample with its query and target already mapped to vocabulary ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub video_id: String,
    pub query: String,
    pub query_ids: Vec<usize>,
    /// Simplified target in the target vocabulary; may be empty.
    pub target_ids: Vec<usize>,
    pub target_tokens: Vec<String>,
    pub gold: Interval,
    pub duration: f64,
    pub(crate) video: usize,
}

/// Video features with a cached `Real` copy for the grounder.
#[derive(Debug, Clone)]
pub struct PreparedVideo {
    pub features: VideoFeatures,
    pub real: Array2<Real>,
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub(crate) videos: Vec<PreparedVideo>,
    pub samples: Vec<PreparedSample>,
}

impl PreparedData {
    pub fn new(
        samples: &[GroundingSample],
        videos: &BTreeMap<String, VideoFeatures>,
        input_vocab: &Vocabulary,
        target_vocab: &Vocabulary,
        max_query_len: usize,
    ) -> Result<Self> {
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut prepared_videos = Vec::new();
        let mut prepared = Vec::with_capacity(samples.len());
        for s in samples {
            let video = match index.get(s.video_id.as_str()) {
                Some(i) => *i,
                None => {
                    let v = videos.get(&s.video_id).ok_or_else(|| Error::Join {
                        missing: vec![format!("no features for video {}", s.video_id)],
                    })?;
                    prepared_videos.push(PreparedVideo {
                        features: v.clone(),
                        real: v.frames.mapv(|x| x as Real),
                    });
                    index.insert(s.video_id.as_str(), prepared_videos.len() - 1);
                    prepared_videos.len() - 1
                }
            };
            let tokens = &s.tokens[..s.tokens.len().min(max_query_len)];
            let target_tokens = s
                .simplified_gold
                .as_ref()
                .map(|q| q.tokens.clone())
                .unwrap_or_default();
            prepared.push(PreparedSample {
                video_id: s.video_id.clone(),
                query: s.query.clone(),
                query_ids: input_vocab.encode(tokens),
                target_ids: target_vocab.encode(&target_tokens),
                target_tokens,
                gold: s.gold,
                duration: s.duration,
                video,
            });
        }
        Ok(Self {
            videos: prepared_videos,
            samples: prepared,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn video(&self, sample: &PreparedSample) -> &PreparedVideo {
        &self.videos[sample.video]
    }
}
