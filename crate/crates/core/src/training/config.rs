use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::SplitProportions;
use crate::error::{Error, Result};
use crate::grounder::{GroundingLossConfig, ReferenceGrounderConfig};
use crate::neural::OptimizerKind;
use crate::resampler::CLIP_FRAMES;
use crate::translator::TranslatorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    ClosedLoop,
    /// Translator is never run; equivalent to an open-loop grounder.
    GroundingOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Width of the shared word embedding.
    pub word_dim: usize,
    pub grounder: ReferenceGrounderConfig,
    pub translator: TranslatorConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            word_dim: 64,
            grounder: ReferenceGrounderConfig {
                embed_dim: 64,
                hidden: 64,
                attn_dim: 64,
                head_hidden: 64,
                loss: GroundingLossConfig::default(),
            },
            translator: TranslatorConfig {
                frame_dim: 64,
                hidden: 64,
                decoder_hidden: 64,
                attn_dim: 64,
                target_embed_dim: 64,
                max_decode_len: 8,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub total_epochs: usize,
    /// Weight of the translation NLL in the joint loss.
    pub lambda_nll: f64,
    pub frames_per_clip: usize,
    pub seed: u64,
    pub mode: Mode,
    pub optimizer: OptimizerKind,
    /// Global gradient-norm clip, off when absent.
    pub grad_clip: Option<f64>,
    pub checkpoint_every: usize,
    /// Validation cadence for best-checkpoint selection; 0 disables it.
    pub eval_every: usize,
    /// Queries are truncated to this many tokens.
    pub max_query_len: usize,
    pub min_count: usize,
    pub split: SplitProportions,
    pub drop_subject: bool,
    pub bleu_smoothing: bool,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 4e-5,
            batch_size: 64,
            lr_decay_every: 150,
            lr_decay_factor: 0.5,
            total_epochs: 500,
            lambda_nll: 1.0,
            frames_per_clip: CLIP_FRAMES,
            seed: 0,
            mode: Mode::ClosedLoop,
            optimizer: OptimizerKind::Sgd,
            grad_clip: None,
            checkpoint_every: 50,
            eval_every: 10,
            max_query_len: 10,
            min_count: 1,
            split: SplitProportions::default(),
            drop_subject: false,
            bleu_smoothing: false,
            model: ModelConfig::default(),
        }
    }
}

pub const PRESET_NAMES: [&str; 5] = ["anet1", "anet2", "anet3", "anet4", "toy-overfit"];

fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "anet1" => include_str!("../../presets/anet1.json"),
        "anet2" => include_str!("../../presets/anet2.json"),
        "anet3" => include_str!("../../presets/anet3.json"),
        "anet4" => include_str!("../../presets/anet4.json"),
        "toy-overfit" => include_str!("../../presets/toy-overfit.json"),
        _ => return None,
    })
}

impl TrainConfig {
    /// One of the bundled presets, by name.
    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_text(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown preset {name:?}; known: {}",
                PRESET_NAMES.join(", ")
            ))
        })?;
        Self::from_json(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.lr_decay_every == 0 || self.frames_per_clip == 0 {
            return bad("batch_size, lr_decay_every and frames_per_clip must be positive");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad("lr_decay_factor must be in (0, 1]");
        }
        if !(self.lambda_nll >= 0.0 && self.lambda_nll.is_finite()) {
            return bad("lambda_nll must be finite and non-negative");
        }
        if self.checkpoint_every == 0 || self.max_query_len == 0 {
            return bad("checkpoint_every and max_query_len must be positive");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad("grad_clip must be positive");
            }
        }
        let m = &self.model;
        let g = &m.grounder;
        let t = &m.translator;
        let dims = [
            m.word_dim,
            g.embed_dim,
            g.hidden,
            g.attn_dim,
            g.head_hidden,
            t.frame_dim,
            t.hidden,
            t.decoder_hidden,
            t.attn_dim,
            t.target_embed_dim,
            t.max_decode_len,
        ];
        if dims.contains(&0) {
            return bad("model dimensions must be positive");
        }
        Ok(())
    }

    /// The lambda actually applied: zero in grounding-only mode.
    pub fn effective_lambda(&self) -> f64 {
        match self.mode {
            Mode::ClosedLoop => self.lambda_nll,
            Mode::GroundingOnly => 0.0,
        }
    }
}

/// SHA-256 of the canonical JSON form.
pub fn config_hash(config: &TrainConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_presets() {
        let p1 = TrainConfig::preset("anet1").unwrap();
        assert_eq!(
            (
                p1.learning_rate,
                p1.batch_size,
                p1.lr_decay_every,
                p1.total_epochs
            ),
            (4e-5, 64, 150, 500)
        );
        let p2 = TrainConfig::preset("anet2").unwrap();
        assert_eq!(
            (
                p2.learning_rate,
                p2.batch_size,
                p2.lr_decay_every,
                p2.total_epochs
            ),
            (4e-5, 128, 200, 600)
        );
        let p3 = TrainConfig::preset("anet3").unwrap();
        assert_eq!(
            (
                p3.learning_rate,
                p3.batch_size,
                p3.lr_decay_every,
                p3.total_epochs
            ),
            (4e-4, 64, 150, 600)
        );
        let p4 = TrainConfig::preset("anet4").unwrap();
        assert_eq!(
            (
                p4.learning_rate,
                p4.batch_size,
                p4.lr_decay_every,
                p4.total_epochs
            ),
            (4e-4, 128, 200, 600)
        );
        for p in [p1, p2, p3, p4] {
            assert_eq!(p.frames_per_clip, 32);
        }
        assert_eq!(TrainConfig::preset("toy-overfit").unwrap().lambda_nll, 1.0);
        assert!(TrainConfig::preset("nope").is_err());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(TrainConfig::from_json(r#"{"learning_rate": 0}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"lr_decay_factor": 1.5}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"typo_field": 1}"#).is_err());
        assert!(TrainConfig::from_json("{}").is_ok());
    }

    #[test]
    fn hash_tracks_content() {
        let a = TrainConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = 1;
        assert_ne!(config_hash(&a), config_hash(&b));
    }
}
