//! Closed-loop temporal grounding.
//!
//! A grounder predicts the interval of an untrimmed video that matches a
//! natural-language query. The predicted clip is resampled to a fixed number
//! of frames and handed, together with the query, to a recurrent
//! encoder-decoder that generates a simplified query (lemmatized verbs and
//! nouns). Both losses are summed and the two networks are trained jointly,
//! so the translator's negative log-likelihood acts as feedback for the
//! grounder.
//!
//! The crate is organised by stage:
//!
//! - [`corpus`]: samples, EVQF feature files, vocabularies, and a synthetic
//!   planted-event dataset generator.
//! - [`simplify`]: tokenizer, lexicon tagger/lemmatizer and query simplification.
//! - [`neural`]: hand-written differentiable blocks with a finite-difference checker.
//! - [`grounder`]: the pluggable grounding interface and a reference model.
//! - [`resampler`]: interval to frame-index conversion and 32-frame clip sampling.
//! - [`translator`]: the video-pivoted simplification model.
//! - [`training`]: the closed-loop trainer, schedules, presets and checkpoints.
//! - [`metrics`]: tIoU, recall, mIoU, Jaccard, BLEU and improvement buckets.
//! - [`cli`]: the `groundloop` command line.
//!
//! Each capability has a runnable program under `examples/`.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod grounder;
pub mod metrics;
pub mod neural;
pub mod resampler;
pub mod simplify;
pub mod training;
pub mod translator;

pub use error::{Error, Result};
