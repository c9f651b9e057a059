use crate::corpus::{build_vocab, GroundingSample, Vocabulary};
use crate::error::{Error, Result};
use crate::grounder::{Grounder, ReferenceGrounder};
use crate::neural::{Embedding, ParamId, ParameterSet};
use crate::translator::Translator;

use super::config::TrainConfig;

/// Grounder and translator over one parameter set, sharing the word table.
#[derive(Debug, Clone)]
pub struct ClosedLoopModel<G> {
    pub params: ParameterSet,
    pub word_embedding: Embedding,
    pub grounder: G,
    pub translator: Translator,
    pub input_vocab: Vocabulary,
    pub target_vocab: Vocabulary,
}

/// Input vocabulary from truncated queries, target vocabulary from
/// simplified golds, both over `samples`.
pub fn build_vocabularies(
    samples: &[GroundingSample],
    config: &TrainConfig,
) -> (Vocabulary, Vocabulary) {
    let queries: Vec<Vec<String>> = samples
        .iter()
        .map(|s| s.tokens[..s.tokens.len().min(config.max_query_len)].to_vec())
        .collect();
    let targets: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            s.simplified_gold
                .as_ref()
                .map(|q| q.tokens.clone())
                .unwrap_or_default()
        })
        .collect();
    (
        build_vocab(&queries, config.min_count),
        build_vocab(&targets, config.min_count),
    )
}

impl ClosedLoopModel<ReferenceGrounder> {
    pub fn new(
        config: &TrainConfig,
        input_vocab: Vocabulary,
        target_vocab: Vocabulary,
        feature_dim: usize,
    ) -> Result<Self> {
        let grounder_config = config.model.grounder;
        Self::with_grounder(
            config,
            input_vocab,
            target_vocab,
            feature_dim,
            |params, emb| {
                ReferenceGrounder::new(params, "grounder", emb, feature_dim, &grounder_config)
            },
        )
    }
}

impl<G: Grounder> ClosedLoopModel<G> {
    /// Builds the shared embedding and translator; `build` constructs the
    /// grounder from the parameter set and the shared embedding.
    pub fn with_grounder<F>(
        config: &TrainConfig,
        input_vocab: Vocabulary,
        target_vocab: Vocabulary,
        feature_dim: usize,
        build: F,
    ) -> Result<Self>
    where
        F: FnOnce(&mut ParameterSet, Embedding) -> Result<G>,
    {
        if feature_dim == 0 {
            return Err(Error::Validation("feature dimension is zero".into()));
        }
        let mut params = ParameterSet::new(config.seed);
        let word_embedding = Embedding::new(
            &mut params,
            "words",
            input_vocab.len(),
            config.model.word_dim,
        )?;
        let grounder = build(&mut params, word_embedding)?;
        let translator = Translator::new(
            &mut params,
            "translator",
            word_embedding,
            feature_dim,
            target_vocab.len(),
            &config.model.translator,
        )?;
        Ok(Self {
            params,
            word_embedding,
            grounder,
            translator,
            input_vocab,
            target_vocab,
        })
    }

    /// Every parameter either model reads, each once.
    pub fn parameter_ids(&self) -> Vec<ParamId> {
        let mut ids = self.grounder.parameter_ids();
        ids.extend(self.translator.parameter_ids());
        ids.sort_by_key(|id| id.index());
        ids.dedup();
        ids
    }

    /// Grounder parameters including the shared word table.
    pub fn grounder_ids(&self) -> Vec<ParamId> {
        let mut ids = self.grounder.parameter_ids();
        ids.sort_by_key(|id| id.index());
        ids.dedup();
        ids
    }
}
