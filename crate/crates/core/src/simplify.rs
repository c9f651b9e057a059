//! Query simplification: lowercase tokenization, lexicon-driven tagging and
//! lemmatization, and extraction of verb and noun lemmas in query order.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::GroundingSample;
use crate::error::{Error, Result};

/// `token<TAB>POS<TAB>lemma` lines covering everyday indoor activities.
pub const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.tsv");

/// Lowercases, splits on whitespace and strips punctuation from token edges.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Verb,
    Noun,
    Other,
}

impl Pos {
    pub fn parse(tag: &str) -> Pos {
        match tag.trim().to_ascii_uppercase().as_str() {
            "VERB" => Pos::Verb,
            "NOUN" => Pos::Noun,
            _ => Pos::Other,
        }
    }

    pub fn is_content(self) -> bool {
        matches!(self, Pos::Verb | Pos::Noun)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pos::Verb => "VERB",
            Pos::Noun => "NOUN",
            Pos::Other => "OTHER",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedToken {
    pub surface: String,
    pub pos: Pos,
    pub lemma: String,
}

/// Ordered verb and noun lemmas of a query.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplifiedQuery {
    pub tokens: Vec<String>,
}

impl SimplifiedQuery {
    pub fn new(tokens: Vec<String>) -> Self {
        Self { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl fmt::Display for SimplifiedQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// Inflectional suffix rewrite. Applies only when the rewritten stem is a
/// lexicon entry of `pos` that is its own lemma.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixRule {
    pub suffix: &'static str,
    pub replacement: &'static str,
    pub pos: Pos,
    /// Drop one letter of a doubled final consonant (`running` -> `run`).
    pub undouble: bool,
}

const fn rule(
    suffix: &'static str,
    replacement: &'static str,
    pos: Pos,
    undouble: bool,
) -> SuffixRule {
    SuffixRule {
        suffix,
        replacement,
        pos,
        undouble,
    }
}

pub const DEFAULT_RULES: &[SuffixRule] = &[
    rule("ies", "y", Pos::Verb, false),
    rule("ied", "y", Pos::Verb, false),
    rule("ying", "ie", Pos::Verb, false),
    rule("ing", "", Pos::Verb, false),
    rule("ing", "e", Pos::Verb, false),
    rule("ing", "", Pos::Verb, true),
    rule("ed", "", Pos::Verb, false),
    rule("ed", "e", Pos::Verb, false),
    rule("ed", "", Pos::Verb, true),
    rule("es", "", Pos::Verb, false),
    rule("s", "", Pos::Verb, false),
    rule("ies", "y", Pos::Noun, false),
    rule("ves", "f", Pos::Noun, false),
    rule("ves", "fe", Pos::Noun, false),
    rule("es", "", Pos::Noun, false),
    rule("s", "", Pos::Noun, false),
];

impl SuffixRule {
    fn candidate(&self, word: &str) -> Option<String> {
        let stem = word.strip_suffix(self.suffix)?;
        let candidate = if self.undouble {
            let mut chars = stem.chars().rev();
            let (last, prev) = (chars.next()?, chars.next()?);
            if last != prev || "aeiou".contains(last) {
                return None;
            }
            let mut s = stem.to_string();
            s.pop();
            s
        } else {
            format!("{stem}{}", self.replacement)
        };
        (candidate.chars().count() >= 2).then_some(candidate)
    }
}

#[derive(Debug, Clone)]
pub struct PosLexicon {
    entries: HashMap<String, (Pos, String)>,
    rules: Vec<SuffixRule>,
}

impl PosLexicon {
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_LEXICON).expect("bundled lexicon parses")
    }

    /// Parses `token<TAB>POS<TAB>lemma` lines; `#` starts a comment line.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 || cols.iter().any(|c| c.trim().is_empty()) {
                return Err(Error::Validation(format!(
                    "lexicon line {}: expected token<TAB>POS<TAB>lemma",
                    i + 1
                )));
            }
            entries.insert(
                cols[0].trim().to_lowercase(),
                (Pos::parse(cols[1]), cols[2].trim().to_lowercase()),
            );
        }
        Ok(Self {
            entries,
            rules: DEFAULT_RULES.to_vec(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }

    pub fn with_rules(mut self, rules: Vec<SuffixRule>) -> Self {
        self.rules = rules;
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact entry, else the first matching suffix rule, else `(OTHER, token)`.
    pub fn lookup(&self, token: &str) -> (Pos, String) {
        let token = token.to_lowercase();
        if let Some((pos, lemma)) = self.entries.get(&token) {
            return (*pos, lemma.clone());
        }
        for rule in &self.rules {
            let Some(stem) = rule.candidate(&token) else {
                continue;
            };
            if let Some((pos, lemma)) = self.entries.get(&stem) {
                if *pos == rule.pos && *lemma == stem {
                    return (*pos, stem);
                }
            }
        }
        (Pos::Other, token)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Pos, &str)> {
        self.entries
            .iter()
            .map(|(k, (p, l))| (k.as_str(), *p, l.as_str()))
    }
}

pub fn tag_and_lemmatize<S: AsRef<str>>(tokens: &[S], lexicon: &PosLexicon) -> Vec<TaggedToken> {
    tokens
        .iter()
        .map(|t| {
            let (pos, lemma) = lexicon.lookup(t.as_ref());
            TaggedToken {
                surface: t.as_ref().to_string(),
                pos,
                lemma,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplifyOptions {
    /// Drop nouns that precede the first verb (the grammatical subject).
    pub drop_subject: bool,
}

pub fn simplify_query<S: AsRef<str>>(tokens: &[S], lexicon: &PosLexicon) -> SimplifiedQuery {
    simplify_query_with(tokens, lexicon, SimplifyOptions::default())
}

pub fn simplify_query_with<S: AsRef<str>>(
    tokens: &[S],
    lexicon: &PosLexicon,
    options: SimplifyOptions,
) -> SimplifiedQuery {
    let tagged = tag_and_lemmatize(tokens, lexicon);
    let first_verb = tagged.iter().position(|t| t.pos == Pos::Verb);
    let tokens = tagged
        .into_iter()
        .enumerate()
        .filter(|(i, t)| {
            let subject =
                options.drop_subject && t.pos == Pos::Noun && first_verb.is_some_and(|v| *i < v);
            t.pos.is_content() && !subject
        })
        .map(|(_, t)| t.lemma)
        .collect();
    SimplifiedQuery { tokens }
}

/// Fills `simplified_gold` on every sample that lacks it.
pub fn attach_simplified(
    samples: &mut [GroundingSample],
    lexicon: &PosLexicon,
    options: SimplifyOptions,
) {
    for s in samples.iter_mut().filter(|s| s.simplified_gold.is_none()) {
        s.simplified_gold = Some(simplify_query_with(&s.tokens, lexicon, options));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub num_queries: usize,
    pub num_videos: usize,
    pub input_vocab_size: usize,
    pub simplified_vocab_size: usize,
    pub mean_simplified_tokens: f64,
}

/// Corpus statistics over input and simplified queries. Samples without a
/// simplified gold are simplified on the fly with default options.
pub fn corpus_stats(samples: &[GroundingSample], lexicon: &PosLexicon) -> Result<StatsRecord> {
    if samples.is_empty() {
        return Err(Error::Validation(
            "corpus statistics of an empty corpus".into(),
        ));
    }
    let mut input_vocab = BTreeSet::new();
    let mut simplified_vocab = BTreeSet::new();
    let mut videos = BTreeSet::new();
    let mut total = 0usize;
    for s in samples {
        videos.insert(s.video_id.as_str());
        input_vocab.extend(s.tokens.iter().cloned());
        let simplified = match &s.simplified_gold {
            Some(q) => q.clone(),
            None => simplify_query(&s.tokens, lexicon),
        };
        total += simplified.len();
        simplified_vocab.extend(simplified.tokens);
    }
    Ok(StatsRecord {
        num_queries: samples.len(),
        num_videos: videos.len(),
        input_vocab_size: input_vocab.len(),
        simplified_vocab_size: simplified_vocab.len(),
        mean_simplified_tokens: total as f64 / samples.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Interval;
    use proptest::prelude::*;

    fn lex() -> PosLexicon {
        PosLexicon::bundled()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("A person closes the door."),
            ["a", "person", "closes", "the", "door"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("  door,  door "), ["door", "door"]);
        assert_eq!(tokenize("\"Hello\" -- world's"), ["hello", "world's"]);
    }

    #[test]
    fn inflections_share_a_lemma() {
        let tagged = tag_and_lemmatize(&["closes", "closing", "closed", "close"], &lex());
        for t in tagged {
            assert_eq!(
                (t.pos, t.lemma.as_str()),
                (Pos::Verb, "close"),
                "{}",
                t.surface
            );
        }
    }

    #[test]
    fn bundled_entries_and_fallback() {
        let l = lex();
        assert_eq!(l.lookup("door"), (Pos::Noun, "door".into()));
        assert_eq!(l.lookup("zzzqx"), (Pos::Other, "zzzqx".into()));
        assert_eq!(l.lookup("doors"), (Pos::Noun, "door".into()));
        assert_eq!(l.lookup("running"), (Pos::Verb, "run".into()));
        assert_eq!(l.lookup("washes"), (Pos::Verb, "wash".into()));
        assert_eq!(l.lookup("tidies"), (Pos::Verb, "tidy".into()));
        assert_eq!(l.lookup("took"), (Pos::Verb, "take".into()));
        assert_eq!(l.lookup("Door"), (Pos::Noun, "door".into()));
    }

    #[test]
    fn bundled_lemmas_are_closed() {
        let l = lex();
        for (surface, pos, lemma) in l.iter() {
            assert_eq!(lemma, lemma.to_lowercase());
            if pos.is_content() {
                assert_eq!(l.lookup(lemma), (pos, lemma.to_string()), "entry {surface}");
            }
        }
    }

    #[test]
    fn simplify_examples() {
        let l = lex();
        let q = simplify_query(&tokenize("a person closes the door"), &l);
        assert_eq!(q.tokens, ["person", "close", "door"]);
        assert!(simplify_query(&["the", "the", "the"], &l).is_empty());
        let q = simplify_query_with(
            &tokenize("a person closes the door"),
            &l,
            SimplifyOptions { drop_subject: true },
        );
        assert_eq!(q.tokens, ["close", "door"]);
    }

    #[test]
    fn malformed_lexicon_line() {
        assert!(PosLexicon::from_tsv("door\tNOUN\n").is_err());
        let l = PosLexicon::from_tsv("# header\nDoor\tnoun\tDoor\n").unwrap();
        assert_eq!(l.lookup("door"), (Pos::Noun, "door".into()));
    }

    #[test]
    fn stats_arithmetic() {
        let l = lex();
        let mut a = GroundingSample::new(
            "v1",
            "a person opens the door",
            Interval::new(0.0, 1.0),
            2.0,
        )
        .unwrap();
        a.simplified_gold = Some(SimplifiedQuery::new(vec!["open".into(), "door".into()]));
        let b = GroundingSample::new(
            "v1",
            "a person closes the door",
            Interval::new(0.0, 1.0),
            2.0,
        )
        .unwrap();
        let stats = corpus_stats(&[a, b], &l).unwrap();
        assert_eq!(stats.mean_simplified_tokens, 2.5);
        assert_eq!(stats.num_queries, 2);
        assert_eq!(stats.num_videos, 1);
        assert_eq!(stats.input_vocab_size, 6);
        assert_eq!(stats.simplified_vocab_size, 4);
        assert!(corpus_stats(&[], &l).is_err());
    }

    #[test]
    fn stats_vocab_is_subset_of_input_lemmas() {
        let l = lex();
        let ds = crate::corpus::generate_synthetic(&Default::default(), 3).unwrap();
        let stats = corpus_stats(&ds.samples, &l).unwrap();
        assert!(stats.simplified_vocab_size <= stats.input_vocab_size);
        let lemmas: BTreeSet<String> = ds
            .samples
            .iter()
            .flat_map(|s| s.tokens.iter().map(|t| l.lookup(t).1))
            .collect();
        for s in &ds.samples {
            for t in simplify_query(&s.tokens, &l).tokens {
                assert!(lemmas.contains(&t));
            }
        }
    }

    proptest! {
        #[test]
        fn simplification_properties(words in prop::collection::vec(
            prop::sample::select(vec![
                "a", "the", "person", "closes", "closing", "door", "doors", "is", "holding",
                "bag", "someone", "quickly", "zzzqx", "took", "glasses", "running", "people",
            ]),
            0..12,
        )) {
            let l = lex();
            let once = simplify_query(&words, &l);
            prop_assert!(once.len() <= words.len());
            prop_assert_eq!(&simplify_query(&once.tokens, &l), &once);
            prop_assert_eq!(&simplify_query(&words, &l), &once);
        }
    }
}
