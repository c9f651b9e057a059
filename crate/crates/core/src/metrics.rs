//! Evaluation: temporal IoU, recall at thresholds, mIoU, word-set Jaccard,
//! BLEU-1/2 and the rank bucketing used to compare two systems sample by sample.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Interval;
use crate::error::{Error, Result};

pub const THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];

pub fn tiou(pred: Interval, gold: Interval) -> f64 {
    let inter = (pred.end.min(gold.end) - pred.start.max(gold.start)).max(0.0);
    let union = pred.end.max(gold.end) - pred.start.min(gold.start);
    if union <= 0.0 {
        // Both zero-length: identical points overlap fully.
        return if pred.start == gold.start { 1.0 } else { 0.0 };
    }
    (inter / union).clamp(0.0, 1.0)
}

fn non_empty(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Validation(format!("{what} of an empty list")));
    }
    Ok(())
}

/// Percentage of samples with `tiou >= threshold`.
pub fn recall_at(tious: &[f64], threshold: f64) -> Result<f64> {
    non_empty(tious, "recall")?;
    let hits = tious.iter().filter(|t| **t >= threshold).count();
    Ok(100.0 * hits as f64 / tious.len() as f64)
}

/// Mean tIoU as a percentage.
pub fn miou(tious: &[f64]) -> Result<f64> {
    non_empty(tious, "mIoU")?;
    Ok(100.0 * tious.iter().sum::<f64>() / tious.len() as f64)
}

/// Mean of the recalls at 0.3, 0.5 and 0.7.
pub fn miou_threshold_avg(tious: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for t in THRESHOLDS {
        sum += recall_at(tious, t)?;
    }
    Ok(sum / THRESHOLDS.len() as f64)
}

/// Two-decimal rendering used in every table.
pub fn format_pct(pct: f64) -> String {
    format!("{pct:.2}")
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn jaccard_words<S: AsRef<str>>(pred: &[S], gold: &[S]) -> f64 {
    let p: std::collections::BTreeSet<&str> = pred.iter().map(AsRef::as_ref).collect();
    let g: std::collections::BTreeSet<&str> = gold.iter().map(AsRef::as_ref).collect();
    let union = p.union(&g).count();
    if union == 0 {
        return 1.0;
    }
    p.intersection(&g).count() as f64 / union as f64
}

/// Clipped n-gram statistics of one candidate against one reference.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub pred_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn new<S: AsRef<str>>(pred: &[S], gold: &[S], max_n: usize) -> Self {
        let mut stats = Self {
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            pred_len: pred.len(),
            ref_len: gold.len(),
        };
        for n in 1..=max_n {
            let cand = ngram_counts(pred, n);
            let refs = ngram_counts(gold, n);
            stats.totals[n - 1] = pred.len().saturating_sub(n - 1);
            stats.matches[n - 1] = cand
                .iter()
                .map(|(g, c)| (*c).min(refs.get(g).copied().unwrap_or(0)))
                .sum();
        }
        stats
    }

    fn add(&mut self, other: &Self) {
        if self.matches.len() < other.matches.len() {
            self.matches.resize(other.matches.len(), 0);
            self.totals.resize(other.totals.len(), 0);
        }
        for (i, (m, t)) in other.matches.iter().zip(&other.totals).enumerate() {
            self.matches[i] += m;
            self.totals[i] += t;
        }
        self.pred_len += other.pred_len;
        self.ref_len += other.ref_len;
    }

    /// Brevity penalty times the geometric mean of the n-gram precisions.
    /// With `smoothing`, orders above one use add-one counts.
    pub fn score(&self, smoothing: bool) -> f64 {
        if self.pred_len == 0 {
            return 0.0;
        }
        let max_n = self.matches.len();
        let mut log_sum = 0.0;
        for (i, (&m, &t)) in self.matches.iter().zip(&self.totals).enumerate() {
            let (m, t) = if smoothing && i > 0 {
                (m + 1, t + 1)
            } else {
                (m, t)
            };
            if m == 0 || t == 0 {
                return 0.0;
            }
            log_sum += (m as f64 / t as f64).ln() / max_n as f64;
        }
        let bp = if self.pred_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.pred_len as f64).exp()
        };
        bp * log_sum.exp()
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts
            .entry(w.iter().map(AsRef::as_ref).collect())
            .or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU with uniform weights over orders `1..=max_n`.
pub fn bleu<S: AsRef<str>>(pred: &[S], gold: &[S], max_n: usize, smoothing: bool) -> f64 {
    BleuStats::new(pred, gold, max_n).score(smoothing)
}

/// Corpus BLEU: clipped counts and lengths summed before scoring.
pub fn corpus_bleu<S: AsRef<str>>(
    pairs: &[(Vec<S>, Vec<S>)],
    max_n: usize,
    smoothing: bool,
) -> f64 {
    let mut total = BleuStats {
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        ..Default::default()
    };
    for (p, g) in pairs {
        total.add(&BleuStats::new(p, g, max_n));
    }
    total.score(smoothing)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Up,
    Down,
    Same,
    BothBelow,
}

/// 3 at tIoU ≥ 0.7, 2 at ≥ 0.5, 1 at ≥ 0.3, else 0.
pub fn rank(t: f64) -> u8 {
    THRESHOLDS.iter().filter(|th| t >= **th).count() as u8
}

pub fn bucket(tiou_ours: f64, tiou_base: f64) -> Bucket {
    let (a, b) = (rank(tiou_ours), rank(tiou_base));
    match (a, b) {
        (0, 0) => Bucket::BothBelow,
        _ if a > b => Bucket::Up,
        _ if a < b => Bucket::Down,
        _ => Bucket::Same,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts {
    pub up: usize,
    pub down: usize,
    pub same: usize,
    pub both_below: usize,
    /// Up/down cases where the losing side is below 0.3. Already included
    /// in `up`/`down`.
    pub mixed_up: usize,
    pub mixed_down: usize,
}

impl BucketCounts {
    pub fn total(&self) -> usize {
        self.up + self.down + self.same + self.both_below
    }

    pub fn push(&mut self, tiou_ours: f64, tiou_base: f64) {
        match bucket(tiou_ours, tiou_base) {
            Bucket::Up => {
                self.up += 1;
                self.mixed_up += usize::from(rank(tiou_base) == 0);
            }
            Bucket::Down => {
                self.down += 1;
                self.mixed_down += usize::from(rank(tiou_ours) == 0);
            }
            Bucket::Same => self.same += 1,
            Bucket::BothBelow => self.both_below += 1,
        }
    }
}

/// One line of a prediction dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub video_id: String,
    pub query: String,
    pub pred_start: f64,
    pub pred_end: f64,
    pub gold_start: f64,
    pub gold_end: f64,
}

/// One line of a translation dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub video_id: String,
    pub query: String,
    pub gold_simplified: Vec<String>,
    pub predicted_simplified: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub video_id: String,
    pub query: String,
    pub tiou: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub jaccard: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bleu1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bleu2: Option<f64>,
}

/// Percentages, rounded to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_samples: usize,
    #[serde(rename = "R@0.3")]
    pub r_at_03: f64,
    #[serde(rename = "R@0.5")]
    pub r_at_05: f64,
    #[serde(rename = "R@0.7")]
    pub r_at_07: f64,
    #[serde(rename = "mIoU")]
    pub miou: f64,
    pub miou_threshold_avg: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub jaccard_mean: Option<f64>,
    /// Corpus-level.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bleu1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bleu2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bleu1_sentence_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bleu2_sentence_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub buckets: Option<BucketCounts>,
    pub samples: Vec<SampleScore>,
}

impl MetricsReport {
    pub fn r_at(&self, threshold: f64) -> Option<f64> {
        THRESHOLDS
            .iter()
            .position(|t| *t == threshold)
            .map(|i| [self.r_at_03, self.r_at_05, self.r_at_07][i])
    }
}

type Key = (String, String);

/// Joins the dumps on `(video_id, query)` and aggregates every metric.
/// Duplicate keys pair up in file order.
pub fn compile_report(
    predictions: &[PredictionRecord],
    translations: Option<&[TranslationRecord]>,
    smoothing: bool,
) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(Error::Validation("prediction dump is empty".into()));
    }
    let paired: Vec<(&PredictionRecord, Option<&TranslationRecord>)> = match translations {
        None => predictions.iter().map(|p| (p, None)).collect(),
        Some(trans) => {
            let mut by_key: BTreeMap<Key, Vec<&TranslationRecord>> = BTreeMap::new();
            for t in trans.iter().rev() {
                by_key
                    .entry((t.video_id.clone(), t.query.clone()))
                    .or_default()
                    .push(t);
            }
            let mut missing = Vec::new();
            let mut out = Vec::with_capacity(predictions.len());
            for p in predictions {
                match by_key
                    .get_mut(&(p.video_id.clone(), p.query.clone()))
                    .and_then(Vec::pop)
                {
                    Some(t) => out.push((p, Some(t))),
                    None => missing.push(format!(
                        "translation missing for {} / {:?}",
                        p.video_id, p.query
                    )),
                }
            }
            for ((v, q), rest) in &by_key {
                for _ in rest {
                    missing.push(format!("prediction missing for {v} / {q:?}"));
                }
            }
            if !missing.is_empty() {
                return Err(Error::Join { missing });
            }
            out
        }
    };

    let samples: Vec<SampleScore> = paired
        .par_iter()
        .map(|(p, t)| SampleScore {
            video_id: p.video_id.clone(),
            query: p.query.clone(),
            tiou: tiou(
                Interval::new(p.pred_start, p.pred_end),
                Interval::new(p.gold_start, p.gold_end),
            ),
            jaccard: t.map(|t| jaccard_words(&t.predicted_simplified, &t.gold_simplified)),
            bleu1: t.map(|t| bleu(&t.predicted_simplified, &t.gold_simplified, 1, smoothing)),
            bleu2: t.map(|t| bleu(&t.predicted_simplified, &t.gold_simplified, 2, smoothing)),
        })
        .collect();
    let tious: Vec<f64> = samples.iter().map(|s| s.tiou).collect();
    let mean = |f: fn(&SampleScore) -> Option<f64>| -> Option<f64> {
        let v: Option<Vec<f64>> = samples.iter().map(f).collect();
        v.map(|v| round2(100.0 * v.iter().sum::<f64>() / v.len() as f64))
    };
    let pairs: Option<Vec<(Vec<&str>, Vec<&str>)>> = paired
        .iter()
        .map(|(_, t)| {
            t.map(|t| {
                (
                    t.predicted_simplified.iter().map(String::as_str).collect(),
                    t.gold_simplified.iter().map(String::as_str).collect(),
                )
            })
        })
        .collect();
    Ok(MetricsReport {
        num_samples: samples.len(),
        r_at_03: round2(recall_at(&tious, 0.3)?),
        r_at_05: round2(recall_at(&tious, 0.5)?),
        r_at_07: round2(recall_at(&tious, 0.7)?),
        miou: round2(miou(&tious)?),
        miou_threshold_avg: round2(miou_threshold_avg(&tious)?),
        jaccard_mean: mean(|s| s.jaccard),
        bleu1: pairs
            .as_ref()
            .map(|p| round2(100.0 * corpus_bleu(p, 1, smoothing))),
        bleu2: pairs
            .as_ref()
            .map(|p| round2(100.0 * corpus_bleu(p, 2, smoothing))),
        bleu1_sentence_mean: mean(|s| s.bleu1),
        bleu2_sentence_mean: mean(|s| s.bleu2),
        buckets: None,
        samples,
    })
}

/// Buckets per-sample tIoUs of two reports over their shared samples.
pub fn compare(ours: &MetricsReport, base: &MetricsReport) -> Result<BucketCounts> {
    let mut by_key: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for s in base.samples.iter().rev() {
        by_key
            .entry((s.video_id.clone(), s.query.clone()))
            .or_default()
            .push(s.tiou);
    }
    let mut counts = BucketCounts::default();
    let mut missing = Vec::new();
    for s in &ours.samples {
        match by_key
            .get_mut(&(s.video_id.clone(), s.query.clone()))
            .and_then(Vec::pop)
        {
            Some(b) => counts.push(s.tiou, b),
            None => missing.push(format!("baseline missing {} / {:?}", s.video_id, s.query)),
        }
    }
    for ((v, q), rest) in &by_key {
        for _ in rest {
            missing.push(format!("ours missing {v} / {q:?}"));
        }
    }
    if !missing.is_empty() {
        return Err(Error::Join { missing });
    }
    Ok(counts)
}

/// `Model,R@0.3,R@0.5,R@0.7,mIoU`.
pub fn grounding_csv(rows: &[(&str, &MetricsReport)]) -> String {
    let mut out = String::from("Model,R@0.3,R@0.5,R@0.7,mIoU\n");
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{name},{},{},{},{}",
            format_pct(r.r_at_03),
            format_pct(r.r_at_05),
            format_pct(r.r_at_07),
            format_pct(r.miou)
        );
    }
    out
}

/// `up,down,same,both_below`.
pub fn buckets_csv(rows: &[BucketCounts]) -> String {
    let mut out = String::from("up,down,same,both_below\n");
    for b in rows {
        let _ = writeln!(out, "{},{},{},{}", b.up, b.down, b.same, b.both_below);
    }
    out
}

/// `Model,Jaccard,BLEU-1,BLEU-2`; missing values are left blank.
pub fn translation_csv(rows: &[(&str, &MetricsReport)]) -> String {
    let cell = |v: Option<f64>| v.map(format_pct).unwrap_or_default();
    let mut out = String::from("Model,Jaccard,BLEU-1,BLEU-2\n");
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{name},{},{},{}",
            cell(r.jaccard_mean),
            cell(r.bleu1),
            cell(r.bleu2)
        );
    }
    out
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
