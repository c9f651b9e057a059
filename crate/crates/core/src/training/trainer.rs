use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_dataset, SplitName};
use crate::error::{Error, Result};
use crate::grounder::{Grounder, ReferenceGrounder};
use crate::metrics::{
    compile_report, write_jsonl, MetricsReport, PredictionRecord, TranslationRecord,
};
use crate::neural::{Gradients, Optimizer, Real};
use crate::resampler::{interval_to_frames, resample_n, ClipFeatures};

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::config::{config_hash, TrainConfig};
use super::data::{Dataset, PreparedData, PreparedSample};
use super::model::{build_vocabularies, ClosedLoopModel};

/// `l_ground + lambda * l_nll`; refuses non-finite or negative inputs.
pub fn joint_loss(l_ground: f64, l_nll: f64, lambda: f64) -> Result<f64> {
    for (name, v) in [("grounding", l_ground), ("nll", l_nll), ("lambda", lambda)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::NonFinite {
                sample_ids: Vec::new(),
                detail: format!("{name} value {v} is not a finite non-negative number"),
            });
        }
    }
    Ok(l_ground + lambda * l_nll)
}

/// Step decay: `lr * factor^(epoch / decay_every)`.
pub fn lr_schedule(epoch: usize, config: &TrainConfig) -> f64 {
    config.learning_rate
        * config
            .lr_decay_factor
            .powi((epoch / config.lr_decay_every) as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's samples.
    pub grounding_loss: f64,
    /// Mean over samples with a non-empty target; zero in grounding-only mode.
    pub nll_loss: f64,
    pub joint_loss: f64,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub valid_miou: Option<f64>,
}

/// Loss sums and clip ranges of one accumulated batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub grounding_sum: f64,
    pub nll_sum: f64,
    pub grounded: usize,
    pub translated: usize,
    /// Frame range cut for each sample, in batch order.
    pub clip_ranges: Vec<(usize, usize)>,
}

fn clip_for<G: Grounder>(
    model: &ClosedLoopModel<G>,
    data: &PreparedData,
    sample: &PreparedSample,
    frames: usize,
) -> Result<(crate::grounder::GrounderOutput, G::Cache, ClipFeatures)> {
    let video = data.video(sample);
    let (out, cache) = model.grounder.forward(
        &model.params,
        video.real.view(),
        &sample.query_ids,
        sample.duration,
    )?;
    let (s, e) = interval_to_frames(
        out.interval_sec,
        video.features.fps,
        video.features.num_frames(),
    )?;
    let clip = resample_n(&video.features, s, e, frames)?;
    Ok((out, cache, clip))
}

/// Forward and backward over `batch` (indices into `data`), accumulating
/// the mean joint-loss gradient into `grads`.
pub fn accumulate_batch<G: Grounder>(
    model: &ClosedLoopModel<G>,
    data: &PreparedData,
    batch: &[usize],
    config: &TrainConfig,
    grads: &mut Gradients,
) -> Result<BatchOutcome> {
    let lambda = config.effective_lambda();
    let run_translator = config.mode == super::Mode::ClosedLoop;
    let n_targets = batch
        .iter()
        .filter(|&&i| !data.samples[i].target_ids.is_empty())
        .count();
    let mut outcome = BatchOutcome {
        grounding_sum: 0.0,
        nll_sum: 0.0,
        grounded: 0,
        translated: 0,
        clip_ranges: Vec::with_capacity(batch.len()),
    };
    let mut bad = Vec::new();
    for &i in batch {
        let sample = &data.samples[i];
        let (out, cache, clip) = clip_for(model, data, sample, config.frames_per_clip)?;
        let first = clip.source_indices[0];
        outcome
            .clip_ranges
            .push((first, *clip.source_indices.last().unwrap_or(&first) + 1));
        let g = model.grounder.backward(
            &model.params,
            grads,
            &cache,
            &out,
            sample.gold,
            sample.duration,
            1.0 / batch.len() as Real,
        )?;
        if !g.is_finite() {
            bad.push(format!("{} / {:?}", sample.video_id, sample.query));
        }
        outcome.grounding_sum += g;
        outcome.grounded += 1;

        if run_translator && !sample.target_ids.is_empty() {
            let clip_real = clip.frames.mapv(|x| x as Real);
            let (nll, tcache) = model.translator.forward_teacher_forced(
                &model.params,
                clip_real.view(),
                &sample.query_ids,
                &sample.target_ids,
            )?;
            let nll = nll as f64;
            if !nll.is_finite() {
                bad.push(format!("{} / {:?}", sample.video_id, sample.query));
            }
            if lambda != 0.0 {
                model.translator.backward(
                    &model.params,
                    grads,
                    &tcache,
                    (lambda / n_targets as f64) as Real,
                );
            }
            outcome.nll_sum += nll;
            outcome.translated += 1;
        }
    }
    if !bad.is_empty() || !grads.all_finite() {
        if bad.is_empty() {
            bad = batch
                .iter()
                .map(|&i| format!("{} / {:?}", data.samples[i].video_id, data.samples[i].query))
                .collect();
        }
        return Err(Error::NonFinite {
            sample_ids: bad,
            detail: "loss or gradient became non-finite".into(),
        });
    }
    Ok(outcome)
}

/// Model, optimizer and progress of one training run.
#[derive(Debug, Clone)]
pub struct Trainer<G> {
    pub config: TrainConfig,
    pub model: ClosedLoopModel<G>,
    pub optimizer: Optimizer,
    /// Number of completed epochs.
    pub epoch: usize,
    pub log: Vec<EpochRecord>,
    pub best_valid_miou: Option<f64>,
}

impl<G: Grounder> Trainer<G> {
    pub fn new(config: TrainConfig, model: ClosedLoopModel<G>) -> Self {
        let optimizer = Optimizer::new(config.optimizer, &model.params);
        Self {
            config,
            model,
            optimizer,
            epoch: 0,
            log: Vec::new(),
            best_valid_miou: None,
        }
    }

    /// Sample order of `epoch`, a pure function of seed and epoch so that
    /// resumed runs replay it exactly.
    pub fn epoch_order(&self, epoch: usize, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        let seed = self.config.seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order
    }

    pub fn train_epoch(&mut self, data: &PreparedData) -> Result<EpochRecord> {
        if data.is_empty() {
            return Err(Error::Validation("training split is empty".into()));
        }
        if self.config.batch_size > data.len() {
            return Err(Error::Config(format!(
                "batch_size {} exceeds the {} training samples",
                self.config.batch_size,
                data.len()
            )));
        }
        let epoch = self.epoch;
        let lr = lr_schedule(epoch, &self.config);
        let ids = match self.config.mode {
            super::Mode::ClosedLoop => self.model.parameter_ids(),
            super::Mode::GroundingOnly => self.model.grounder_ids(),
        };
        let mut grads = self.model.params.zero_grads();
        let (mut g_sum, mut n_sum, mut g_n, mut n_n) = (0.0, 0.0, 0usize, 0usize);
        for batch in self
            .epoch_order(epoch, data.len())
            .chunks(self.config.batch_size)
        {
            grads.fill_zero();
            let out = accumulate_batch(&self.model, data, batch, &self.config, &mut grads)?;
            if let Some(clip) = self.config.grad_clip {
                let norm = grads.global_norm() as f64;
                if norm > clip {
                    grads.scale((clip / norm) as Real);
                }
            }
            self.optimizer
                .step(&mut self.model.params, &grads, &ids, lr);
            g_sum += out.grounding_sum;
            n_sum += out.nll_sum;
            g_n += out.grounded;
            n_n += out.translated;
        }
        if !self.model.params.all_finite() {
            return Err(Error::NonFinite {
                sample_ids: Vec::new(),
                detail: format!("parameters became non-finite in epoch {epoch}"),
            });
        }
        let grounding_loss = g_sum / g_n as f64;
        let nll_loss = if n_n == 0 { 0.0 } else { n_sum / n_n as f64 };
        let record = EpochRecord {
            epoch,
            grounding_loss,
            nll_loss,
            joint_loss: joint_loss(grounding_loss, nll_loss, self.config.effective_lambda())?,
            lr,
            valid_miou: None,
        };
        self.epoch += 1;
        self.log.push(record.clone());
        Ok(record)
    }
}

/// Runs one epoch; see [`Trainer::train_epoch`].
pub fn train_epoch<G: Grounder>(
    trainer: &mut Trainer<G>,
    data: &PreparedData,
) -> Result<EpochRecord> {
    trainer.train_epoch(data)
}

/// Dumps and metrics of a model over one split.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub predictions: Vec<PredictionRecord>,
    pub translations: Vec<TranslationRecord>,
    pub clips: Vec<ClipFeatures>,
    pub report: MetricsReport,
}

/// Predicted interval and greedy translation for every sample.
pub fn predict<G: Grounder + Sync>(
    model: &ClosedLoopModel<G>,
    data: &PreparedData,
    config: &TrainConfig,
) -> Result<Vec<(PredictionRecord, TranslationRecord, ClipFeatures)>> {
    data.samples
        .par_iter()
        .map(|sample| {
            let (out, _, clip) = clip_for(model, data, sample, config.frames_per_clip)?;
            let clip_real = clip.frames.mapv(|x| x as Real);
            let decoded = model.translator.greedy_decode(
                &model.params,
                clip_real.view(),
                &sample.query_ids,
                config.model.translator.max_decode_len,
            )?;
            let pred = PredictionRecord {
                video_id: sample.video_id.clone(),
                query: sample.query.clone(),
                pred_start: out.interval_sec.start,
                pred_end: out.interval_sec.end,
                gold_start: sample.gold.start,
                gold_end: sample.gold.end,
            };
            let trans = TranslationRecord {
                video_id: sample.video_id.clone(),
                query: sample.query.clone(),
                gold_simplified: sample.target_tokens.clone(),
                predicted_simplified: model.target_vocab.decode(&decoded.token_indices),
            };
            Ok((pred, trans, clip))
        })
        .collect()
}

pub fn evaluate<G: Grounder + Sync>(
    model: &ClosedLoopModel<G>,
    data: &PreparedData,
    config: &TrainConfig,
) -> Result<Evaluation> {
    let rows = predict(model, data, config)?;
    let mut predictions = Vec::with_capacity(rows.len());
    let mut translations = Vec::with_capacity(rows.len());
    let mut clips = Vec::with_capacity(rows.len());
    for (p, t, c) in rows {
        predictions.push(p);
        translations.push(t);
        clips.push(c);
    }
    let report = compile_report(&predictions, Some(&translations), config.bleu_smoothing)?;
    Ok(Evaluation {
        predictions,
        translations,
        clips,
        report,
    })
}

/// Grounding-only mIoU over a split, used for best-checkpoint selection.
fn grounding_miou<G: Grounder + Sync>(
    model: &ClosedLoopModel<G>,
    data: &PreparedData,
) -> Result<f64> {
    let tious: Vec<f64> = data
        .samples
        .par_iter()
        .map(|s| {
            let video = data.video(s);
            let (out, _) = model.grounder.forward(
                &model.params,
                video.real.view(),
                &s.query_ids,
                s.duration,
            )?;
            Ok(crate::metrics::tiou(out.interval_sec, s.gold))
        })
        .collect::<Result<_>>()?;
    crate::metrics::miou(&tious)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub trainer: Trainer<ReferenceGrounder>,
    pub train: PreparedData,
    pub valid: PreparedData,
    pub test: PreparedData,
    /// Evaluation on the test split, or on train when the test split is empty.
    pub evaluation: Evaluation,
    pub evaluated_split: SplitName,
    pub checkpoints: Vec<PathBuf>,
}

fn append_log(path: &Path, records: &[EpochRecord], truncate: bool) -> Result<()> {
    let mut file = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(!truncate)
        .truncate(truncate)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    for r in records {
        writeln!(file, "{}", serde_json::to_string(r)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Splits, builds vocabularies and model, trains `total_epochs` (from a
/// checkpoint when `resume` is given), then evaluates.
///
/// With `out_dir` set, writes `log.jsonl`, periodic/best/last checkpoints,
/// and `predictions.jsonl`, `translations.jsonl`, `report.json`.
pub fn run_experiment(
    config: &TrainConfig,
    dataset: &Dataset,
    out_dir: Option<&Path>,
    resume: Option<&Checkpoint>,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    let mut dataset = dataset.clone();
    dataset.simplify(crate::simplify::SimplifyOptions {
        drop_subject: config.drop_subject,
    });
    let [train, valid, test] = split_dataset(&dataset.samples, config.split, config.seed)?;
    let (input_vocab, target_vocab) = build_vocabularies(&train.samples, config);
    let prep = |samples| {
        PreparedData::new(
            samples,
            &dataset.videos,
            &input_vocab,
            &target_vocab,
            config.max_query_len,
        )
    };
    let (train_data, valid_data, test_data) = (
        prep(&train.samples)?,
        prep(&valid.samples)?,
        prep(&test.samples)?,
    );

    let model = ClosedLoopModel::new(
        config,
        input_vocab.clone(),
        target_vocab.clone(),
        dataset.feature_dim(),
    )?;
    let mut trainer = Trainer::new(config.clone(), model);
    if let Some(ckpt) = resume {
        ckpt.restore(&mut trainer)?;
    }

    let mut checkpoints = Vec::new();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        append_log(&dir.join("log.jsonl"), &trainer.log, true)?;
    }
    while trainer.epoch < config.total_epochs {
        let mut record = trainer.train_epoch(&train_data)?;
        let done = trainer.epoch;
        if config.eval_every > 0 && done % config.eval_every == 0 && !valid_data.is_empty() {
            let m = grounding_miou(&trainer.model, &valid_data)?;
            record.valid_miou = Some(m);
            if let Some(last) = trainer.log.last_mut() {
                last.valid_miou = Some(m);
            }
            if trainer.best_valid_miou.is_none_or(|b| m > b) {
                trainer.best_valid_miou = Some(m);
                if let Some(dir) = out_dir {
                    let path = dir.join("best.ckpt");
                    save_checkpoint(&path, &Checkpoint::capture(&trainer))?;
                    if !checkpoints.contains(&path) {
                        checkpoints.push(path);
                    }
                }
            }
        }
        if let Some(dir) = out_dir {
            append_log(&dir.join("log.jsonl"), std::slice::from_ref(&record), false)?;
            if done % config.checkpoint_every == 0 {
                let path = dir.join(format!("epoch-{done:04}.ckpt"));
                save_checkpoint(&path, &Checkpoint::capture(&trainer))?;
                checkpoints.push(path);
            }
        }
    }

    let (eval_data, evaluated_split) = if test_data.is_empty() {
        (&train_data, SplitName::Train)
    } else {
        (&test_data, SplitName::Test)
    };
    let evaluation = evaluate(&trainer.model, eval_data, config)?;
    if let Some(dir) = out_dir {
        let path = dir.join("last.ckpt");
        save_checkpoint(&path, &Checkpoint::capture(&trainer))?;
        checkpoints.push(path);
        write_jsonl(&dir.join("predictions.jsonl"), &evaluation.predictions)?;
        write_jsonl(&dir.join("translations.jsonl"), &evaluation.translations)?;
        let report_path = dir.join("report.json");
        fs::write(
            &report_path,
            serde_json::to_string_pretty(&evaluation.report)?,
        )
        .map_err(|e| Error::io(&report_path, e))?;
    }
    debug_assert_eq!(config_hash(config), config_hash(&trainer.config));
    Ok(ExperimentOutcome {
        trainer,
        train: train_data,
        valid: valid_data,
        test: test_data,
        evaluation,
        evaluated_split,
        checkpoints,
    })
}
