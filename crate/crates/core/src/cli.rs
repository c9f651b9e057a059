//! Command-line front end: `gen-data`, `simplify`, `train`, `eval`,
//! `compare` and `report`.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
//! Every subcommand that writes a directory leaves a `manifest.json` in it.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    generate_synthetic, load_annotations, write_annotations, write_features, SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::metrics::{
    buckets_csv, compare, compile_report, grounding_csv, read_jsonl, translation_csv,
    MetricsReport, PredictionRecord, TranslationRecord,
};
use crate::simplify::{attach_simplified, corpus_stats, PosLexicon, SimplifyOptions};
use crate::training::{
    config_hash, load_checkpoint, run_experiment, Dataset, EpochRecord, TrainConfig,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "groundloop",
    version,
    about = "Closed-loop temporal grounding with query simplification"
)]
struct Cli {
    /// Print errors to stderr as one JSON object.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic planted-event corpus.
    GenData(GenDataArgs),
    /// Add simplified targets to an annotation file.
    Simplify(SimplifyArgs),
    /// Train grounder and translator jointly, then evaluate.
    Train(TrainArgs),
    /// Score prediction and translation dumps.
    Eval(EvalArgs),
    /// Bucket per-sample tIoU of two reports.
    Compare(CompareArgs),
    /// Write CSV tables and loss curves from a report and a training log.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    videos: usize,
    #[arg(long, default_value_t = 48)]
    frames: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
}

#[derive(Debug, Args)]
struct SimplifyArgs {
    #[arg(long)]
    annotations: PathBuf,
    /// Defaults to the bundled lexicon.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print corpus statistics as JSON.
    #[arg(long)]
    stats: bool,
    /// Drop nouns before the first verb.
    #[arg(long)]
    drop_subject: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// JSON config file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset: anet1..anet4 or toy-overfit.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, env = "EVOQUER_DATA_DIR")]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override the configured number of epochs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Write each evaluated clip as EVQF under `clips/`.
    #[arg(long)]
    dump_clips: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    trans: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "model")]
    name: String,
    #[arg(long)]
    smoothing: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    ours: PathBuf,
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "model")]
    name: String,
}

/// Inputs and outputs of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Path → SHA-256 of each input file (directories hash their contents).
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub crate_version: String,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// SHA-256 over sorted relative paths and contents of every file under
/// `dir`, ignoring manifests.
pub fn dir_hash(dir: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in files {
        let bytes = fs::read(dir.join(&rel)).map_err(|e| Error::io(dir.join(&rel), e))?;
        hasher.update(rel.as_bytes());
        hasher.update([0]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path.file_name().is_some_and(|n| n != MANIFEST_FILE) {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

fn hash_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        dir_hash(path)
    } else {
        file_hash(path)
    }
}

struct ManifestBuilder {
    manifest: RunManifest,
}

impl ManifestBuilder {
    fn new(command: &str, args: &[String]) -> Self {
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                args: args.to_vec(),
                config_hash: String::new(),
                seed: None,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                started_unix: now(),
                finished_unix: 0,
                crate_version: env!("CARGO_PKG_VERSION").to_string(),
            },
        }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        let h = hash_path(path)?;
        self.manifest.inputs.insert(path.display().to_string(), h);
        Ok(())
    }

    fn finish(mut self, out_dir: &Path) -> Result<RunManifest> {
        let mut files = Vec::new();
        collect_files(out_dir, out_dir, &mut files)?;
        files.sort();
        for rel in files {
            let h = file_hash(&out_dir.join(&rel))?;
            self.manifest.outputs.insert(rel, h);
        }
        self.manifest.finished_unix = now();
        let path = out_dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&self.manifest)?)
            .map_err(|e| Error::io(&path, e))?;
        Ok(self.manifest)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `epoch,grounding_loss,nll_loss,joint_loss,lr`, one row per record.
pub fn loss_curve_csv(log: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,grounding_loss,nll_loss,joint_loss,lr\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.grounding_loss, r.nll_loss, r.joint_loss, r.lr
        ));
    }
    out
}

/// Writes `grounding.csv`, `translation.csv`, `loss.csv` and, when the report
/// carries bucket counts, `buckets.csv`. Returns the written paths.
pub fn emit_report_assets(
    report: &MetricsReport,
    log: &[EpochRecord],
    name: &str,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut files = vec![
        (dir.join("grounding.csv"), grounding_csv(&[(name, report)])),
        (
            dir.join("translation.csv"),
            translation_csv(&[(name, report)]),
        ),
        (dir.join("loss.csv"), loss_curve_csv(log)),
    ];
    if let Some(b) = report.buckets {
        files.push((dir.join("buckets.csv"), buckets_csv(&[b])));
    }
    for (path, text) in &files {
        write(path, text)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

fn gen_data(a: &GenDataArgs, argv: &[String]) -> Result<()> {
    let config = SyntheticConfig {
        n_videos: a.videos,
        frames: a.frames,
        feature_dim: a.dim,
        ..SyntheticConfig::default()
    };
    let mut manifest = ManifestBuilder::new("gen-data", argv);
    manifest.manifest.seed = Some(a.seed);
    manifest.manifest.config_hash = hex::encode(Sha256::digest(serde_json::to_vec(&config)?));
    let ds = generate_synthetic(&config, a.seed)?;
    create_dir(&a.out)?;
    ds.write(&a.out)?;
    manifest.finish(&a.out)?;
    println!(
        "wrote {} videos and {} queries to {}",
        ds.videos.len(),
        ds.samples.len(),
        a.out.display()
    );
    Ok(())
}

fn simplify(a: &SimplifyArgs) -> Result<()> {
    let lexicon = match &a.lexicon {
        Some(p) => PosLexicon::load(p)?,
        None => PosLexicon::bundled(),
    };
    let mut samples = load_annotations(&a.annotations)?;
    for s in samples.iter_mut() {
        s.simplified_gold = None;
    }
    attach_simplified(
        &mut samples,
        &lexicon,
        SimplifyOptions {
            drop_subject: a.drop_subject,
        },
    );
    if let Some(out) = &a.out {
        write_annotations(out, &samples)?;
    }
    if a.stats {
        println!(
            "{}",
            serde_json::to_string_pretty(&corpus_stats(&samples, &lexicon)?)?
        );
    }
    Ok(())
}

fn train(a: &TrainArgs, argv: &[String]) -> Result<()> {
    let mut config = match (&a.config, &a.preset) {
        (Some(path), _) => TrainConfig::load(path)?,
        (None, Some(name)) => TrainConfig::preset(name)?,
        (None, None) => {
            return Err(Error::Config(
                "one of --config or --preset is required".into(),
            ))
        }
    };
    if let Some(e) = a.epochs {
        config.total_epochs = e;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    config.validate()?;
    let mut manifest = ManifestBuilder::new("train", argv);
    manifest.manifest.config_hash = config_hash(&config);
    manifest.manifest.seed = Some(config.seed);
    if let Some(path) = &a.config {
        manifest.input(path)?;
    }
    manifest.input(&a.data)?;
    let resume = match &a.resume {
        Some(path) => {
            manifest.input(path)?;
            Some(load_checkpoint(path)?)
        }
        None => None,
    };

    let dataset = Dataset::load(&a.data)?;
    create_dir(&a.out)?;
    let path = a.out.join("config.json");
    write(&path, &serde_json::to_string_pretty(&config)?)?;
    let outcome = run_experiment(&config, &dataset, Some(&a.out), resume.as_ref())?;
    emit_report_assets(
        &outcome.evaluation.report,
        &outcome.trainer.log,
        "model",
        &a.out.join("tables"),
    )?;
    if a.dump_clips {
        let dir = a.out.join("clips");
        create_dir(&dir)?;
        for (i, (clip, p)) in outcome
            .evaluation
            .clips
            .iter()
            .zip(&outcome.evaluation.predictions)
            .enumerate()
        {
            write_features(
                dir.join(format!("{i:05}_{}.evqf", p.video_id)),
                &clip.frames,
            )?;
        }
    }
    manifest.finish(&a.out)?;
    let r = &outcome.evaluation.report;
    println!(
        "{} split: R@0.3 {:.2}  R@0.5 {:.2}  R@0.7 {:.2}  mIoU {:.2}",
        outcome.evaluated_split, r.r_at_03, r.r_at_05, r.r_at_07, r.miou
    );
    Ok(())
}

fn eval(a: &EvalArgs, argv: &[String]) -> Result<()> {
    let mut manifest = ManifestBuilder::new("eval", argv);
    manifest.input(&a.pred)?;
    let preds: Vec<PredictionRecord> = read_jsonl(&a.pred)?;
    let trans: Option<Vec<TranslationRecord>> = match &a.trans {
        Some(p) => {
            manifest.input(p)?;
            Some(read_jsonl(p)?)
        }
        None => None,
    };
    let report = compile_report(&preds, trans.as_deref(), a.smoothing)?;
    create_dir(&a.out)?;
    write(
        &a.out.join("report.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;
    write(
        &a.out.join("report.csv"),
        &grounding_csv(&[(&a.name, &report)]),
    )?;
    if trans.is_some() {
        write(
            &a.out.join("translation.csv"),
            &translation_csv(&[(&a.name, &report)]),
        )?;
    }
    manifest.finish(&a.out)?;
    print!("{}", grounding_csv(&[(&a.name, &report)]));
    Ok(())
}

fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn compare_cmd(a: &CompareArgs, argv: &[String]) -> Result<()> {
    let ours = read_report(&a.ours)?;
    let base = read_report(&a.base)?;
    let counts = compare(&ours, &base)?;
    let csv = buckets_csv(&[counts]);
    if let Some(out) = &a.out {
        let mut manifest = ManifestBuilder::new("compare", argv);
        manifest.input(&a.ours)?;
        manifest.input(&a.base)?;
        create_dir(out)?;
        write(&out.join("buckets.csv"), &csv)?;
        write(
            &out.join("buckets.json"),
            &serde_json::to_string_pretty(&counts)?,
        )?;
        manifest.finish(out)?;
    }
    print!("{csv}");
    Ok(())
}

fn report_cmd(a: &ReportArgs, argv: &[String]) -> Result<()> {
    let mut manifest = ManifestBuilder::new("report", argv);
    manifest.input(&a.report)?;
    let report = read_report(&a.report)?;
    let log: Vec<EpochRecord> = match &a.log {
        Some(p) => {
            manifest.input(p)?;
            read_jsonl(p)?
        }
        None => Vec::new(),
    };
    emit_report_assets(&report, &log, &a.name, &a.out)?;
    manifest.finish(&a.out)?;
    Ok(())
}

fn dispatch(cli: &Cli, argv: &[String]) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(a, argv),
        Command::Simplify(a) => simplify(a),
        Command::Train(a) => train(a, argv),
        Command::Eval(a) => eval(a, argv),
        Command::Compare(a) => compare_cmd(a, argv),
        Command::Report(a) => report_cmd(a, argv),
    }
}

fn report_error(err: &Error, json: bool) -> i32 {
    let code = if err.is_validation() { 1 } else { 2 };
    if json {
        let mut obj = serde_json::json!({ "error": err.kind(), "message": err.to_string(), "exit_code": code });
        match err {
            Error::NonFinite { sample_ids, .. } => {
                obj["sample_ids"] = serde_json::json!(sample_ids)
            }
            Error::Join { missing } => obj["missing"] = serde_json::json!(missing),
            _ => {}
        }
        eprintln!("{obj}");
    } else {
        eprintln!("error: {err}");
    }
    code
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let json = argv.iter().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            if json && code != 0 {
                let obj = serde_json::json!({ "error": "usage", "message": e.to_string(), "exit_code": code });
                eprintln!("{obj}");
            } else {
                let _ = e.print();
            }
            return code;
        }
    };
    let args: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match dispatch(&cli, &args) {
        Ok(()) => 0,
        Err(e) => report_error(&e, cli.json_errors),
    }
}

/// Replays the invocation recorded in `manifest`, with `--out` redirected
/// to `out` when given.
pub fn rerun(manifest: &Path, out: Option<&Path>) -> Result<i32> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let m: RunManifest = serde_json::from_str(&text)?;
    let mut args = m.args.clone();
    if let Some(out) = out {
        match args.iter().position(|a| a == "--out") {
            Some(i) if i + 1 < args.len() => args[i + 1] = out.display().to_string(),
            _ => return Err(Error::Validation("manifest has no --out argument".into())),
        }
    }
    let argv = std::iter::once("groundloop".to_string()).chain(args);
    Ok(run(argv))
}
