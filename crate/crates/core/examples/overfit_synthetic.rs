//! Trains the `toy-overfit` preset on the synthetic corpus and reports
//! train-split grounding and translation scores.
//!
//!     cargo run --release --example overfit_synthetic [epochs]

use std::time::Instant;

use groundloop::corpus::{generate_synthetic, SyntheticConfig};
use groundloop::metrics::format_pct;
use groundloop::training::{evaluate, run_experiment, Dataset, TrainConfig};

fn main() -> groundloop::Result<()> {
    let mut config = TrainConfig::preset("toy-overfit")?;
    if let Some(epochs) = std::env::args().nth(1) {
        config.total_epochs = epochs.parse().expect("epoch count");
    }
    let synthetic = generate_synthetic(&SyntheticConfig::default(), 7)?;
    let dataset = Dataset::from_synthetic(&synthetic)?;

    let started = Instant::now();
    let outcome = run_experiment(&config, &dataset, None, None)?;
    for r in outcome
        .trainer
        .log
        .iter()
        .filter(|r| r.epoch % 25 == 0 || r.epoch + 1 == config.total_epochs)
    {
        println!(
            "epoch {:>3}  ground {:.4}  nll {:.4}  joint {:.4}  lr {:.1e}",
            r.epoch, r.grounding_loss, r.nll_loss, r.joint_loss, r.lr
        );
    }
    println!(
        "trained {} epochs in {:.1?}",
        config.total_epochs,
        started.elapsed()
    );

    let train = evaluate(&outcome.trainer.model, &outcome.train, &config)?;
    let r = &train.report;
    println!(
        "train: R@0.3 {}  R@0.5 {}  R@0.7 {}  mIoU {}  BLEU-1 {}  BLEU-2 {}",
        format_pct(r.r_at_03),
        format_pct(r.r_at_05),
        format_pct(r.r_at_07),
        format_pct(r.miou),
        format_pct(r.bleu1.unwrap_or(0.0)),
        format_pct(r.bleu2.unwrap_or(0.0)),
    );
    for t in train.translations.iter().take(4) {
        println!("  {:?} -> {:?}", t.query, t.predicted_simplified.join(" "));
    }
    Ok(())
}
