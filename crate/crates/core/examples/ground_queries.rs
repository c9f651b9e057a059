//! Trains only the grounder and prints predicted intervals with the
//! attention profile over frames.
//!
//!     cargo run --release --example ground_queries [epochs]

use groundloop::corpus::{generate_synthetic, SyntheticConfig};
use groundloop::grounder::Grounder;
use groundloop::metrics::tiou;
use groundloop::training::{run_experiment, Dataset, Mode, TrainConfig};

fn sparkline(weights: &[f64]) -> String {
    let bars = [' ', '.', ':', '-', '=', '+', '*', '#'];
    let max = weights.iter().cloned().fold(f64::MIN, f64::max);
    weights
        .iter()
        .map(|w| bars[((w / max) * 7.0).round() as usize])
        .collect()
}

fn main() -> groundloop::Result<()> {
    let mut config = TrainConfig::preset("toy-overfit")?;
    config.mode = Mode::GroundingOnly;
    config.total_epochs = std::env::args()
        .nth(1)
        .map_or(150, |e| e.parse().expect("epochs"));
    let dataset = Dataset::from_synthetic(&generate_synthetic(&SyntheticConfig::default(), 7)?)?;
    let outcome = run_experiment(&config, &dataset, None, None)?;
    let model = &outcome.trainer.model;
    if let Some(last) = outcome.trainer.log.last() {
        println!("final grounding loss {:.4}", last.grounding_loss);
    }

    for sample in outcome.train.samples.iter().take(6) {
        let video = outcome.train.video(sample);
        let (out, _) = model.grounder.forward(
            &model.params,
            video.real.view(),
            &sample.query_ids,
            sample.duration,
        )?;
        println!(
            "{:<28} gold [{:5.2}, {:5.2}] pred [{:5.2}, {:5.2}] tIoU {:.2}",
            sample.query,
            sample.gold.start,
            sample.gold.end,
            out.interval_sec.start,
            out.interval_sec.end,
            tiou(out.interval_sec, sample.gold)
        );
        println!("  |{}|", sparkline(&out.attention));
    }
    Ok(())
}
