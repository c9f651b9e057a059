//! Trains the closed loop briefly, then traces a few samples through
//! grounder, clip resampling and greedy translation.
//!
//!     cargo run --release --example simplification_translator [epochs]

use groundloop::corpus::{generate_synthetic, SyntheticConfig};
use groundloop::grounder::Grounder;
use groundloop::neural::Real;
use groundloop::resampler::{interval_to_frames, resample_n};
use groundloop::training::{run_experiment, Dataset, TrainConfig};

fn main() -> groundloop::Result<()> {
    let mut config = TrainConfig::preset("toy-overfit")?;
    config.total_epochs = std::env::args()
        .nth(1)
        .map_or(120, |e| e.parse().expect("epochs"));
    let dataset = Dataset::from_synthetic(&generate_synthetic(&SyntheticConfig::default(), 7)?)?;
    let outcome = run_experiment(&config, &dataset, None, None)?;
    let model = &outcome.trainer.model;

    for sample in outcome.train.samples.iter().take(5) {
        let video = outcome.train.video(sample);
        let (out, _) = model.grounder.forward(
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
        let clip = resample_n(&video.features, s, e, config.frames_per_clip)?;
        let decoded = model.translator.greedy_decode(
            &model.params,
            clip.frames.mapv(|x| x as Real).view(),
            &sample.query_ids,
            config.model.translator.max_decode_len,
        )?;
        let words = model.target_vocab.decode(&decoded.token_indices);
        let peak = decoded.video_attention.first().map(|w| {
            w.iter()
                .enumerate()
                .fold((0, 0.0), |b, (i, &x)| if x > b.1 { (i, x) } else { b })
        });
        println!("{:?}", sample.query);
        println!(
            "  gold [{:.2}, {:.2}]  pred [{:.2}, {:.2}]  frames [{s}, {e})",
            sample.gold.start, sample.gold.end, out.interval_sec.start, out.interval_sec.end
        );
        println!(
            "  target {:?}  decoded {:?}  first-step attention peak {:?}",
            sample.target_tokens.join(" "),
            words.join(" "),
            peak
        );
    }
    Ok(())
}
