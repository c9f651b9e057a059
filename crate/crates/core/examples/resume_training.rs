//! Trains with periodic checkpoints, resumes from the middle one and
//! confirms the resumed run ends on the same parameters.
//!
//!     cargo run --release --example resume_training

use groundloop::corpus::{generate_synthetic, SyntheticConfig};
use groundloop::training::{load_checkpoint, run_experiment, Dataset, TrainConfig};

fn main() -> groundloop::Result<()> {
    let dir = std::env::temp_dir().join("groundloop-resume-example");
    let mut config = TrainConfig::preset("toy-overfit")?;
    config.total_epochs = 30;
    config.checkpoint_every = 10;
    let dataset = Dataset::from_synthetic(&generate_synthetic(&SyntheticConfig::default(), 7)?)?;

    let full = run_experiment(&config, &dataset, Some(&dir), None)?;
    for p in &full.checkpoints {
        println!("wrote {}", p.display());
    }
    let ckpt = load_checkpoint(dir.join("epoch-0020.ckpt"))?;
    println!(
        "checkpoint at epoch {}, config {}",
        ckpt.header.epoch,
        &ckpt.header.config_hash[..12]
    );

    let resumed = run_experiment(&config, &dataset, None, Some(&ckpt))?;
    let max_diff = full
        .trainer
        .model
        .params
        .tensors()
        .iter()
        .zip(resumed.trainer.model.params.tensors())
        .flat_map(|(a, b)| {
            a.value
                .iter()
                .zip(b.value.iter())
                .map(|(x, y)| (*x as f64 - *y as f64).abs())
        })
        .fold(0.0, f64::max);
    println!("max parameter difference after resuming: {max_diff:e}");
    println!(
        "logs identical: {}",
        full.trainer.log == resumed.trainer.log
    );
    Ok(())
}
