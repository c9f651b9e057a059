//! Writes the synthetic corpus to a directory and loads it back.
//!
//!     cargo run --example generate_corpus -- /tmp/syn [seed]

use std::path::PathBuf;

use groundloop::corpus::{generate_synthetic, SyntheticConfig};
use groundloop::training::Dataset;

fn main() -> groundloop::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synthetic-data".into()));
    let seed = args.next().map_or(7, |s| s.parse().expect("seed"));

    let synthetic = generate_synthetic(&SyntheticConfig::default(), seed)?;
    let files = synthetic.write(&dir)?;
    println!(
        "wrote {} feature files, {}, {}",
        files.feature_files.len(),
        files.annotations.display(),
        files.lexicon.display()
    );

    let loaded = Dataset::load(&dir)?;
    println!(
        "{} videos, {} queries, {}-dim features",
        loaded.videos.len(),
        loaded.samples.len(),
        loaded.feature_dim()
    );
    for s in loaded.samples.iter().take(5) {
        println!(
            "  {}  [{:6.2}, {:6.2}]  {:?}",
            s.video_id, s.gold.start, s.gold.end, s.query
        );
    }
    Ok(())
}
