//! Buckets per-sample outcomes of two models by the highest tIoU
//! threshold each clears.
//!
//!     cargo run --example compare_models -- ours/report.json base/report.json

use groundloop::metrics::{bucket, buckets_csv, compare, BucketCounts, MetricsReport};

fn load(path: &str) -> groundloop::Result<MetricsReport> {
    let text = std::fs::read_to_string(path).map_err(|e| groundloop::Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn main() -> groundloop::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let counts = if let [ours, base] = args.as_slice() {
        compare(&load(ours)?, &load(base)?)?
    } else {
        let pairs = [
            (0.72, 0.41),
            (0.35, 0.55),
            (0.52, 0.58),
            (0.10, 0.25),
            (0.81, 0.20),
            (0.29, 0.31),
        ];
        let mut counts = BucketCounts::default();
        for (ours, base) in pairs {
            println!(
                "ours {ours:.2}  base {base:.2}  -> {:?}",
                bucket(ours, base)
            );
            counts.push(ours, base);
        }
        counts
    };
    print!("{}", buckets_csv(&[counts]));
    if counts.mixed_up + counts.mixed_down > 0 {
        println!(
            "(one side below 0.3: {} up, {} down)",
            counts.mixed_up, counts.mixed_down
        );
    }
    Ok(())
}
