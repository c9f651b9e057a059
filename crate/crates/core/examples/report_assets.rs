//! Runs the command-line pipeline in-process: generate data, train a few
//! epochs, then emit tables and the loss curve.
//!
//!     cargo run --release --example report_assets -- /tmp/run

use std::path::PathBuf;

use groundloop::cli;

fn main() {
    let root = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "report-example".into()),
    );
    let data = root.join("data");
    let run = root.join("run");
    let tables = root.join("tables");
    let steps: [Vec<String>; 3] = [
        vec![
            "gen-data".into(),
            "--out".into(),
            data.display().to_string(),
        ],
        vec![
            "train".into(),
            "--preset".into(),
            "toy-overfit".into(),
            "--epochs".into(),
            "40".into(),
            "--data".into(),
            data.display().to_string(),
            "--out".into(),
            run.display().to_string(),
        ],
        vec![
            "report".into(),
            "--report".into(),
            run.join("report.json").display().to_string(),
            "--log".into(),
            run.join("log.jsonl").display().to_string(),
            "--out".into(),
            tables.display().to_string(),
        ],
    ];
    for args in steps {
        let code = cli::run(std::iter::once("groundloop".to_string()).chain(args.clone()));
        if code != 0 {
            eprintln!("`{}` failed with exit code {code}", args.join(" "));
            std::process::exit(code);
        }
    }
    for entry in std::fs::read_dir(&tables).expect("tables dir") {
        let path = entry.expect("entry").path();
        if path.extension().is_some_and(|e| e == "json") {
            continue;
        }
        println!("== {}", path.display());
        let text = std::fs::read_to_string(&path).unwrap_or_default();
        for line in text.lines().take(6) {
            println!("{line}");
        }
    }
}
