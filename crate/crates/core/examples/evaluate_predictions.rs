//! Scores prediction and translation dumps (JSONL) and prints the tables.
//! Without arguments, scores a small built-in example.
//!
//!     cargo run --example evaluate_predictions -- predictions.jsonl [translations.jsonl]

use std::path::Path;

use groundloop::metrics::{
    compile_report, grounding_csv, read_jsonl, translation_csv, PredictionRecord, TranslationRecord,
};

fn demo() -> (Vec<PredictionRecord>, Vec<TranslationRecord>) {
    let rows = [
        (
            "v1",
            "person opens the door",
            (2.0, 6.0),
            (2.5, 6.0),
            "open door",
            "open door",
        ),
        (
            "v2",
            "a person is eating a sandwich",
            (10.0, 14.0),
            (11.0, 18.0),
            "eat sandwich",
            "eat food",
        ),
        (
            "v3",
            "the person closes a laptop",
            (0.0, 3.0),
            (5.0, 8.0),
            "close laptop",
            "take laptop",
        ),
    ];
    let mut preds = Vec::new();
    let mut trans = Vec::new();
    for (id, q, gold, pred, g, p) in rows {
        preds.push(PredictionRecord {
            video_id: id.into(),
            query: q.into(),
            pred_start: pred.0,
            pred_end: pred.1,
            gold_start: gold.0,
            gold_end: gold.1,
        });
        trans.push(TranslationRecord {
            video_id: id.into(),
            query: q.into(),
            gold_simplified: g.split(' ').map(String::from).collect(),
            predicted_simplified: p.split(' ').map(String::from).collect(),
        });
    }
    (preds, trans)
}

fn main() -> groundloop::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (preds, trans) = match args.as_slice() {
        [] => {
            let (p, t) = demo();
            (p, Some(t))
        }
        [p] => (read_jsonl(Path::new(p))?, None),
        [p, t, ..] => (read_jsonl(Path::new(p))?, Some(read_jsonl(Path::new(t))?)),
    };
    let report = compile_report(&preds, trans.as_deref(), false)?;
    print!("{}", grounding_csv(&[("model", &report)]));
    if trans.is_some() {
        print!("{}", translation_csv(&[("model", &report)]));
    }
    for s in report.samples.iter().take(10) {
        println!("  {} {:?} tIoU {:.3}", s.video_id, s.query, s.tiou);
    }
    Ok(())
}
