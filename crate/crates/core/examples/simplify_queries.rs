//! Simplifies queries read from stdin, one per line, with the bundled
//! lexicon, and prints corpus statistics for the batch.
//!
//!     echo "A person closes the door." | cargo run --example simplify_queries

use std::io::BufRead;

use groundloop::corpus::{GroundingSample, Interval};
use groundloop::simplify::{corpus_stats, simplify_query, tag_and_lemmatize, tokenize, PosLexicon};

fn main() -> groundloop::Result<()> {
    let lexicon = PosLexicon::bundled();
    let verbose = std::env::args().any(|a| a == "--tags");
    let mut samples = Vec::new();
    for (i, line) in std::io::stdin().lock().lines().enumerate() {
        let line = line.map_err(|e| groundloop::Error::io("<stdin>", e))?;
        let tokens = tokenize(&line);
        if tokens.is_empty() {
            continue;
        }
        println!("{line}\t{}", simplify_query(&tokens, &lexicon));
        if verbose {
            for t in tag_and_lemmatize(&tokens, &lexicon) {
                println!("    {:<12} {:<5} {}", t.surface, t.pos, t.lemma);
            }
        }
        samples.push(GroundingSample::new(
            format!("q{i}"),
            line,
            Interval::new(0.0, 1.0),
            1.0,
        )?);
    }
    if !samples.is_empty() {
        eprintln!(
            "{}",
            serde_json::to_string(&corpus_stats(&samples, &lexicon)?)?
        );
    }
    Ok(())
}
