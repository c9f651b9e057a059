//! Compares analytic gradients of the full grounder and translator with
//! central differences.
//!
//!     cargo run --release --example gradient_check

use groundloop::corpus::Interval;
use groundloop::grounder::{Grounder, ReferenceGrounder, ReferenceGrounderConfig};
use groundloop::neural::{grad_check, Embedding, ParameterSet, Real};
use groundloop::translator::{Translator, TranslatorConfig};
use ndarray::Array2;

fn main() -> groundloop::Result<()> {
    let video = Array2::from_shape_fn((9, 6), |(i, j)| ((i * 6 + j) as Real * 0.53).cos());
    let query = [4, 7, 5];

    let mut p = ParameterSet::new(1);
    let emb = Embedding::new(&mut p, "words", 10, 5)?;
    let cfg = ReferenceGrounderConfig {
        embed_dim: 5,
        hidden: 4,
        attn_dim: 3,
        head_hidden: 6,
        loss: Default::default(),
    };
    let grounder = ReferenceGrounder::new(&mut p, "grounder", emb, 6, &cfg)?;
    let gold = Interval::new(2.0, 5.5);
    let report = grad_check(&mut p, 1e-5, None, |p, g| {
        let (out, cache) = grounder.forward(p, video.view(), &query, 9.0).unwrap();
        match g {
            Some(g) => grounder
                .backward(p, g, &cache, &out, gold, 9.0, 1.0)
                .unwrap() as Real,
            None => grounder.loss(&out, gold, 9.0).unwrap() as Real,
        }
    });
    println!(
        "grounder:   max relative error {:.2e} ({})",
        report.max_rel_error, report.worst_param
    );

    let mut p = ParameterSet::new(2);
    let emb = Embedding::new(&mut p, "words", 10, 5)?;
    let cfg = TranslatorConfig {
        frame_dim: 4,
        hidden: 4,
        decoder_hidden: 5,
        attn_dim: 3,
        target_embed_dim: 4,
        max_decode_len: 4,
    };
    let translator = Translator::new(&mut p, "translator", emb, 6, 12, &cfg)?;
    let report = grad_check(&mut p, 1e-5, None, |p, g| {
        let (loss, cache) = translator
            .forward_teacher_forced(p, video.view(), &query, &[5, 9])
            .unwrap();
        if let Some(g) = g {
            translator.backward(p, g, &cache, 1.0);
        }
        loss
    });
    println!(
        "translator: max relative error {:.2e} ({})",
        report.max_rel_error, report.worst_param
    );
    Ok(())
}
