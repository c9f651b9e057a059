//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use groundloop::cli::{self, dir_hash};
use groundloop::corpus::{
    generate_synthetic, load_annotations, Interval, SyntheticConfig, VideoFeatures,
};
use groundloop::grounder::{Grounder, ReferenceGrounder, ReferenceGrounderConfig};
use groundloop::metrics::{self, bleu, bucket, corpus_bleu, format_pct, Bucket, BucketCounts};
use groundloop::neural::ops::concat;
use groundloop::neural::{
    grad_check, AdditiveAttention, BiLstm, Embedding, Init, LstmCell, ParameterSet, Real,
};
use groundloop::resampler::{interval_to_frames, resample32, resample_indices};
use groundloop::simplify::{corpus_stats, simplify_query, tokenize, PosLexicon, StatsRecord};
use groundloop::training::{
    accumulate_batch, evaluate, load_checkpoint, run_experiment, Dataset, Mode, TrainConfig,
};
use groundloop::translator::{Translator, TranslatorConfig};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure(
        (a - b).abs() <= tol,
        format!("{what}: got {a}, expected {b}"),
    )
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(
        elapsed < limit,
        format!("took {elapsed:.1?}, limit {limit:?}"),
    )
}

// ---------------------------------------------------------------- 1

/// Clipped n-gram precision counted by plain scans, no maps.
fn oracle_counts(pred: &[String], gold: &[String], n: usize) -> (usize, usize) {
    if pred.len() < n {
        return (0, 0);
    }
    let grams = |s: &[String]| -> Vec<Vec<String>> {
        (0..=s.len() - n.min(s.len()))
            .filter(|i| i + n <= s.len())
            .map(|i| s[i..i + n].to_vec())
            .collect()
    };
    let cand = grams(pred);
    let refs = if gold.len() >= n {
        grams(gold)
    } else {
        Vec::new()
    };
    let mut seen: Vec<Vec<String>> = Vec::new();
    let mut matched = 0;
    for g in &cand {
        if seen.contains(g) {
            continue;
        }
        seen.push(g.clone());
        let in_cand = cand.iter().filter(|x| *x == g).count();
        let in_ref = refs.iter().filter(|x| *x == g).count();
        matched += in_cand.min(in_ref);
    }
    (matched, cand.len())
}

fn oracle_score(counts: &[(usize, usize)], pred_len: usize, ref_len: usize) -> f64 {
    if pred_len == 0 || counts.iter().any(|(m, t)| *m == 0 || *t == 0) {
        return 0.0;
    }
    let n = counts.len() as f64;
    let mut geo = 1.0;
    for (m, t) in counts {
        geo *= (*m as f64 / *t as f64).powf(1.0 / n);
    }
    let bp = if pred_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / pred_len as f64).exp()
    };
    bp * geo
}

fn criterion_metrics() -> Check {
    let tol = 1e-9;
    let iv = Interval::new;
    close(
        metrics::tiou(iv(2.0, 6.0), iv(2.0, 6.0)),
        1.0,
        tol,
        "tiou identity",
    )?;
    close(
        metrics::tiou(iv(0.0, 1.0), iv(5.0, 6.0)),
        0.0,
        tol,
        "tiou disjoint",
    )?;
    close(
        metrics::tiou(iv(0.0, 10.0), iv(5.0, 15.0)),
        5.0 / 15.0,
        tol,
        "tiou overlap",
    )?;
    let t = [0.8, 0.4, 0.2];
    let r = |th| metrics::recall_at(&t, th).unwrap();
    close(r(0.3), 200.0 / 3.0, tol, "R@0.3")?;
    close(r(0.7), 100.0 / 3.0, tol, "R@0.7")?;
    ensure(
        format_pct(r(0.3)) == "66.67" && format_pct(r(0.7)) == "33.33",
        "recall formatting",
    )?;
    ensure(format_pct(100.0 * 0.3468) == "34.68", "34.68 formatting")?;
    ensure(
        metrics::recall_at(&[], 0.3).is_err(),
        "empty recall accepted",
    )?;
    close(
        metrics::miou(&[1.0, 1.0]).unwrap(),
        100.0,
        tol,
        "mIoU perfect",
    )?;
    close(metrics::miou(&t).unwrap(), 140.0 / 3.0, tol, "mIoU mean")?;
    close(metrics::miou(&[0.0]).unwrap(), 0.0, tol, "mIoU zero")?;
    close(
        metrics::jaccard_words(&["close", "door"], &["close", "door"]),
        1.0,
        tol,
        "jaccard identity",
    )?;
    close(
        metrics::jaccard_words(&["open", "door"], &["close", "door"]),
        1.0 / 3.0,
        tol,
        "jaccard partial",
    )?;
    close(
        metrics::jaccard_words(&["door", "door"], &["door"]),
        1.0,
        tol,
        "jaccard duplicates",
    )?;
    close(
        bleu(&["close", "door"], &["close", "door"], 2, false),
        1.0,
        tol,
        "bleu identity",
    )?;
    close(
        bleu(&["close", "door"], &["open", "door"], 1, false),
        0.5,
        tol,
        "bleu-1 partial",
    )?;
    close(
        bleu(&["door", "door"], &["close", "door"], 1, false),
        0.5,
        tol,
        "bleu-1 clipping",
    )?;

    let words = ["close", "open", "door", "bag", "cup"];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sent = |rng: &mut ChaCha8Rng| -> Vec<String> {
        let len = rng.random_range(1..=6);
        (0..len)
            .map(|_| words[rng.random_range(0..words.len())].to_string())
            .collect()
    };
    let pairs: Vec<(Vec<String>, Vec<String>)> =
        (0..200).map(|_| (sent(&mut rng), sent(&mut rng))).collect();
    let mut worst = 0.0f64;
    for (p, g) in &pairs {
        for max_n in [1, 2] {
            let counts: Vec<_> = (1..=max_n).map(|n| oracle_counts(p, g, n)).collect();
            let expected = oracle_score(&counts, p.len(), g.len());
            worst = worst.max((bleu(p, g, max_n, false) - expected).abs());
        }
    }
    for max_n in [1, 2] {
        let mut counts = vec![(0, 0); max_n];
        let (mut pl, mut rl) = (0, 0);
        for (p, g) in &pairs {
            for (n, c) in counts.iter_mut().enumerate() {
                let (m, t) = oracle_counts(p, g, n + 1);
                c.0 += m;
                c.1 += t;
            }
            pl += p.len();
            rl += g.len();
        }
        worst =
            worst.max((corpus_bleu(&pairs, max_n, false) - oracle_score(&counts, pl, rl)).abs());
    }
    ensure(
        worst <= tol,
        format!("BLEU differs from oracle by {worst:e}"),
    )?;
    Ok(format!(
        "hand examples exact; BLEU max deviation {worst:.1e} over 200 pairs"
    ))
}

// ---------------------------------------------------------------- 2

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<Real> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

struct GradTally {
    worst: f64,
    worst_block: String,
    checks: usize,
}

impl GradTally {
    fn record(&mut self, block: &str, err: f64) {
        self.checks += 1;
        if err > self.worst || !err.is_finite() {
            self.worst = if err.is_finite() { err } else { f64::INFINITY };
            self.worst_block = block.to_string();
        }
    }
}

const EPS: f64 = 1e-5;

fn criterion_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tally = GradTally {
        worst: 0.0,
        worst_block: String::new(),
        checks: 0,
    };
    let dim = |rng: &mut ChaCha8Rng| rng.random_range(2..=8usize);
    let len = |rng: &mut ChaCha8Rng| rng.random_range(1..=7usize);

    for trial in 0..4 {
        let seed = 100 + trial;

        // Embedding.
        let (v, d, n) = (dim(&mut rng), dim(&mut rng), len(&mut rng));
        let ids: Vec<usize> = (0..n).map(|_| rng.random_range(0..v)).collect();
        let w = random_matrix(&mut rng, n, d);
        let mut p = ParameterSet::new(seed);
        let emb = Embedding::new(&mut p, "emb", v, d).unwrap();
        let rep = grad_check(&mut p, EPS, None, |p, g| {
            let out = emb.forward(p, &ids).unwrap();
            if let Some(g) = g {
                emb.backward(g, &ids, w.view());
            }
            (&out * &w).sum()
        });
        tally.record("embedding", rep.max_rel_error);

        // Bidirectional encoder, input gradient included.
        let (d, h, n) = (dim(&mut rng), dim(&mut rng), len(&mut rng));
        let mut p = ParameterSet::new(seed);
        let enc = BiLstm::new(&mut p, "enc", d, h).unwrap();
        let x = p
            .add_value("x", random_matrix(&mut rng, n, d), false)
            .unwrap();
        let wh = random_matrix(&mut rng, n, 2 * h);
        let wf = Array1::from_shape_fn(2 * h, |_| rng.random_range(-1.0..1.0));
        let rep = grad_check(&mut p, EPS, None, |p, g| {
            let (out, cache) = enc.encode(p, p.get(x).view()).unwrap();
            if let Some(g) = g {
                let dx = enc.backward(p, g, &cache, wh.view(), wf.view());
                g[x] += &dx;
            }
            (&out.hiddens * &wh).sum() + out.final_state.dot(&wf)
        });
        tally.record("bidirectional encoder", rep.max_rel_error);

        // Attention: context path and direct weight path.
        for direct in [false, true] {
            let (qd, kd, a, n) = (dim(&mut rng), dim(&mut rng), dim(&mut rng), len(&mut rng));
            let mut p = ParameterSet::new(seed);
            let att = AdditiveAttention::new(&mut p, "att", qd, kd, a).unwrap();
            let q = p
                .add_value("q", random_matrix(&mut rng, 1, qd), false)
                .unwrap();
            let k = p
                .add_value("k", random_matrix(&mut rng, n, kd), false)
                .unwrap();
            let wc = Array1::from_shape_fn(kd, |_| rng.random_range(-1.0..1.0));
            let ww = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
            let rep = grad_check(&mut p, EPS, None, |p, g| {
                let keys = p.get(k).view();
                let proj = att.project_keys(p, keys);
                let (ctx, cache) = att.attend(p, p.get(q).row(0), keys, proj.view()).unwrap();
                let loss = if direct {
                    cache.weights.dot(&ww)
                } else {
                    ctx.dot(&wc)
                };
                if let Some(g) = g {
                    let zero = Array1::zeros(kd);
                    let (dc, dw) = if direct {
                        (zero.view(), Some(ww.view()))
                    } else {
                        (wc.view(), None)
                    };
                    let (dq, mut dk, dp) = att.attend_backward(p, g, keys, &cache, dc, dw);
                    dk += &att.project_keys_backward(p, g, keys, dp.view());
                    g[q].row_mut(0).scaled_add(1.0, &dq);
                    g[k] += &dk;
                }
                loss
            });
            tally.record(
                if direct {
                    "attention (weights)"
                } else {
                    "attention (context)"
                },
                rep.max_rel_error,
            );
        }

        // Decoder cell unrolled over a sequence with explicit state threading.
        let (d, h, n) = (dim(&mut rng), dim(&mut rng), len(&mut rng));
        let mut p = ParameterSet::new(seed);
        let cell = LstmCell::new(&mut p, "cell", d, h).unwrap();
        let xs = p
            .add_value("xs", random_matrix(&mut rng, n, d), false)
            .unwrap();
        let h0 = p
            .add_value("h0", random_matrix(&mut rng, 1, h), false)
            .unwrap();
        let c0 = p
            .add_value("c0", random_matrix(&mut rng, 1, h), false)
            .unwrap();
        let wh = random_matrix(&mut rng, n, h);
        let rep = grad_check(&mut p, EPS, None, |p, g| {
            let mut caches = Vec::new();
            let (mut hs, mut cs) = (p.get(h0).row(0).to_owned(), p.get(c0).row(0).to_owned());
            let mut loss = 0.0;
            for t in 0..n {
                let c = cell.step(p, p.get(xs).row(t), hs.view(), cs.view());
                loss += c.h.dot(&wh.row(t)) + c.c.sum();
                hs = c.h.clone();
                cs = c.c.clone();
                caches.push(c);
            }
            if let Some(g) = g {
                let (mut dh, mut dc) = (Array1::zeros(h), Array1::zeros(h));
                for t in (0..n).rev() {
                    let dh_t = &dh + &wh.row(t);
                    let dc_t = &dc + &Array1::<Real>::ones(h);
                    let (dx, dhp, dcp) =
                        cell.step_backward(p, g, &caches[t], dh_t.view(), dc_t.view());
                    g[xs].row_mut(t).scaled_add(1.0, &dx);
                    dh = dhp;
                    dc = dcp;
                }
                g[h0].row_mut(0).scaled_add(1.0, &dh);
                g[c0].row_mut(0).scaled_add(1.0, &dc);
            }
            loss
        });
        tally.record("decoder cell", rep.max_rel_error);

        // Full translator: both attentions, init-state projection, decoder, output.
        let h = dim(&mut rng);
        let cfg = TranslatorConfig {
            frame_dim: dim(&mut rng),
            hidden: h,
            decoder_hidden: dim(&mut rng),
            attn_dim: dim(&mut rng),
            target_embed_dim: dim(&mut rng),
            max_decode_len: 4,
        };
        let (fd, wd, vocab) = (dim(&mut rng), dim(&mut rng), 4 + dim(&mut rng));
        let mut p = ParameterSet::new(seed);
        let emb = Embedding::new(&mut p, "words", 9, wd).unwrap();
        let tr = Translator::new(&mut p, "translator", emb, fd, vocab, &cfg).unwrap();
        let clip_len = len(&mut rng);
        let clip = random_matrix(&mut rng, clip_len, fd);
        let query: Vec<usize> = (0..len(&mut rng)).map(|_| rng.random_range(4..9)).collect();
        let target: Vec<usize> = (0..rng.random_range(1..=3))
            .map(|_| rng.random_range(4..vocab))
            .collect();
        let rep = grad_check(&mut p, EPS, Some(24), |p, g| {
            let (loss, cache) = tr
                .forward_teacher_forced(p, clip.view(), &query, &target)
                .unwrap();
            if let Some(g) = g {
                tr.backward(p, g, &cache, 1.0);
            }
            loss
        });
        tally.record(
            &format!("translator ({})", rep.worst_param),
            rep.max_rel_error,
        );

        // Full reference grounder, including the regression head.
        let cfg = ReferenceGrounderConfig {
            embed_dim: dim(&mut rng),
            hidden: dim(&mut rng),
            attn_dim: dim(&mut rng),
            head_hidden: dim(&mut rng),
            loss: Default::default(),
        };
        let (fd, wd, frames) = (dim(&mut rng), dim(&mut rng), len(&mut rng) + 1);
        let mut p = ParameterSet::new(seed);
        let emb = Embedding::new(&mut p, "words", 9, wd).unwrap();
        let gr = ReferenceGrounder::new(&mut p, "grounder", emb, fd, &cfg).unwrap();
        let video = random_matrix(&mut rng, frames, fd);
        let query: Vec<usize> = (0..len(&mut rng)).map(|_| rng.random_range(4..9)).collect();
        let duration = frames as f64;
        let s = rng.random_range(0.0..duration * 0.6);
        let gold = Interval::new(s, s + duration * 0.3);
        let rep = grad_check(&mut p, EPS, Some(24), |p, g| {
            let (out, cache) = gr.forward(p, video.view(), &query, duration).unwrap();
            match g {
                Some(g) => gr
                    .backward(p, g, &cache, &out, gold, duration, 1.0)
                    .unwrap() as Real,
                None => gr.loss(&out, gold, duration).unwrap() as Real,
            }
        });
        tally.record(
            &format!("grounder ({})", rep.worst_param),
            rep.max_rel_error,
        );
    }
    // Init-state projection in isolation: tanh(W [v; t] + b).
    let mut p = ParameterSet::new(3);
    let lin = groundloop::neural::Linear::new(&mut p, "init", 8, 5).unwrap();
    let v = p.add("v", 1, 4, Init::Uniform(1.0)).unwrap();
    let t = p.add("t", 1, 4, Init::Uniform(1.0)).unwrap();
    let r = Array1::from_shape_fn(5, |i| (i as Real * 0.7).sin());
    let rep = grad_check(&mut p, EPS, None, |p, g| {
        let x = concat(&[p.get(v).row(0), p.get(t).row(0)]);
        let y = lin.forward_vec(p, x.view()).mapv(Real::tanh);
        if let Some(g) = g {
            let dpre = &r * &y.mapv(|a| 1.0 - a * a);
            let dx = lin.backward_vec(p, g, x.view(), dpre.view());
            g[v].row_mut(0).scaled_add(1.0, &dx.slice(ndarray::s![..4]));
            g[t].row_mut(0).scaled_add(1.0, &dx.slice(ndarray::s![4..]));
        }
        y.dot(&r)
    });
    tally.record("init-state projection", rep.max_rel_error);

    ensure(
        tally.worst < 1e-4,
        format!(
            "max relative error {:.2e} in {}",
            tally.worst, tally.worst_block
        ),
    )?;
    Ok(format!(
        "{} block checks, max relative error {:.2e} ({})",
        tally.checks, tally.worst, tally.worst_block
    ))
}

// ---------------------------------------------------------------- 3

fn criterion_resampler() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for len in 1..=5000usize {
        let start = rng.random_range(0..1000usize);
        let idx = resample_indices(start, start + len, 32);
        ensure(idx.len() == 32, format!("L={len}: {} indices", idx.len()))?;
        ensure(idx[0] == start, format!("L={len}: first index {}", idx[0]))?;
        ensure(
            idx.windows(2).all(|w| w[0] <= w[1]),
            format!("L={len}: decreasing"),
        )?;
        ensure(
            idx.iter().all(|&i| i >= start && i < start + len),
            format!("L={len}: out of bounds"),
        )?;
    }
    let frames = Array2::from_shape_fn((200, 2), |(i, j)| (i * 2 + j) as f32);
    let video = VideoFeatures::new("v", frames, 24.0).unwrap();
    let offsets = |s: usize, e: usize| -> Vec<usize> {
        resample32(&video, s, e)
            .unwrap()
            .source_indices
            .iter()
            .map(|i| i - s)
            .collect()
    };
    ensure(
        offsets(7, 39) == (0..32).collect::<Vec<_>>(),
        "L=32 is not the identity",
    )?;
    ensure(
        offsets(7, 71) == (0..32).map(|i| 2 * i).collect::<Vec<_>>(),
        "L=64 is not stride 2",
    )?;
    ensure(
        offsets(7, 23) == (0..32).map(|i| i / 2).collect::<Vec<_>>(),
        "L=16 is not pairwise duplication",
    )?;
    let (s, _) = interval_to_frames(Interval::new(5.97, 7.0), 24.0, 500).unwrap();
    ensure(s == 143, format!("5.97 s at 24 fps gave frame {s}"))?;
    Ok("L in 1..=5000 valid; identity/stride/duplication exact; 5.97 s -> frame 143".into())
}

// ---------------------------------------------------------------- 4

fn synthetic_dataset() -> Dataset {
    let ds = generate_synthetic(&SyntheticConfig::default(), 7).unwrap();
    Dataset::from_synthetic(&ds).unwrap()
}

fn criterion_overfit() -> Check {
    let config = TrainConfig::preset("toy-overfit").map_err(|e| e.to_string())?;
    ensure(
        config.lambda_nll == 1.0 && config.total_epochs <= 300,
        "preset is not lambda=1 within 300 epochs",
    )?;
    ensure(config.model.translator.max_decode_len >= 1, "bad preset")?;
    let started = Instant::now();
    let outcome =
        run_experiment(&config, &synthetic_dataset(), None, None).map_err(|e| e.to_string())?;
    let train =
        evaluate(&outcome.trainer.model, &outcome.train, &config).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let r = &train.report;
    let bleu1 = r.bleu1.unwrap_or(0.0);
    let summary = format!(
        "train R@0.7 {} BLEU-1 {} after {} epochs in {:.1?}",
        format_pct(r.r_at_07),
        format_pct(bleu1),
        config.total_epochs,
        elapsed
    );
    ensure(r.r_at_07 >= 90.0 && bleu1 >= 90.0, summary.clone())?;
    within(elapsed, Duration::from_secs(300))?;
    Ok(summary)
}

// ---------------------------------------------------------------- 5

fn small_config() -> TrainConfig {
    let mut c = TrainConfig::preset("toy-overfit").unwrap();
    c.total_epochs = 6;
    c
}

fn criterion_loss_identity() -> Check {
    let data = synthetic_dataset();
    let config = small_config();
    let run = run_experiment(&config, &data, None, None).map_err(|e| e.to_string())?;
    for r in &run.trainer.log {
        let diff = (r.joint_loss - (r.grounding_loss + config.lambda_nll * r.nll_loss)).abs();
        ensure(
            diff <= 1e-9,
            format!("epoch {}: identity off by {diff:e}", r.epoch),
        )?;
    }

    // Grounder trajectory: lambda=0 closed loop against grounding-only.
    let mut base = config.clone();
    base.total_epochs = 0;
    let init = run_experiment(&base, &data, None, None).map_err(|e| e.to_string())?;
    let mut closed = init.trainer.clone();
    closed.config.lambda_nll = 0.0;
    let mut alone = init.trainer.clone();
    alone.config.mode = Mode::GroundingOnly;
    let ids = closed.model.grounder_ids();
    for epoch in 0..config.total_epochs {
        closed.train_epoch(&init.train).map_err(|e| e.to_string())?;
        alone.train_epoch(&init.train).map_err(|e| e.to_string())?;
        for &id in &ids {
            let (a, b) = (closed.model.params.get(id), alone.model.params.get(id));
            let same = a
                .iter()
                .zip(b.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits());
            ensure(
                same,
                format!("epoch {epoch}: {} diverged", closed.model.params.name(id)),
            )?;
        }
    }

    // Feedback path: the shared table's gradient changes with lambda.
    let mut trainer = init.trainer.clone();
    let table = trainer.model.word_embedding.table;
    let mut zero_cfg = trainer.config.clone();
    zero_cfg.lambda_nll = 0.0;
    let mut differing = 0;
    let batches: Vec<Vec<usize>> = trainer
        .epoch_order(0, init.train.len())
        .chunks(trainer.config.batch_size)
        .map(<[usize]>::to_vec)
        .collect();
    for batch in &batches {
        let mut g1 = trainer.model.params.zero_grads();
        let mut g0 = trainer.model.params.zero_grads();
        accumulate_batch(&trainer.model, &init.train, batch, &trainer.config, &mut g1)
            .map_err(|e| e.to_string())?;
        accumulate_batch(&trainer.model, &init.train, batch, &zero_cfg, &mut g0)
            .map_err(|e| e.to_string())?;
        if g1[table] != g0[table] {
            differing += 1;
        }
        let ids = trainer.model.parameter_ids();
        trainer.optimizer.step(
            &mut trainer.model.params,
            &g1,
            &ids,
            trainer.config.learning_rate,
        );
    }
    ensure(differing > 0, "embedding gradient never depends on lambda")?;
    Ok(format!(
        "identity holds over {} epochs; lambda=0 grounder bitwise equal over {} epochs; embedding gradient differs on {differing}/{} steps",
        run.trainer.log.len(),
        config.total_epochs,
        batches.len()
    ))
}

// ---------------------------------------------------------------- 6

fn brute_bucket(ours: f64, base: f64) -> Bucket {
    let level = |t: f64| -> i32 {
        if t >= 0.7 {
            3
        } else if t >= 0.5 {
            2
        } else if t >= 0.3 {
            1
        } else {
            0
        }
    };
    let (a, b) = (level(ours), level(base));
    if a == 0 && b == 0 {
        Bucket::BothBelow
    } else if a > b {
        Bucket::Up
    } else if a < b {
        Bucket::Down
    } else {
        Bucket::Same
    }
}

fn criterion_buckets() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let edges = [0.0, 0.3, 0.5, 0.7, 1.0];
    let mut counts = BucketCounts::default();
    for i in 0..500 {
        let pick = |rng: &mut ChaCha8Rng| {
            if i % 5 == 0 {
                edges[rng.random_range(0..edges.len())]
            } else {
                rng.random_range(0.0..=1.0)
            }
        };
        let (a, b) = (pick(&mut rng), pick(&mut rng));
        ensure(
            bucket(a, b) == brute_bucket(a, b),
            format!("bucket({a}, {b}) disagrees"),
        )?;
        counts.push(a, b);
    }
    ensure(
        counts.total() == 500,
        format!("counts sum to {}", counts.total()),
    )?;
    let char_row = BucketCounts {
        up: 441,
        down: 362,
        same: 1347,
        both_below: 777,
        ..Default::default()
    };
    let anet_row = BucketCounts {
        up: 4268,
        down: 3124,
        same: 8074,
        both_below: 10538,
        ..Default::default()
    };
    ensure(
        char_row.total() == 2927 && anet_row.total() == 26004,
        "fixture totals",
    )?;
    let csv = metrics::buckets_csv(&[char_row, anet_row]);
    ensure(
        csv == "up,down,same,both_below\n441,362,1347,777\n4268,3124,8074,10538\n",
        format!("table layout: {csv:?}"),
    )?;
    Ok(format!(
        "500 pairs agree; counts up {} down {} same {} both_below {}",
        counts.up, counts.down, counts.same, counts.both_below
    ))
}

// ---------------------------------------------------------------- 7

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn criterion_simplify() -> Check {
    let lex = PosLexicon::bundled();
    let samples = load_annotations(manifest_dir().join("data/mini_corpus.jsonl"))
        .map_err(|e| e.to_string())?;
    ensure(samples.len() == 100, format!("{} queries", samples.len()))?;
    let golden =
        std::fs::read_to_string(manifest_dir().join("tests/fixtures/mini_corpus_golden.tsv"))
            .unwrap();
    for (s, line) in samples.iter().zip(golden.lines()) {
        let (query, expected) = line.split_once('\t').ok_or("bad golden line")?;
        ensure(
            query == s.query,
            format!("golden out of order at {query:?}"),
        )?;
        let a = simplify_query(&tokenize(&s.query), &lex);
        let b = simplify_query(&tokenize(&s.query), &lex);
        ensure(a == b, format!("non-deterministic on {query:?}"))?;
        ensure(
            simplify_query(&a.tokens, &lex) == a,
            format!("not idempotent on {query:?}"),
        )?;
        ensure(
            a.to_string() == expected,
            format!("{query:?}: got {a}, golden {expected}"),
        )?;
    }
    let stats = corpus_stats(&samples, &lex).map_err(|e| e.to_string())?;
    let text =
        std::fs::read_to_string(manifest_dir().join("tests/fixtures/mini_corpus_stats.json"))
            .unwrap();
    let golden_stats: StatsRecord = serde_json::from_str(&text).unwrap();
    ensure(
        stats == golden_stats,
        format!("stats {stats:?} != golden {golden_stats:?}"),
    )?;
    ensure(
        stats.simplified_vocab_size <= stats.input_vocab_size,
        "simplified vocab larger than input",
    )?;
    let lemmas: BTreeSet<String> = golden
        .lines()
        .flat_map(|l| {
            l.split('\t')
                .nth(1)
                .unwrap_or("")
                .split_whitespace()
                .map(str::to_string)
                .collect::<Vec<_>>()
        })
        .collect();
    ensure(
        lemmas.len() == stats.simplified_vocab_size,
        "golden vocabulary size mismatch",
    )?;
    Ok(format!(
        "100 queries match golden; |V_in| {} |V_simpl| {} mean {:.2}",
        stats.input_vocab_size, stats.simplified_vocab_size, stats.mean_simplified_tokens
    ))
}

// ---------------------------------------------------------------- 8

fn cli_ok(args: &[&str]) -> Result<(), String> {
    let argv = std::iter::once("groundloop").chain(args.iter().copied());
    let code = cli::run(argv);
    ensure(code == 0, format!("`{}` exited {code}", args.join(" ")))
}

fn hash(dir: &Path) -> Result<String, String> {
    dir_hash(dir).map_err(|e| e.to_string())
}

fn criterion_reproducibility() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| tmp.path().join(name);
    let s = |path: PathBuf| path.display().to_string();

    cli_ok(&["gen-data", "--seed", "7", "--out", &s(p("d1"))])?;
    cli_ok(&["gen-data", "--seed", "7", "--out", &s(p("d2"))])?;
    ensure(
        hash(&p("d1"))? == hash(&p("d2"))?,
        "gen-data outputs differ",
    )?;

    let train = |out: &str| {
        cli_ok(&[
            "train",
            "--preset",
            "toy-overfit",
            "--epochs",
            "20",
            "--data",
            &s(p("d1")),
            "--out",
            &s(p(out)),
        ])
    };
    train("t1")?;
    train("t2")?;
    ensure(
        hash(&p("t1"))? == hash(&p("t2"))?,
        "train outputs differ between runs",
    )?;
    let code =
        cli::rerun(&p("t1").join("manifest.json"), Some(&p("t3"))).map_err(|e| e.to_string())?;
    ensure(
        code == 0 && hash(&p("t1"))? == hash(&p("t3"))?,
        "train rerun from manifest differs",
    )?;

    let eval = |out: &str| {
        cli_ok(&[
            "eval",
            "--pred",
            &s(p("t1").join("predictions.jsonl")),
            "--trans",
            &s(p("t1").join("translations.jsonl")),
            "--out",
            &s(p(out)),
        ])
    };
    eval("e1")?;
    let code =
        cli::rerun(&p("e1").join("manifest.json"), Some(&p("e2"))).map_err(|e| e.to_string())?;
    ensure(
        code == 0 && hash(&p("e1"))? == hash(&p("e2"))?,
        "eval rerun from manifest differs",
    )?;

    // Resume from the epoch-10 checkpoint of a 20-epoch run.
    let mut config = TrainConfig::preset("toy-overfit").unwrap();
    config.total_epochs = 20;
    config.checkpoint_every = 10;
    let data = Dataset::load(p("d1")).map_err(|e| e.to_string())?;
    let full = run_experiment(&config, &data, Some(&p("full")), None).map_err(|e| e.to_string())?;
    let ckpt = load_checkpoint(p("full").join("epoch-0010.ckpt")).map_err(|e| e.to_string())?;
    ensure(ckpt.header.epoch == 10, "checkpoint epoch")?;
    let resumed = run_experiment(&config, &data, None, Some(&ckpt)).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (a, b) in full
        .trainer
        .model
        .params
        .tensors()
        .iter()
        .zip(resumed.trainer.model.params.tensors())
    {
        for (x, y) in a.value.iter().zip(b.value.iter()) {
            worst = worst.max((*x as f64 - *y as f64).abs());
        }
    }
    ensure(
        worst <= 1e-12,
        format!("resumed parameters differ by {worst:e}"),
    )?;
    ensure(
        full.trainer.log == resumed.trainer.log,
        format!(
            "resumed log differs: {:?} vs {:?}",
            full.trainer.log.last(),
            resumed.trainer.log.last()
        ),
    )?;
    Ok(format!(
        "gen-data/train/eval byte-identical on rerun; resume max deviation {worst:.1e}"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check, Duration); 8] = [
        (
            "1 metric oracle suite",
            criterion_metrics,
            Duration::from_secs(5),
        ),
        (
            "2 gradient verification",
            criterion_gradients,
            Duration::from_secs(60),
        ),
        (
            "3 resampler properties",
            criterion_resampler,
            Duration::from_secs(5),
        ),
        (
            "4 closed-loop overfit",
            criterion_overfit,
            Duration::from_secs(300),
        ),
        (
            "5 loss identity and ablation",
            criterion_loss_identity,
            Duration::from_secs(300),
        ),
        ("6 bucketing", criterion_buckets, Duration::from_secs(60)),
        (
            "7 simplification determinism and stats",
            criterion_simplify,
            Duration::from_secs(60),
        ),
        (
            "8 reproducibility",
            criterion_reproducibility,
            Duration::from_secs(300),
        ),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let started = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = started.elapsed();
        let result = result.and_then(|msg| within(elapsed, limit).map(|_| msg));
        match result {
            Ok(msg) => println!("PASS  {name}: {msg} [{elapsed:.2?}]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name}: {msg} [{elapsed:.2?}]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
