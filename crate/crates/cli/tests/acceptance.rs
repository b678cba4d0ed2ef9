//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p moodlyrics-cli --test acceptance -- --nocapture`
//! to see the lines.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use moodlyrics::baseline::{nb_predict, nb_train};
use moodlyrics::corpus::{mood_distribution, parse_corpus, synthesize_corpus, SongRecord};
use moodlyrics::evaluation::{f1_score, report, ConfusionMatrix};
use moodlyrics::model::gradcheck::check_gradients;
use moodlyrics::model::{forward, init_model, Checkpoint, CheckpointMeta, Mode, ModelConfig, Parameters};
use moodlyrics::tokenizer::{encode, encode_corpus, train_wordpiece, EncodedExample, TokenizerConfig, CLS_ID, PAD_ID, SEP_ID};
use moodlyrics::trainer::{
    adamw_step, clip_grad_norm, evaluate_split, linear_schedule, train, train_with_validator, AdamState, CheckpointSink,
    SplitMetrics, TrainConfig, Validator,
};
use moodlyrics::{Corpus, MoodLabel};
use moodlyrics_cli::{cmd_ingest, cmd_train, files, Global, IngestArgs, ModelKind, TrainArgs};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn padded(body: &[u32], len: usize) -> EncodedExample {
    let mut ids = vec![CLS_ID];
    ids.extend_from_slice(body);
    ids.push(SEP_ID);
    let active = ids.len();
    ids.resize(len, PAD_ID);
    EncodedExample {
        mask: (0..len).map(|i| u8::from(i < active)).collect(),
        ids,
        label: None,
    }
}

fn gradient_correctness() -> Outcome {
    let cfg = ModelConfig::desk(24, 12);
    let mut params = init_model(&cfg).map_err(|e| e.to_string())?;
    for t in params.arrays_mut() {
        t.data.iter_mut().for_each(|x| *x *= 10.0);
    }
    let batch = [padded(&[4, 9, 17, 5], 12), padded(&[20, 21, 4], 12), padded(&[6], 12)];
    let labels = [MoodLabel::Happy, MoodLabel::Relaxed, MoodLabel::Sad];
    let start = Instant::now();
    let checks = check_gradients(&params, &batch, &labels, Mode::Train { dropout_seed: 7 }, 1e-4, 128, 1)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let worst = checks
        .iter()
        .max_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error))
        .ok_or("no arrays checked")?;
    ensure(worst.max_relative_error <= 1e-3, || {
        format!("{} relative error {:.3e} > 1e-3", worst.name, worst.max_relative_error)
    })?;
    ensure(elapsed <= Duration::from_secs(60), || format!("took {elapsed:?} > 60 s"))?;
    Ok(format!(
        "{} arrays, worst {} at {:.2e}, {:.1} s",
        checks.len(),
        worst.name,
        worst.max_relative_error,
        elapsed.as_secs_f64()
    ))
}

fn overfit() -> Outcome {
    let corpus = synthesize_corpus(1, 8, &[]).map_err(|e| e.to_string())?;
    ensure(corpus.len() == 32, || format!("synthetic corpus has {} songs", corpus.len()))?;
    let tok = TokenizerConfig::default();
    let vocab = train_wordpiece(&corpus, &tok).map_err(|e| e.to_string())?;
    let data = encode_corpus(&corpus, &vocab, &tok);
    let params = init_model(&ModelConfig::desk(vocab.len(), tok.max_sequence_length)).map_err(|e| e.to_string())?;
    let cfg = TrainConfig::default();
    ensure(cfg.batch_size == 8 && cfg.epochs == 100, || "default config is not batch 8 / 100 epochs".into())?;
    let start = Instant::now();
    let out = train(params, &data, &data, &cfg, None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let first = out.history.train_accuracies().iter().position(|&a| a == 1.0);
    let epoch = first.ok_or("never reached 100% training accuracy")? + 1;
    ensure(elapsed <= Duration::from_secs(300), || format!("took {elapsed:?} > 5 min"))?;
    Ok(format!("100% training accuracy at epoch {epoch}, {:.1} s", elapsed.as_secs_f64()))
}

const WORDS: [&str; 10] = ["amar", "tumi", "gaan", "mon", "prem", "dukkho", "hashi", "shanti", "raat", "din"];

/// Posterior by direct products of counts, no logs.
fn brute_force_posterior(docs: &[(Vec<&str>, MoodLabel)], alpha: f64, test: &[&str]) -> Vec<f64> {
    let vocab: std::collections::BTreeSet<&str> = docs.iter().flat_map(|(d, _)| d.iter().copied()).collect();
    let v = vocab.len() as f64;
    let mut joint = Vec::new();
    for class in MoodLabel::ALL {
        let class_docs: Vec<&Vec<&str>> = docs.iter().filter(|(_, m)| *m == class).map(|(d, _)| d).collect();
        let prior = class_docs.len() as f64 / docs.len() as f64;
        let total: usize = class_docs.iter().map(|d| d.len()).sum();
        let mut p = prior;
        for w in test.iter().filter(|w| vocab.contains(*w)) {
            let count = class_docs.iter().map(|d| d.iter().filter(|x| *x == w).count()).sum::<usize>();
            p *= (count as f64 + alpha) / (total as f64 + alpha * v);
        }
        joint.push(p);
    }
    let z: f64 = joint.iter().sum();
    joint.into_iter().map(|p| p / z).collect()
}

fn naive_bayes_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let trials = 200;
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let v = rng.random_range(2..=WORDS.len());
        let pool = &WORDS[..v];
        let n_docs = rng.random_range(4..=20);
        let docs: Vec<(Vec<&str>, MoodLabel)> = (0..n_docs)
            .map(|i| {
                let mood = if i < 4 { MoodLabel::ALL[i] } else { *MoodLabel::ALL.choose(&mut rng).unwrap() };
                let len = rng.random_range(1..=6);
                ((0..len).map(|_| *pool.choose(&mut rng).unwrap()).collect(), mood)
            })
            .collect();
        let alpha = rng.random_range(0.05..2.0);
        let corpus = Corpus::new(
            docs.iter()
                .enumerate()
                .map(|(i, (d, m))| SongRecord {
                    title: format!("t{i}"),
                    category: "c".into(),
                    lyrics: d.join(" "),
                    mood: *m,
                })
                .collect(),
            "random",
        );
        let model = nb_train(&corpus, alpha).map_err(|e| e.to_string())?;
        for _ in 0..3 {
            let len = rng.random_range(0..=8);
            let mut test: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
            test.push("ajana");
            let expected = brute_force_posterior(&docs, alpha, &test);
            let (_, got) = nb_predict(&model, &test.join(" "));
            for (g, e) in got.iter().zip(&expected) {
                worst = worst.max((g - e).abs());
            }
            ensure(worst <= 1e-9, || format!("trial {trial}: posterior {got:?} vs oracle {expected:?}"))?;
        }
    }
    Ok(format!("{trials} corpora, max |Δposterior| = {worst:.2e}"))
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const PIECES: &[&str] = &[
        "আমি", "তোমার", "ভালোবাসা", "গান", "মন", "কেন", "।", ",", "!", "?", "Love", "NIGHT", "song", "123", "😀", "-", "\n",
        "  ", "ক্ষ", "\u{200c}", "«", "»", "'", "é", "straße",
    ];
    let n = rng.random_range(0..60);
    let mut s = String::new();
    for _ in 0..n {
        s.push_str(PIECES.choose(rng).unwrap());
        if rng.random_bool(0.6) {
            s.push(' ');
        }
    }
    s
}

fn tokenizer_contract() -> Outcome {
    let corpus = synthesize_corpus(3, 8, &[]).map_err(|e| e.to_string())?;
    let small = TokenizerConfig {
        max_sequence_length: 32,
        ..TokenizerConfig::default()
    };
    let vocab = train_wordpiece(&corpus, &small).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..1000 {
        let text = random_text(&mut rng);
        let ex = encode(&text, &vocab, &small);
        ex.check_invariants(small.max_sequence_length)
            .map_err(|e| format!("text #{i} {text:?}: {e}"))?;
    }
    let full = TokenizerConfig::default();
    ensure(full.max_sequence_length == 512, || "default max length is not 512".into())?;
    let long: String = corpus.iter().map(|r| r.lyrics.as_str()).collect::<Vec<_>>().join(" ").repeat(4);
    let ex = encode(&long, &vocab, &full);
    ex.check_invariants(512)?;
    ensure(ex.active_len() == 512 && ex.ids[511] == SEP_ID, || {
        format!("long input has {} active positions, last id {}", ex.active_len(), ex.ids[511])
    })?;
    Ok("1000 random texts satisfy every invariant; long input truncates to 512 ending in SEP".into())
}

fn masking() -> Outcome {
    let cfg = ModelConfig::desk(40, 24);
    let params = init_model(&cfg).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..1000 {
        let len = rng.random_range(0..=20);
        let body: Vec<u32> = (0..len).map(|_| rng.random_range(4..40)).collect();
        let ex = padded(&body, 24);
        let mut mutated = ex.clone();
        for (id, &m) in mutated.ids.iter_mut().zip(&ex.mask) {
            if m == 0 {
                *id = rng.random_range(0..40);
            }
        }
        let a = forward(&params, &[ex], Mode::Eval).map_err(|e| e.to_string())?;
        let b = forward(&params, &[mutated], Mode::Eval).map_err(|e| e.to_string())?;
        ensure(a.logits.data == b.logits.data, || format!("trial {trial}: logits changed"))?;
    }
    Ok("1000 trials, eval logits bit-identical".into())
}

fn optimizer() -> Outcome {
    let (base, total) = (8e-5, 1200);
    let first = linear_schedule(0, total, base).map_err(|e| e.to_string())?;
    let last = linear_schedule(total, total, base).map_err(|e| e.to_string())?;
    ensure(first == base && last == 0.0, || format!("schedule endpoints {first} and {last}"))?;

    let cfg = ModelConfig {
        num_layers: 1,
        hidden_size: 4,
        num_heads: 2,
        ffn_size: 8,
        ..ModelConfig::desk(6, 4)
    };
    let mut params = Parameters::zeros(&cfg);
    let mut grads = Parameters::zeros(&cfg);
    for t in grads.arrays_mut() {
        t.data.iter_mut().for_each(|g| *g = 1.0);
    }
    let mut state = AdamState::new(&params);
    adamw_step(&mut params, &grads, &mut state, 0.1, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let worst = params
        .arrays_mut()
        .into_iter()
        .flat_map(|t| t.data.clone())
        .map(|x| (x + 0.1).abs())
        .fold(0.0f64, f64::max);
    ensure(worst <= 1e-6, || format!("adamw step off by {worst:.3e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut clip_err = 0.0f64;
    for _ in 0..200 {
        let scale = rng.random_range(0.01..10.0);
        for t in grads.arrays_mut() {
            t.data.iter_mut().for_each(|g| *g = rng.random_range(-1.0..1.0) * scale);
        }
        let max_norm = rng.random_range(0.1..5.0);
        let before = clip_grad_norm(&mut grads, max_norm);
        clip_err = clip_err.max((grads.global_norm() - before.min(max_norm)).abs());
    }
    ensure(clip_err <= 1e-9, || format!("post-clip norm off by {clip_err:.3e}"))?;
    Ok(format!("schedule endpoints exact, adamw |θ+0.1| ≤ {worst:.1e}, clip error {clip_err:.1e}"))
}

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mut cells = [[0u64; 4]; 4];
        for row in cells.iter_mut() {
            for c in row.iter_mut() {
                *c = rng.random_range(0..50);
            }
        }
        cells[0][0] += 1;
        let r = report(&ConfusionMatrix::new(cells)).map_err(|e| e.to_string())?;
        worst = worst.max((r.weighted_avg.recall - r.accuracy).abs());
        ensure(worst <= 1e-12, || format!("weighted recall {} vs accuracy {}", r.weighted_avg.recall, r.accuracy))?;
        for c in &r.classes {
            let expected = if c.precision + c.recall == 0.0 {
                0.0
            } else {
                2.0 * c.precision * c.recall / (c.precision + c.recall)
            };
            ensure((c.f1 - expected).abs() <= 1e-12 && (f1_score(c.precision, c.recall) - expected).abs() <= 1e-12, || {
                format!("{}: f1 {} vs {expected}", c.label, c.f1)
            })?;
        }
    }

    let counts = [(MoodLabel::Sad, 1513), (MoodLabel::Romantic, 1362), (MoodLabel::Happy, 886), (MoodLabel::Relaxed, 239)];
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["title", "category", "lyrics", "mood"]).unwrap();
    let mut n = 0;
    for (mood, count) in counts {
        for _ in 0..count {
            n += 1;
            w.write_record([format!("গান {n}"), "modern".into(), format!("কথা {n} মন"), mood.as_str().into()])
                .unwrap();
        }
    }
    let (corpus, drops) = parse_corpus(&w.into_inner().unwrap(), "constructed").map_err(|e| e.to_string())?;
    let dist = mood_distribution(&corpus).map_err(|e| e.to_string())?;
    ensure(corpus.len() == 4000 && drops.count() == 0, || format!("{} records, {} dropped", corpus.len(), drops.count()))?;
    for (mood, count) in counts {
        ensure(dist.count(mood) == count, || format!("{mood}: {} != {count}", dist.count(mood)))?;
    }
    Ok(format!("weighted recall = accuracy within {worst:.1e}; f1 formula holds; distribution 1513/1362/886/239"))
}

fn train_run(input: &Path, out: &Path) -> Result<(), String> {
    let global = Global {
        seed: 42,
        out: out.to_path_buf(),
    };
    let args = TrainArgs {
        input: input.to_path_buf(),
        model: ModelKind::Bert,
        config: None,
        overrides: vec!["epochs=4".into()],
    };
    let manifest = cmd_train(&global, &args).map_err(|e| e.to_string())?;
    manifest.finish(out).map_err(|e| e.to_string())?;
    Ok(())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ingest = Global {
        seed: 42,
        out: dir.path().join("ingest"),
    };
    cmd_ingest(
        &ingest,
        &IngestArgs {
            input: None,
            synthetic: Some("seed=1,per_class=8".into()),
        },
    )
    .map_err(|e| e.to_string())?;
    let input = ingest.out.join(files::CORPUS);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train_run(&input, &a)?;
    train_run(&input, &b)?;
    let compared = [files::HISTORY, files::CHECKPOINT, files::ACCURACY, "accuracy.csv", files::VOCAB, files::TEST_REPORT];
    for name in compared {
        let x = std::fs::read(a.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = std::fs::read(b.join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure(x == y, || format!("{name} differs between runs"))?;
    }
    Ok(format!("two runs byte-identical in {}", compared.join(", ")))
}

/// Reports a scripted accuracy sequence while recording the real metrics.
struct Scripted<'a> {
    accuracies: Vec<f64>,
    data: &'a [EncodedExample],
    real: Vec<SplitMetrics>,
}

impl Validator for Scripted<'_> {
    fn validate(&mut self, epoch: usize, params: &Parameters) -> moodlyrics::trainer::Result<SplitMetrics> {
        let real = evaluate_split(params, self.data)?;
        self.real.push(real);
        Ok(SplitMetrics {
            loss: real.loss,
            accuracy: self.accuracies[epoch - 1],
        })
    }
}

fn best_checkpoint() -> Outcome {
    let corpus = synthesize_corpus(2, 4, &[]).map_err(|e| e.to_string())?;
    let tok = TokenizerConfig {
        max_sequence_length: 64,
        ..TokenizerConfig::default()
    };
    let vocab = train_wordpiece(&corpus, &tok).map_err(|e| e.to_string())?;
    let data = encode_corpus(&corpus, &vocab, &tok);
    let params = init_model(&ModelConfig::desk(vocab.len(), tok.max_sequence_length)).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("best.ckpt");
    let sink = CheckpointSink::new(
        &path,
        CheckpointMeta {
            tokenizer: tok,
            vocab_hash: vocab.hash(),
            epoch: None,
            val_accuracy: None,
        },
    );
    let mut scripted = Scripted {
        accuracies: vec![0.50, 0.63, 0.61],
        data: &data,
        real: Vec::new(),
    };
    let out = train_with_validator(params, &data, &cfg, &mut scripted, Some(&sink)).map_err(|e| e.to_string())?;
    ensure(out.best_epoch == 2 && out.history.best_epoch() == Some(2), || {
        format!("selected epoch {} instead of 2", out.best_epoch)
    })?;
    let ck = Checkpoint::load(&path).map_err(|e| e.to_string())?;
    ensure(ck.meta.epoch == Some(2) && ck.meta.val_accuracy == Some(0.63), || {
        format!("checkpoint meta epoch {:?} accuracy {:?}", ck.meta.epoch, ck.meta.val_accuracy)
    })?;
    ensure(ck.params == out.best_params, || "checkpoint weights differ from the epoch-2 weights".into())?;
    let recorded = scripted.real[1];
    let again = evaluate_split(&ck.params, &data).map_err(|e| e.to_string())?;
    ensure(again == recorded, || format!("reloaded checkpoint scores {again:?}, recorded {recorded:?}"))?;
    ensure(out.history.epochs[1].val_loss == again.loss, || "history val_loss differs from reloaded loss".into())?;
    Ok(format!(
        "epoch 2 selected; reloaded checkpoint reproduces loss {:.6} and accuracy {}",
        again.loss, again.accuracy
    ))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("1 gradient correctness", gradient_correctness),
        ("2 overfit synthetic corpus", overfit),
        ("3 naive bayes oracle", naive_bayes_oracle),
        ("4 tokenizer contract", tokenizer_contract),
        ("5 masking", masking),
        ("6 optimizer and schedule", optimizer),
        ("7 metrics identities", metrics),
        ("8 determinism", determinism),
        ("9 best checkpoint", best_checkpoint),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                println!("FAIL  {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
