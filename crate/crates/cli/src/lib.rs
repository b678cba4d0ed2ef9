//! The `moodlyrics` command-line pipeline.
//!
//! Each subcommand reads its inputs, writes artifacts into the output
//! directory and finishes by writing `manifest.json` there (except `predict`,
//! which only prints). Exit codes: 0 success, 1 internal error, 2 invalid
//! user input.

pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use moodlyrics::analytics::{
    corpus_freq, corpus_summary, density_curve, density_points, lexical_stats, PlotKind, PlotSpec, Series, Stopwords,
    DEFAULT_BIN_WIDTH,
};
use moodlyrics::baseline::{nb_predict, nb_train, NaiveBayesModel, NB_FORMAT};
use moodlyrics::corpus::{load_corpus, mood_distribution, stratified_split, synthesize_corpus, CorpusError, DropReport};
use moodlyrics::evaluation::{accuracy_curve, confusion, confusion_heatmap, report};
use moodlyrics::model::{init_model, predict, Checkpoint, CheckpointMeta, ModelConfig};
use moodlyrics::seed::{self, stream};
use moodlyrics::tokenizer::{encode, encode_corpus, normalize, train_wordpiece};
use moodlyrics::trainer::{predict_split, train, CheckpointSink, TrainError};
use moodlyrics::{Corpus, EvalReport, MoodLabel, Vocabulary};

use crate::config::RunConfig;
use crate::manifest::RunManifest;

/// Artifact file names.
pub mod files {
    pub const CORPUS: &str = "corpus.csv";
    pub const DROPS: &str = "drops.log";
    pub const DISTRIBUTION: &str = "distribution.svg";
    pub const STATS: &str = "stats.json";
    pub const FREQ: &str = "freq.csv";
    pub const LEXICAL: &str = "lexical.csv";
    pub const DENSITY: &str = "density.svg";
    pub const TRAIN_SPLIT: &str = "train.csv";
    pub const VAL_SPLIT: &str = "val.csv";
    pub const TEST_SPLIT: &str = "test.csv";
    pub const VOCAB: &str = "vocab.txt";
    pub const CHECKPOINT: &str = "model.ckpt";
    pub const NB_MODEL: &str = "nb_model.txt";
    pub const HISTORY: &str = "history.csv";
    pub const ACCURACY: &str = "accuracy.svg";
    pub const TEST_REPORT: &str = "test_report.txt";
    pub const TEST_REPORT_CSV: &str = "test_report.csv";
    pub const TEST_CONFUSION: &str = "test_confusion_matrix.csv";
    pub const REPORT: &str = "report.txt";
    pub const REPORT_CSV: &str = "report.csv";
    pub const CONFUSION_MATRIX: &str = "confusion_matrix.csv";
    pub const CONFUSION: &str = "confusion.svg";
}

#[derive(Debug)]
pub enum CliError {
    /// Bad input, flags or files supplied by the user (exit 2).
    Usage(String),
    /// Anything else (exit 1).
    Internal(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Internal(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Internal(e)
    }
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn internal(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Internal(e.into())
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "moodlyrics", version, about = "Mood classification of song lyrics")]
pub struct Cli {
    /// Master seed; split, init, shuffle and dropout seeds derive from it.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, env = "MOODLYRICS_OUT", default_value = "moodlyrics-out")]
    pub out: PathBuf,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and clean a corpus, report dropped rows, chart the mood distribution.
    Ingest(IngestArgs),
    /// Word frequencies, type-token ratios and the lexical-density curve.
    Analyze(AnalyzeArgs),
    /// Split, tokenize and train a model.
    Train(TrainArgs),
    /// Classification report and confusion matrix for a saved model.
    Eval(EvalArgs),
    /// Predict the mood of one text.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Corpus CSV with header `title,category,lyrics,mood`.
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    pub input: Option<PathBuf>,
    /// Generate a synthetic corpus instead, e.g. `seed=1,per_class=8`.
    #[arg(long)]
    pub synthetic: Option<String>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Stopword list, one word per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Unique-token bin width of the density curve.
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
    pub bin_width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    /// Transformer encoder classifier.
    Bert,
    /// Multinomial Naive Bayes baseline.
    Nb,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// Flat `key=value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config override `key=value`; repeatable, applied after `--config`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Vocabulary file; defaults to `vocab.txt` next to the checkpoint.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, required_unless_present = "file", conflicts_with = "file")]
    pub lyrics: Option<String>,
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// Vocabulary file; defaults to `vocab.txt` next to the checkpoint.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

/// Options shared by every command.
#[derive(Debug, Clone)]
pub struct Global {
    pub seed: u64,
    pub out: PathBuf,
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(CliError::Internal)
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(CliError::Internal)
}

/// Writes `name` under the output dir and records it in the manifest.
fn emit(manifest: &mut RunManifest, dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let path = dir.join(name);
    write_file(&path, bytes)?;
    manifest.output(&path);
    Ok(path)
}

fn emit_chart(manifest: &mut RunManifest, dir: &Path, name: &str, spec: &PlotSpec) -> Result<()> {
    let files = moodlyrics::analytics::emit_plot(spec, &dir.join(name)).map_err(internal)?;
    manifest.output(files.svg);
    manifest.output(files.csv);
    Ok(())
}

fn load_input(path: &Path, manifest: &mut RunManifest) -> Result<(Corpus, DropReport)> {
    let loaded = load_corpus(path).map_err(usage)?;
    manifest.input(path)?;
    if loaded.1.count() > 0 {
        log::warn!("{}: dropped {} rows", path.display(), loaded.1.count());
    }
    Ok(loaded)
}

fn corpus_csv(corpus: &Corpus) -> Result<Vec<u8>> {
    corpus.to_csv_bytes().map_err(internal)
}

/// `seed=S,per_class=N`; both keys optional.
pub fn parse_synthetic(spec: &str, master_seed: u64) -> Result<(u64, usize)> {
    let mut seed_value = seed::derive(master_seed, stream::SYNTHETIC);
    let mut per_class = 8;
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| usage(format!("--synthetic expects key=value pairs, got `{part}`")))?;
        let bad = || usage(format!("--synthetic: invalid value for `{}`: `{v}`", k.trim()));
        match k.trim() {
            "seed" => seed_value = v.trim().parse().map_err(|_| bad())?,
            "per_class" => per_class = v.trim().parse().map_err(|_| bad())?,
            other => return Err(usage(format!("--synthetic: unknown key `{other}` (expected seed, per_class)"))),
        }
    }
    Ok((seed_value, per_class))
}

pub fn cmd_ingest(global: &Global, args: &IngestArgs) -> Result<RunManifest> {
    let mut manifest = RunManifest::start("ingest");
    let (corpus, drops) = match (&args.input, &args.synthetic) {
        (Some(path), _) => load_input(path, &mut manifest)?,
        (None, Some(spec)) => {
            let (s, per_class) = parse_synthetic(spec, global.seed)?;
            manifest.seeds.insert("synthetic".into(), s);
            manifest.config = json!({ "synthetic": { "seed": s, "per_class": per_class } });
            (synthesize_corpus(s, per_class, &[]).map_err(usage)?, DropReport::default())
        }
        (None, None) => return Err(usage("ingest needs --input or --synthetic")),
    };
    let dist = mood_distribution(&corpus).map_err(usage)?;
    let out = &global.out;
    prepare_out(out)?;
    emit(&mut manifest, out, files::CORPUS, &corpus_csv(&corpus)?)?;
    emit(&mut manifest, out, files::DROPS, drops.to_log().as_bytes())?;
    let bars = MoodLabel::ALL.iter().map(|m| (m.index() as f64, dist.count(*m) as f64)).collect();
    let spec = PlotSpec::new(PlotKind::Bar, "Mood categories", vec![Series::new("songs", bars)])
        .labels("mood", "songs")
        .ticks(MoodLabel::ALL.iter().map(|m| m.as_str().to_string()).collect());
    emit_chart(&mut manifest, out, files::DISTRIBUTION, &spec)?;
    let summary = corpus_summary(&corpus, &corpus_freq(&corpus));
    let moods: serde_json::Map<String, serde_json::Value> = MoodLabel::ALL
        .iter()
        .map(|m| (m.as_str().to_string(), json!({ "count": dist.count(*m), "fraction": dist.fraction(*m) })))
        .collect();
    let stats = json!({
        "provenance": corpus.provenance(),
        "records": corpus.len(),
        "dropped": drops.count(),
        "moods": moods,
        "summary": summary,
    });
    emit(&mut manifest, out, files::STATS, pretty(&stats).as_bytes())?;
    manifest.metric("records", corpus.len());
    manifest.metric("dropped", drops.count());
    Ok(manifest)
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

pub fn cmd_analyze(global: &Global, args: &AnalyzeArgs) -> Result<RunManifest> {
    let mut manifest = RunManifest::start("analyze");
    let (corpus, _) = load_input(&args.input, &mut manifest)?;
    let stopwords = match &args.stopwords {
        Some(p) => {
            manifest.input(p)?;
            Stopwords::load(p).map_err(usage)?
        }
        None => Stopwords::empty(),
    };
    manifest.config = json!({ "bin_width": args.bin_width, "stopwords": stopwords.len() });
    let freq = corpus_freq(&corpus);
    let bins = density_curve(&corpus, args.bin_width, &stopwords).map_err(usage)?;
    let out = &global.out;
    prepare_out(out)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["word", "count"]).map_err(internal)?;
    for (word, count) in freq.most_common() {
        w.write_record([word, &count.to_string()]).map_err(internal)?;
    }
    emit(&mut manifest, out, files::FREQ, &w.into_inner().map_err(|e| internal(e.into_error()))?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "title", "mood", "tokens", "unique", "type_token_ratio", "lexical_density"])
        .map_err(internal)?;
    for (i, r) in corpus.iter().enumerate() {
        let s = lexical_stats(r, &stopwords).map_err(internal)?;
        w.write_record([
            i.to_string(),
            r.title.clone(),
            r.mood.as_str().to_string(),
            s.token_count.to_string(),
            s.unique_count.to_string(),
            s.type_token_ratio.to_string(),
            s.lexical_density.to_string(),
        ])
        .map_err(internal)?;
    }
    emit(&mut manifest, out, files::LEXICAL, &w.into_inner().map_err(|e| internal(e.into_error()))?)?;

    let spec = PlotSpec::new(
        PlotKind::Line,
        "Lexical density by unique token count",
        vec![Series::new("mean density", density_points(&bins))],
    )
    .labels("unique tokens (bin lower bound)", "lexical density");
    emit_chart(&mut manifest, out, files::DENSITY, &spec)?;
    let stats = json!({
        "summary": corpus_summary(&corpus, &freq),
        "density_bins": bins,
    });
    emit(&mut manifest, out, files::STATS, pretty(&stats).as_bytes())?;
    manifest.metric("songs", corpus.len());
    manifest.metric("unique_tokens", freq.unique());
    Ok(manifest)
}

fn run_config(args: &TrainArgs, manifest: &mut RunManifest) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
        manifest.input(path)?;
    }
    for o in &args.overrides {
        cfg.assign(o)?;
    }
    Ok(cfg)
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::InvalidConfig(_) | TrainError::EmptySplit(_) | TrainError::Unlabeled { .. } => usage(e),
        other => internal(other),
    }
}

fn write_report(manifest: &mut RunManifest, out: &Path, names: [&str; 3], r: &EvalReport, m: &moodlyrics::ConfusionMatrix) -> Result<()> {
    emit(manifest, out, names[0], r.to_text().as_bytes())?;
    emit(manifest, out, names[1], r.to_csv().as_bytes())?;
    emit(manifest, out, names[2], m.to_csv().as_bytes())?;
    for w in &r.warnings {
        log::warn!("{w}");
    }
    Ok(())
}

fn labels(corpus: &Corpus) -> Vec<MoodLabel> {
    corpus.iter().map(|r| r.mood).collect()
}

pub fn cmd_train(global: &Global, args: &TrainArgs) -> Result<RunManifest> {
    let mut manifest = RunManifest::start("train");
    let mut cfg = run_config(args, &mut manifest)?;
    let (corpus, _) = load_input(&args.input, &mut manifest)?;
    let split_seed = seed::derive(global.seed, stream::SPLIT);
    manifest.seeds.insert("master".into(), global.seed);
    manifest.seeds.insert("split".into(), split_seed);
    let (train_set, val_set, test_set) = stratified_split(&corpus, cfg.split, split_seed).map_err(usage)?;
    let out = &global.out;
    prepare_out(out)?;
    emit(&mut manifest, out, files::TRAIN_SPLIT, &corpus_csv(&train_set)?)?;
    emit(&mut manifest, out, files::VAL_SPLIT, &corpus_csv(&val_set)?)?;
    emit(&mut manifest, out, files::TEST_SPLIT, &corpus_csv(&test_set)?)?;
    manifest.metric("split_sizes", [train_set.len(), val_set.len(), test_set.len()]);

    match args.model {
        ModelKind::Nb => {
            manifest.config = json!({ "model": "nb", "alpha": cfg.alpha, "split": cfg.split });
            let model = nb_train(&train_set, cfg.alpha).map_err(usage)?;
            emit(&mut manifest, out, files::NB_MODEL, model.to_text().as_bytes())?;
            let predict_all = |c: &Corpus| c.iter().map(|r| nb_predict(&model, &r.lyrics).0).collect::<Vec<_>>();
            let val_report = report(&confusion(&predict_all(&val_set), &labels(&val_set)).map_err(internal)?).map_err(internal)?;
            let test_matrix = confusion(&predict_all(&test_set), &labels(&test_set)).map_err(internal)?;
            let test_report = report(&test_matrix).map_err(internal)?;
            write_report(
                &mut manifest,
                out,
                [files::TEST_REPORT, files::TEST_REPORT_CSV, files::TEST_CONFUSION],
                &test_report,
                &test_matrix,
            )?;
            manifest.metric("vocabulary_size", model.vocabulary_size());
            manifest.metric("val_accuracy", val_report.accuracy);
            manifest.metric("test_accuracy", test_report.accuracy);
            manifest.metric("test_macro_f1", test_report.macro_avg.f1);
        }
        ModelKind::Bert => {
            cfg.train.seed = global.seed;
            let init_seed = seed::derive(global.seed, stream::INIT);
            manifest.seeds.insert("init".into(), init_seed);
            manifest.seeds.insert("shuffle".into(), seed::derive(global.seed, stream::SHUFFLE));
            manifest.seeds.insert("dropout".into(), seed::derive(global.seed, stream::DROPOUT));
            manifest.config = json!({ "model": "bert", "run": cfg });
            let vocab = train_wordpiece(&train_set, &cfg.tokenizer).map_err(usage)?;
            emit(&mut manifest, out, files::VOCAB, vocab.to_file_string().as_bytes())?;
            let model_cfg = ModelConfig {
                num_layers: cfg.num_layers,
                hidden_size: cfg.hidden_size,
                num_heads: cfg.num_heads,
                ffn_size: cfg.ffn(),
                vocab_size: vocab.len(),
                max_positions: cfg.tokenizer.max_sequence_length,
                num_classes: moodlyrics::model::NUM_CLASSES,
                dropout_rate: cfg.dropout_rate,
                seed: init_seed,
            };
            let params = init_model(&model_cfg).map_err(usage)?;
            let train_data = encode_corpus(&train_set, &vocab, &cfg.tokenizer);
            let val_data = encode_corpus(&val_set, &vocab, &cfg.tokenizer);
            let test_data = encode_corpus(&test_set, &vocab, &cfg.tokenizer);
            let ckpt_path = out.join(files::CHECKPOINT);
            let sink = CheckpointSink::new(
                &ckpt_path,
                CheckpointMeta {
                    tokenizer: cfg.tokenizer,
                    vocab_hash: vocab.hash(),
                    epoch: None,
                    val_accuracy: None,
                },
            );
            let outcome = train(params, &train_data, &val_data, &cfg.train, Some(&sink)).map_err(train_error)?;
            manifest.output(&ckpt_path);
            emit(&mut manifest, out, files::HISTORY, outcome.history.to_csv().as_bytes())?;
            let plot = accuracy_curve(&outcome.history, &out.join(files::ACCURACY)).map_err(internal)?;
            manifest.output(plot.svg);
            manifest.output(plot.csv);

            let preds: Vec<MoodLabel> = predict_split(&outcome.best_params, &test_data)
                .map_err(train_error)?
                .into_iter()
                .map(|(m, _)| m)
                .collect();
            let test_matrix = confusion(&preds, &labels(&test_set)).map_err(internal)?;
            let test_report = report(&test_matrix).map_err(internal)?;
            write_report(
                &mut manifest,
                out,
                [files::TEST_REPORT, files::TEST_REPORT_CSV, files::TEST_CONFUSION],
                &test_report,
                &test_matrix,
            )?;
            let best = outcome.history.best_record().expect("history has at least one epoch");
            manifest.metric("vocabulary_size", vocab.len());
            manifest.metric("parameters", outcome.best_params.num_parameters());
            manifest.metric("best_epoch", outcome.best_epoch);
            manifest.metric("best_val_accuracy", best.val_acc);
            manifest.metric("final_train_accuracy", outcome.history.epochs.last().map(|r| r.train_acc));
            manifest.metric("test_accuracy", test_report.accuracy);
            manifest.metric("test_macro_f1", test_report.macro_avg.f1);
        }
    }
    Ok(manifest)
}

/// A model loaded from disk, ready to predict.
pub enum LoadedModel {
    Bert {
        checkpoint: Box<Checkpoint>,
        vocab: Vocabulary,
    },
    NaiveBayes(NaiveBayesModel),
}

impl LoadedModel {
    /// Loads either model kind; for the encoder, checks the vocabulary hash
    /// recorded in the checkpoint.
    pub fn load(checkpoint: &Path, vocab: Option<&Path>, manifest: &mut RunManifest) -> Result<Self> {
        let bytes = std::fs::read(checkpoint).map_err(|e| usage(format!("cannot read {}: {e}", checkpoint.display())))?;
        manifest.input(checkpoint)?;
        if bytes.starts_with(NB_FORMAT.as_bytes()) {
            let text = String::from_utf8(bytes).map_err(|_| usage("naive bayes model is not UTF-8"))?;
            return Ok(LoadedModel::NaiveBayes(NaiveBayesModel::from_text(&text).map_err(usage)?));
        }
        let ck = Checkpoint::from_bytes(&bytes).map_err(|e| usage(format!("{}: {e}", checkpoint.display())))?;
        let vocab_path = vocab
            .map(Path::to_path_buf)
            .unwrap_or_else(|| checkpoint.parent().unwrap_or(Path::new(".")).join(files::VOCAB));
        let v = Vocabulary::load(&vocab_path).map_err(|e| usage(format!("{}: {e}", vocab_path.display())))?;
        manifest.input(&vocab_path)?;
        let hash = v.hash();
        if hash != ck.meta.vocab_hash {
            return Err(usage(format!(
                "vocabulary {} (sha256 {hash}) does not match the checkpoint's vocabulary (sha256 {})",
                vocab_path.display(),
                ck.meta.vocab_hash
            )));
        }
        if v.len() != ck.params.config.vocab_size {
            return Err(usage("vocabulary size does not match the checkpoint"));
        }
        Ok(LoadedModel::Bert {
            checkpoint: Box::new(ck),
            vocab: v,
        })
    }

    pub fn predict(&self, text: &str) -> Result<(MoodLabel, Vec<f64>)> {
        match self {
            LoadedModel::NaiveBayes(m) => Ok(nb_predict(m, text)),
            LoadedModel::Bert { checkpoint, vocab } => {
                let ex = encode(text, vocab, &checkpoint.meta.tokenizer);
                predict(&checkpoint.params, &ex).map_err(internal)
            }
        }
    }

    pub fn predict_corpus(&self, corpus: &Corpus) -> Result<Vec<MoodLabel>> {
        match self {
            LoadedModel::NaiveBayes(m) => Ok(corpus.iter().map(|r| nb_predict(m, &r.lyrics).0).collect()),
            LoadedModel::Bert { checkpoint, vocab } => {
                let data = encode_corpus(corpus, vocab, &checkpoint.meta.tokenizer);
                Ok(predict_split(&checkpoint.params, &data)
                    .map_err(train_error)?
                    .into_iter()
                    .map(|(m, _)| m)
                    .collect())
            }
        }
    }
}

pub fn cmd_eval(global: &Global, args: &EvalArgs) -> Result<RunManifest> {
    let mut manifest = RunManifest::start("eval");
    let model = LoadedModel::load(&args.checkpoint, args.vocab.as_deref(), &mut manifest)?;
    let (corpus, _) = load_input(&args.input, &mut manifest)?;
    let preds = model.predict_corpus(&corpus)?;
    let matrix = confusion(&preds, &labels(&corpus)).map_err(internal)?;
    let r = report(&matrix).map_err(internal)?;
    let out = &global.out;
    prepare_out(out)?;
    write_report(&mut manifest, out, [files::REPORT, files::REPORT_CSV, files::CONFUSION_MATRIX], &r, &matrix)?;
    let plot = confusion_heatmap(&matrix, &out.join(files::CONFUSION)).map_err(internal)?;
    manifest.output(plot.svg);
    manifest.output(plot.csv);
    manifest.config = json!({ "model": match model { LoadedModel::Bert { .. } => "bert", LoadedModel::NaiveBayes(_) => "nb" } });
    manifest.metric("accuracy", r.accuracy);
    manifest.metric("macro_f1", r.macro_avg.f1);
    manifest.metric("weighted_f1", r.weighted_avg.f1);
    manifest.metric("examples", r.total);
    print!("{}", r.to_text());
    Ok(manifest)
}

/// `mood=<label> p=<happy,sad,romantic,relaxed>`
pub fn format_prediction(label: MoodLabel, probs: &[f64]) -> String {
    let p: Vec<String> = probs.iter().map(|x| format!("{x:.6}")).collect();
    format!("mood={} p={}", label.as_str(), p.join(","))
}

pub fn cmd_predict(args: &PredictArgs) -> Result<String> {
    let mut scratch = RunManifest::start("predict");
    let model = LoadedModel::load(&args.checkpoint, args.vocab.as_deref(), &mut scratch)?;
    let text = match (&args.lyrics, &args.file) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) => std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?,
        (None, None) => return Err(usage("predict needs --lyrics or --file")),
    };
    let lowercase = match &model {
        LoadedModel::Bert { checkpoint, .. } => checkpoint.meta.tokenizer,
        LoadedModel::NaiveBayes(_) => moodlyrics::TokenizerConfig::default(),
    };
    if normalize(&text, &lowercase).is_empty() {
        log::warn!("lyrics are empty after cleaning; predicting from [CLS][SEP] only");
    }
    let (label, probs) = model.predict(&text)?;
    Ok(format_prediction(label, &probs))
}

/// Executes a parsed command line.
pub fn execute(cli: &Cli) -> Result<()> {
    let global = Global {
        seed: cli.seed,
        out: cli.out.clone(),
    };
    let manifest = match &cli.command {
        Command::Ingest(a) => cmd_ingest(&global, a)?,
        Command::Analyze(a) => cmd_analyze(&global, a)?,
        Command::Train(a) => cmd_train(&global, a)?,
        Command::Eval(a) => cmd_eval(&global, a)?,
        Command::Predict(a) => {
            println!("{}", cmd_predict(a)?);
            return Ok(());
        }
    };
    let path = manifest.finish(&global.out)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        usage(e)
    }
}
