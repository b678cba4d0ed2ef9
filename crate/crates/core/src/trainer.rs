//! Fine-tuning loop: AdamW with decoupled weight decay, linear learning-rate
//! decay without warmup, global-norm gradient clipping and best-validation
//! checkpointing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::MoodLabel;
use crate::model::{
    backward_weighted, cross_entropy, cross_entropy_weighted, forward, predict_from_logits, Checkpoint, CheckpointMeta,
    Gradients, ModelError, Mode, Parameters,
};
use crate::seed;
use crate::tokenizer::EncodedExample;

/// Examples per eval-mode forward call when scoring a whole split.
const EVAL_CHUNK: usize = 32;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("example {index} of the {split} split has no label")]
    Unlabeled { split: &'static str, index: usize },
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },
    #[error("gradient layout does not match parameters")]
    ShapeMismatch,
    #[error("schedule step {step} outside 0..={total}")]
    StepOutOfRange { step: usize, total: usize },
    #[error("cannot write checkpoint {path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_grad_norm: f64,
    /// Drives shuffling and dropout.
    pub seed: u64,
    /// Optional per-class loss weights in label order; `None` means unweighted.
    pub class_weights: Option<[f64; MoodLabel::COUNT]>,
}

impl Default for TrainConfig {
    /// Batch 8 and 100 epochs; the learning rate is scaled up from the
    /// fine-tuning range because the desk model starts from random weights.
    fn default() -> Self {
        Self {
            batch_size: 8,
            learning_rate: 1e-3,
            epochs: 100,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_grad_norm: 1.0,
            seed: 42,
            class_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.batch_size < 1 {
            return fail("batch_size must be >= 1");
        }
        if self.epochs < 1 {
            return fail("epochs must be >= 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail("learning_rate must be > 0");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return fail("weight_decay must be >= 0");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return fail("betas must lie in [0, 1)");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return fail("epsilon must be > 0");
        }
        if !(self.max_grad_norm.is_finite() && self.max_grad_norm > 0.0) {
            return fail("max_grad_norm must be > 0");
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return fail("class weights must be > 0");
            }
        }
        Ok(())
    }

    pub fn batches_per_epoch(&self, train_size: usize) -> usize {
        train_size.div_ceil(self.batch_size)
    }

    pub fn total_steps(&self, train_size: usize) -> usize {
        self.epochs * self.batches_per_epoch(train_size)
    }
}

/// `base_lr × (1 − step/total_steps)`: no warmup, zero at the final step.
pub fn linear_schedule(step: usize, total_steps: usize, base_lr: f64) -> Result<f64> {
    if total_steps == 0 || step > total_steps {
        return Err(TrainError::StepOutOfRange {
            step,
            total: total_steps,
        });
    }
    Ok(base_lr * (1.0 - step as f64 / total_steps as f64))
}

/// Scales every gradient by `max_norm / norm` when the global L2 norm exceeds
/// `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        let scale = max_norm / norm;
        for t in grads.arrays_mut() {
            t.data.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

/// First and second moment estimates plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Parameters,
    pub v: Parameters,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &Parameters) -> Self {
        Self {
            m: Parameters::zeros(&params.config),
            v: Parameters::zeros(&params.config),
            step: 0,
        }
    }
}

/// One AdamW update. Embeddings and weight matrices decay; biases and
/// layer-norm parameters do not.
pub fn adamw_step(params: &mut Parameters, grads: &Gradients, state: &mut AdamState, lr: f64, config: &TrainConfig) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) || !params.same_shape(&state.v) {
        return Err(TrainError::ShapeMismatch);
    }
    let grad_arrays = grads.named_arrays();
    if let Some((name, _, _)) = grad_arrays.iter().find(|(_, _, t)| t.data.iter().any(|g| !g.is_finite())) {
        return Err(TrainError::NonFiniteGradient(name.clone()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    let kinds: Vec<bool> = grad_arrays.iter().map(|(_, k, _)| k.decays()).collect();
    let arrays = params.arrays_mut().into_iter().zip(state.m.arrays_mut()).zip(state.v.arrays_mut());
    for (((p, m), v), (g, decays)) in arrays.zip(grad_arrays.iter().map(|(_, _, g)| g).zip(kinds)) {
        let wd = if decays { config.weight_decay } else { 0.0 };
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m.data[i] = config.beta1 * m.data[i] + (1.0 - config.beta1) * gi;
            v.data[i] = config.beta2 * v.data[i] + (1.0 - config.beta2) * gi * gi;
            let m_hat = m.data[i] / c1;
            let v_hat = v.data[i] / c2;
            p.data[i] -= lr * (m_hat / (v_hat.sqrt() + config.epsilon) + wd * p.data[i]);
        }
    }
    Ok(())
}

/// Loss and accuracy of one split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitMetrics {
    pub loss: f64,
    pub accuracy: f64,
}

fn labels_of(data: &[EncodedExample], split: &'static str) -> Result<Vec<MoodLabel>> {
    data.iter()
        .enumerate()
        .map(|(index, ex)| ex.label.ok_or(TrainError::Unlabeled { split, index }))
        .collect()
}

/// Eval-mode predictions for every example, in order.
pub fn predict_split(params: &Parameters, data: &[EncodedExample]) -> Result<Vec<(MoodLabel, Vec<f64>)>> {
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(EVAL_CHUNK) {
        let trace = forward(params, chunk, Mode::Eval)?;
        out.extend((0..chunk.len()).map(|i| predict_from_logits(trace.logits.row(i))));
    }
    Ok(out)
}

/// Unweighted mean cross-entropy and accuracy over a labeled split, eval mode.
pub fn evaluate_split(params: &Parameters, data: &[EncodedExample]) -> Result<SplitMetrics> {
    if data.is_empty() {
        return Err(TrainError::EmptySplit("evaluation"));
    }
    let labels = labels_of(data, "evaluation")?;
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for (chunk, gold) in data.chunks(EVAL_CHUNK).zip(labels.chunks(EVAL_CHUNK)) {
        let trace = forward(params, chunk, Mode::Eval)?;
        loss_sum += cross_entropy(&trace.logits, gold)? * chunk.len() as f64;
        correct += (0..chunk.len())
            .filter(|&i| predict_from_logits(trace.logits.row(i)).0 == gold[i])
            .count();
    }
    Ok(SplitMetrics {
        loss: loss_sum / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
    })
}

/// Scores the model after each epoch.
pub trait Validator {
    /// `epoch` is 1-indexed.
    fn validate(&mut self, epoch: usize, params: &Parameters) -> Result<SplitMetrics>;
}

/// Evaluates a held-out split.
pub struct SplitValidator<'a> {
    pub data: &'a [EncodedExample],
}

impl Validator for SplitValidator<'_> {
    fn validate(&mut self, _epoch: usize, params: &Parameters) -> Result<SplitMetrics> {
        evaluate_split(params, self.data)
    }
}

/// 1-indexed epoch of the first maximum; `None` for an empty sequence.
pub fn best_epoch(val_accuracies: &[f64]) -> Option<usize> {
    let mut tracker = BestTracker::default();
    for (i, &a) in val_accuracies.iter().enumerate() {
        tracker.observe(i + 1, a);
    }
    tracker.best().map(|(e, _)| e)
}

/// Tracks the best validation accuracy; only strict improvements count.
#[derive(Debug, Clone, Copy, Default)]
pub struct BestTracker {
    best: Option<(usize, f64)>,
}

impl BestTracker {
    /// Returns true when `accuracy` strictly beats everything seen so far.
    pub fn observe(&mut self, epoch: usize, accuracy: f64) -> bool {
        let improved = self.best.is_none_or(|(_, b)| accuracy > b);
        if improved {
            self.best = Some((epoch, accuracy));
        }
        improved
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// 1-indexed epoch with the highest validation accuracy (first on ties).
    pub fn best_epoch(&self) -> Option<usize> {
        best_epoch(&self.val_accuracies())
    }

    pub fn best_record(&self) -> Option<&EpochRecord> {
        self.best_epoch().map(|e| &self.epochs[e - 1])
    }

    pub fn train_accuracies(&self) -> Vec<f64> {
        self.epochs.iter().map(|r| r.train_acc).collect()
    }

    pub fn val_accuracies(&self) -> Vec<f64> {
        self.epochs.iter().map(|r| r.val_acc).collect()
    }

    /// CSV with shortest round-trip floats.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{HISTORY_HEADER}\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?}",
                r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(HISTORY_HEADER) {
            return Err(format!("expected header `{HISTORY_HEADER}`"));
        }
        let mut epochs = Vec::new();
        for (n, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || format!("line {}: malformed history row", n + 2);
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            epochs.push(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_loss: num(f[1])?,
                train_acc: num(f[2])?,
                val_loss: num(f[3])?,
                val_acc: num(f[4])?,
            });
        }
        Ok(Self { epochs })
    }
}

/// Where and how to persist the best checkpoint.
#[derive(Debug, Clone)]
pub struct CheckpointSink {
    pub path: PathBuf,
    /// Epoch and validation accuracy are filled in on each write.
    pub meta: CheckpointMeta,
}

impl CheckpointSink {
    pub fn new(path: impl Into<PathBuf>, meta: CheckpointMeta) -> Self {
        Self {
            path: path.into(),
            meta,
        }
    }

    fn write(&self, params: &Parameters, epoch: usize, val_accuracy: f64) -> Result<Checkpoint> {
        let ck = Checkpoint::new(
            params.clone(),
            CheckpointMeta {
                epoch: Some(epoch),
                val_accuracy: Some(val_accuracy),
                ..self.meta.clone()
            },
        );
        ck.save(Path::new(&self.path)).map_err(|source| TrainError::Checkpoint {
            path: self.path.clone(),
            source,
        })?;
        Ok(ck)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: TrainHistory,
    /// Parameters from the best validation epoch.
    pub best_params: Parameters,
    pub best_epoch: usize,
    pub final_params: Parameters,
}

/// Trains against a held-out validation split.
pub fn train(
    params: Parameters,
    train_data: &[EncodedExample],
    val_data: &[EncodedExample],
    config: &TrainConfig,
    sink: Option<&CheckpointSink>,
) -> Result<TrainOutcome> {
    if val_data.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    labels_of(val_data, "validation")?;
    train_with_validator(params, train_data, config, &mut SplitValidator { data: val_data }, sink)
}

/// The epoch loop with a pluggable validation step.
///
/// Each epoch shuffles the training set with a seeded permutation, then for
/// every batch runs a train-mode forward pass, backpropagates, clips, sets the
/// scheduled learning rate and applies AdamW. Parameters are rounded to `f32`
/// after every update so a saved checkpoint reloads to exactly the weights
/// that were scored. Both splits are then scored in eval mode, and the
/// checkpoint is rewritten whenever validation accuracy strictly improves.
pub fn train_with_validator(
    mut params: Parameters,
    train_data: &[EncodedExample],
    config: &TrainConfig,
    validator: &mut dyn Validator,
    sink: Option<&CheckpointSink>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_data.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    let labels = labels_of(train_data, "training")?;
    let weights = config.class_weights.as_ref().map(|w| w.as_slice());
    let total = config.total_steps(train_data.len());
    let mut state = AdamState::new(&params);
    let mut history = TrainHistory::default();
    let mut tracker = BestTracker::default();
    let mut best_params = params.clone();
    params.round_to_f32();

    let mut step = 0usize;
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_indexed(config.seed, seed::stream::SHUFFLE, epoch as u64));
        order.shuffle(&mut rng);
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<EncodedExample> = idx.iter().map(|&i| train_data[i].clone()).collect();
            let gold: Vec<MoodLabel> = idx.iter().map(|&i| labels[i]).collect();
            let dropout_seed = seed::derive_indexed(config.seed, seed::stream::DROPOUT, step as u64);
            let trace = forward(&params, &batch, Mode::Train { dropout_seed })?;
            let loss = cross_entropy_weighted(&trace.logits, &gold, weights)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step, loss });
            }
            let mut grads = backward_weighted(&params, &trace, &gold, weights)?;
            clip_grad_norm(&mut grads, config.max_grad_norm);
            let lr = linear_schedule(step, total, config.learning_rate)?;
            adamw_step(&mut params, &grads, &mut state, lr, config)?;
            params.round_to_f32();
            step += 1;
        }

        let tr = evaluate_split(&params, train_data)?;
        let va = validator.validate(epoch, &params)?;
        if !(tr.loss.is_finite() && va.loss.is_finite()) {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                step,
                loss: if tr.loss.is_finite() { va.loss } else { tr.loss },
            });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: tr.loss,
            train_acc: tr.accuracy,
            val_loss: va.loss,
            val_acc: va.accuracy,
        });
        log::info!(
            "epoch {epoch}/{}: train_loss={:.4} train_acc={:.4} val_loss={:.4} val_acc={:.4}",
            config.epochs,
            tr.loss,
            tr.accuracy,
            va.loss,
            va.accuracy
        );
        if tracker.observe(epoch, va.accuracy) {
            best_params = params.clone();
            if let Some(sink) = sink {
                sink.write(&params, epoch, va.accuracy)?;
            }
        }
    }
    let (best, _) = tracker.best().expect("at least one epoch");
    Ok(TrainOutcome {
        history,
        best_params,
        best_epoch: best,
        final_params: params,
    })
}
