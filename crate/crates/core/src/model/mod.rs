//! BERT-style encoder classifier.
//!
//! Token + position embeddings feed a stack of post-norm encoder layers
//! (multi-head self-attention, then a GELU feed-forward block, each wrapped in
//! a residual connection and layer normalization). The final hidden state of
//! the `[CLS]` position goes straight into a linear head producing raw logits.
//!
//! All arithmetic is `f64`; gradients are computed by hand in [`encoder`].

pub mod checkpoint;
pub mod encoder;
pub mod gradcheck;
pub mod ops;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::MoodLabel;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use encoder::{backward, backward_weighted, cross_entropy, cross_entropy_weighted, forward, predict, predict_from_logits, ForwardTrace, Mode};
pub use ops::{attention, softmax};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("position {position} exceeds max_positions {max_positions}")]
    PositionOutOfRange { position: usize, max_positions: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("every key position is masked")]
    AllMasked,
    #[error("the [CLS] position (0) is masked")]
    ClsMasked,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("trace does not match parameters or labels: {0}")]
    TraceMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Number of output classes; fixed by the mood taxonomy.
pub const NUM_CLASSES: usize = MoodLabel::COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub num_heads: usize,
    pub ffn_size: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// 2 layers, hidden 64, 2 heads: trains in seconds on a laptop CPU.
    pub fn desk(vocab_size: usize, max_positions: usize) -> Self {
        Self {
            num_layers: 2,
            hidden_size: 64,
            num_heads: 2,
            ffn_size: 256,
            vocab_size,
            max_positions,
            num_classes: NUM_CLASSES,
            dropout_rate: 0.1,
            seed: 42,
        }
    }

    /// BERT-Base dimensions: 12 layers, hidden 768, 12 heads.
    pub fn base(vocab_size: usize, max_positions: usize) -> Self {
        Self {
            num_layers: 12,
            hidden_size: 768,
            num_heads: 12,
            ffn_size: 3072,
            ..Self::desk(vocab_size, max_positions)
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("num_layers", self.num_layers),
            ("hidden_size", self.hidden_size),
            ("num_heads", self.num_heads),
            ("ffn_size", self.ffn_size),
            ("vocab_size", self.vocab_size),
            ("max_positions", self.max_positions),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if !self.hidden_size.is_multiple_of(self.num_heads) {
            return Err(ModelError::InvalidConfig(format!(
                "hidden_size {} is not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            )));
        }
        if self.num_classes != NUM_CLASSES {
            return Err(ModelError::InvalidConfig(format!(
                "num_classes must be {NUM_CLASSES}, got {}",
                self.num_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Total trainable scalars, without allocating.
    pub fn num_parameters(&self) -> usize {
        let h = self.hidden_size;
        let f = self.ffn_size;
        let per_layer = 4 * (h * h + h) + 2 * (2 * h) + (h * f + f) + (f * h + h);
        self.vocab_size * h + self.max_positions * h + self.num_layers * per_layer + h * self.num_classes + self.num_classes
    }
}

/// A dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(ModelError::ShapeMismatch(format!("{shape:?} vs {} values", data.len())));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.shape[1];
        &self.data[r * w..(r + 1) * w]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let w = self.shape[1];
        &mut self.data[r * w..(r + 1) * w]
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

/// How the optimizer treats an array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Embedding,
    Weight,
    Bias,
    NormGain,
    NormBias,
}

impl ParamKind {
    /// Layer-norm parameters and biases are exempt from weight decay.
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Embedding | ParamKind::Weight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[in × out]`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn zeros(inp: usize, out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[inp, out]),
            bias: Tensor::zeros(&[out]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub bias: Tensor,
}

impl LayerNorm {
    fn new(width: usize, gain: f64) -> Self {
        Self {
            gain: Tensor::filled(&[width], gain),
            bias: Tensor::zeros(&[width]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub attn_out: Linear,
    pub attn_norm: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub ffn_norm: LayerNorm,
}

/// Every trainable array of the model. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub config: ModelConfig,
    /// `[vocab_size × hidden]`
    pub token_embedding: Tensor,
    /// `[max_positions × hidden]`
    pub position_embedding: Tensor,
    pub layers: Vec<EncoderLayer>,
    /// `[hidden × num_classes]`
    pub classifier: Linear,
}

/// Gradients mirror the parameter layout.
pub type Gradients = Parameters;

impl Parameters {
    /// All-zero arrays (layer-norm gains included) shaped by `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        Self::build(config, 0.0)
    }

    fn build(config: &ModelConfig, norm_gain: f64) -> Self {
        let h = config.hidden_size;
        let f = config.ffn_size;
        let layers = (0..config.num_layers)
            .map(|_| EncoderLayer {
                query: Linear::zeros(h, h),
                key: Linear::zeros(h, h),
                value: Linear::zeros(h, h),
                attn_out: Linear::zeros(h, h),
                attn_norm: LayerNorm::new(h, norm_gain),
                ffn_in: Linear::zeros(h, f),
                ffn_out: Linear::zeros(f, h),
                ffn_norm: LayerNorm::new(h, norm_gain),
            })
            .collect();
        Self {
            config: *config,
            token_embedding: Tensor::zeros(&[config.vocab_size, h]),
            position_embedding: Tensor::zeros(&[config.max_positions, h]),
            layers,
            classifier: Linear::zeros(h, config.num_classes),
        }
    }

    /// Named arrays in a fixed order (the checkpoint order).
    pub fn named_arrays(&self) -> Vec<(String, ParamKind, &Tensor)> {
        let mut out = vec![
            ("embeddings.token".to_string(), ParamKind::Embedding, &self.token_embedding),
            ("embeddings.position".to_string(), ParamKind::Embedding, &self.position_embedding),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let linears = [
                ("attention.query", &l.query),
                ("attention.key", &l.key),
                ("attention.value", &l.value),
                ("attention.output", &l.attn_out),
            ];
            for (name, lin) in linears {
                out.push((format!("layers.{i}.{name}.weight"), ParamKind::Weight, &lin.weight));
                out.push((format!("layers.{i}.{name}.bias"), ParamKind::Bias, &lin.bias));
            }
            out.push((format!("layers.{i}.attention.norm.gain"), ParamKind::NormGain, &l.attn_norm.gain));
            out.push((format!("layers.{i}.attention.norm.bias"), ParamKind::NormBias, &l.attn_norm.bias));
            for (name, lin) in [("ffn.in", &l.ffn_in), ("ffn.out", &l.ffn_out)] {
                out.push((format!("layers.{i}.{name}.weight"), ParamKind::Weight, &lin.weight));
                out.push((format!("layers.{i}.{name}.bias"), ParamKind::Bias, &lin.bias));
            }
            out.push((format!("layers.{i}.ffn.norm.gain"), ParamKind::NormGain, &l.ffn_norm.gain));
            out.push((format!("layers.{i}.ffn.norm.bias"), ParamKind::NormBias, &l.ffn_norm.bias));
        }
        out.push(("classifier.weight".to_string(), ParamKind::Weight, &self.classifier.weight));
        out.push(("classifier.bias".to_string(), ParamKind::Bias, &self.classifier.bias));
        out
    }

    /// Mutable arrays in the same order as [`Parameters::named_arrays`].
    pub fn arrays_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.token_embedding, &mut self.position_embedding];
        for l in self.layers.iter_mut() {
            for lin in [&mut l.query, &mut l.key, &mut l.value, &mut l.attn_out] {
                out.push(&mut lin.weight);
                out.push(&mut lin.bias);
            }
            out.push(&mut l.attn_norm.gain);
            out.push(&mut l.attn_norm.bias);
            for lin in [&mut l.ffn_in, &mut l.ffn_out] {
                out.push(&mut lin.weight);
                out.push(&mut lin.bias);
            }
            out.push(&mut l.ffn_norm.gain);
            out.push(&mut l.ffn_norm.bias);
        }
        out.push(&mut self.classifier.weight);
        out.push(&mut self.classifier.bias);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named_arrays().iter().map(|(_, _, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_arrays().iter().all(|(_, _, t)| t.data.iter().all(|x| x.is_finite()))
    }

    /// Global L2 norm over every array.
    pub fn global_norm(&self) -> f64 {
        self.named_arrays().iter().map(|(_, _, t)| t.sum_squares()).sum::<f64>().sqrt()
    }

    /// Rounds every value to the nearest `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for t in self.arrays_mut() {
            for x in t.data.iter_mut() {
                *x = *x as f32 as f64;
            }
        }
    }

    pub fn same_shape(&self, other: &Parameters) -> bool {
        let a = self.named_arrays();
        let b = other.named_arrays();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.0 == y.0 && x.2.shape == y.2.shape)
    }
}

/// Weights ~ N(0, 0.02²), biases 0, layer-norm gains 1; deterministic per
/// `config.seed`.
pub fn init_model(config: &ModelConfig) -> Result<Parameters> {
    config.validate()?;
    let mut params = Parameters::build(config, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 0.02).expect("valid std");
    let kinds: Vec<ParamKind> = params.named_arrays().iter().map(|(_, k, _)| *k).collect();
    for (t, kind) in params.arrays_mut().into_iter().zip(kinds) {
        if kind.decays() {
            for x in t.data.iter_mut() {
                *x = normal.sample(&mut rng);
            }
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            vocab_size: 11,
            max_positions: 9,
            ..ModelConfig::desk(11, 9)
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_model(&small()).unwrap();
        let b = init_model(&small()).unwrap();
        assert_eq!(a, b);
        let c = init_model(&ModelConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_follows_rules() {
        let p = init_model(&small()).unwrap();
        for (name, kind, t) in p.named_arrays() {
            match kind {
                ParamKind::NormGain => assert!(t.data.iter().all(|&x| x == 1.0), "{name}"),
                ParamKind::Bias | ParamKind::NormBias => assert!(t.data.iter().all(|&x| x == 0.0), "{name}"),
                _ => {
                    let n = t.len() as f64;
                    let mean = t.data.iter().sum::<f64>() / n;
                    let std = (t.data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                    assert!(mean.abs() < 0.01, "{name} mean {mean}");
                    assert!((std - 0.02).abs() < 0.01, "{name} std {std}");
                }
            }
        }
    }

    #[test]
    fn heads_must_divide_hidden() {
        let cfg = ModelConfig {
            num_heads: 3,
            ..small()
        };
        assert!(matches!(init_model(&cfg), Err(ModelError::InvalidConfig(_))));
        let cfg = ModelConfig {
            num_classes: 5,
            ..small()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn parameter_counts_agree() {
        let cfg = small();
        assert_eq!(init_model(&cfg).unwrap().num_parameters(), cfg.num_parameters());
        let base = ModelConfig::base(8000, 512);
        base.validate().unwrap();
        assert_eq!(base.head_dim(), 64);
        // 12 layers of 7,087,872 plus embeddings and head
        assert_eq!(base.num_parameters(), 8000 * 768 + 512 * 768 + 12 * 7_087_872 + 768 * 4 + 4);
    }

    #[test]
    fn shapes_follow_config() {
        let p = init_model(&small()).unwrap();
        assert_eq!(p.token_embedding.shape, vec![11, 64]);
        assert_eq!(p.position_embedding.shape, vec![9, 64]);
        assert_eq!(p.layers[0].ffn_in.weight.shape, vec![64, 256]);
        assert_eq!(p.layers[1].ffn_out.weight.shape, vec![256, 64]);
        assert_eq!(p.classifier.weight.shape, vec![64, 4]);
        assert_eq!(p.named_arrays().len(), 2 + 2 * 16 + 2);
    }
}
