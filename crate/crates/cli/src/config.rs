//! Flat `key=value` run configuration.

use std::path::Path;

use moodlyrics::baseline::DEFAULT_ALPHA;
use moodlyrics::corpus::SplitRatios;
use moodlyrics::{MoodLabel, TokenizerConfig, TrainConfig};
use serde::Serialize;

use crate::CliError;

/// Everything `train` can be configured with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub tokenizer: TokenizerConfig,
    pub num_layers: usize,
    pub hidden_size: usize,
    pub num_heads: usize,
    /// `None` means four times the hidden size.
    pub ffn_size: Option<usize>,
    pub dropout_rate: f64,
    pub split: SplitRatios,
    pub alpha: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            tokenizer: TokenizerConfig::default(),
            num_layers: 2,
            hidden_size: 64,
            num_heads: 2,
            ffn_size: None,
            dropout_rate: 0.1,
            split: SplitRatios::default(),
            alpha: DEFAULT_ALPHA,
        }
    }
}

pub const KEYS: &[&str] = &[
    "batch_size",
    "learning_rate",
    "epochs",
    "weight_decay",
    "beta1",
    "beta2",
    "epsilon",
    "max_grad_norm",
    "class_weights",
    "vocab_size",
    "max_sequence_length",
    "lowercase",
    "num_layers",
    "hidden_size",
    "num_heads",
    "ffn_size",
    "dropout_rate",
    "train_ratio",
    "val_ratio",
    "test_ratio",
    "alpha",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{value}`")))
}

impl RunConfig {
    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key.trim() {
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "learning_rate" => self.train.learning_rate = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "weight_decay" => self.train.weight_decay = parse(key, v)?,
            "beta1" => self.train.beta1 = parse(key, v)?,
            "beta2" => self.train.beta2 = parse(key, v)?,
            "epsilon" => self.train.epsilon = parse(key, v)?,
            "max_grad_norm" => self.train.max_grad_norm = parse(key, v)?,
            "class_weights" => {
                if v.is_empty() || v == "none" {
                    self.train.class_weights = None;
                } else {
                    let parts = v.split(',').map(|p| parse::<f64>(key, p.trim())).collect::<Result<Vec<_>, _>>()?;
                    let arr: [f64; MoodLabel::COUNT] = parts.try_into().map_err(|_| {
                        CliError::Usage("class_weights needs four comma-separated values (happy,sad,romantic,relaxed)".into())
                    })?;
                    self.train.class_weights = Some(arr);
                }
            }
            "vocab_size" => self.tokenizer.vocab_size = parse(key, v)?,
            "max_sequence_length" => self.tokenizer.max_sequence_length = parse(key, v)?,
            "lowercase" => self.tokenizer.lowercase = parse(key, v)?,
            "num_layers" => self.num_layers = parse(key, v)?,
            "hidden_size" => self.hidden_size = parse(key, v)?,
            "num_heads" => self.num_heads = parse(key, v)?,
            "ffn_size" => self.ffn_size = Some(parse(key, v)?),
            "dropout_rate" => self.dropout_rate = parse(key, v)?,
            "train_ratio" => self.split.train = parse(key, v)?,
            "val_ratio" => self.split.val = parse(key, v)?,
            "test_ratio" => self.split.test = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown config key `{other}`; known keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies a `key=value` pair given as one string.
    pub fn assign(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=value, got `{pair}`")))?;
        self.set(k, v)
    }

    /// Applies every assignment of a config file. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.assign(line).map_err(|e| CliError::Usage(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn ffn(&self) -> usize {
        self.ffn_size.unwrap_or(4 * self.hidden_size)
    }
}
