//! Central finite-difference verification of [`backward`].
//!
//! Dropout masks depend only on the seed and batch index, never on parameter
//! values, so a train-mode check exercises the dropout paths too.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{backward, cross_entropy, forward, Mode, Parameters, Result};
use crate::corpus::MoodLabel;
use crate::tokenizer::EncodedExample;

/// Denominator floor for the relative error, so entries whose true gradient
/// is at the level of finite-difference truncation noise are compared
/// absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Outcome for one parameter array.
#[derive(Debug, Clone)]
pub struct ArrayCheck {
    pub name: String,
    pub checked: usize,
    pub total: usize,
    pub max_relative_error: f64,
    /// Largest analytic magnitude among the checked entries.
    pub max_abs_gradient: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

fn loss_at(params: &Parameters, batch: &[EncodedExample], labels: &[MoodLabel], mode: Mode) -> Result<f64> {
    cross_entropy(&forward(params, batch, mode)?.logits, labels)
}

/// Compares analytic and numeric gradients entry by entry.
///
/// Arrays with at most `per_array` entries are checked exhaustively; larger
/// ones on `per_array` entries, half drawn from the largest analytic
/// gradients and half uniformly at random (seeded by `sample_seed`).
pub fn check_gradients(
    params: &Parameters,
    batch: &[EncodedExample],
    labels: &[MoodLabel],
    mode: Mode,
    eps: f64,
    per_array: usize,
    sample_seed: u64,
) -> Result<Vec<ArrayCheck>> {
    let grads = backward(params, &forward(params, batch, mode)?, labels)?;
    let analytic: Vec<(String, Vec<f64>)> = grads
        .named_arrays()
        .into_iter()
        .map(|(n, _, t)| (n, t.data.clone()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let mut work = params.clone();
    let mut out = Vec::with_capacity(analytic.len());
    for (idx, (name, g)) in analytic.iter().enumerate() {
        let total = g.len();
        let entries: Vec<usize> = if total <= per_array {
            (0..total).collect()
        } else {
            let mut by_size: Vec<usize> = (0..total).collect();
            by_size.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()).then(a.cmp(&b)));
            let mut chosen: Vec<usize> = by_size[..per_array / 2].to_vec();
            chosen.extend(sample(&mut rng, total, per_array - per_array / 2));
            chosen.sort_unstable();
            chosen.dedup();
            chosen
        };
        let mut check = ArrayCheck {
            name: name.clone(),
            checked: entries.len(),
            total,
            max_relative_error: 0.0,
            max_abs_gradient: 0.0,
        };
        for &e in &entries {
            let original = work.arrays_mut()[idx].data[e];
            work.arrays_mut()[idx].data[e] = original + eps;
            let plus = loss_at(&work, batch, labels, mode)?;
            work.arrays_mut()[idx].data[e] = original - eps;
            let minus = loss_at(&work, batch, labels, mode)?;
            work.arrays_mut()[idx].data[e] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            check.max_relative_error = check.max_relative_error.max(relative_error(g[e], numeric));
            check.max_abs_gradient = check.max_abs_gradient.max(g[e].abs());
        }
        out.push(check);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig};
    use crate::tokenizer::{CLS_ID, PAD_ID, SEP_ID};

    fn example(body: &[u32], len: usize) -> EncodedExample {
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

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-9) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn tiny_model_passes_exhaustively() {
        let cfg = ModelConfig {
            num_layers: 2,
            hidden_size: 8,
            num_heads: 2,
            ffn_size: 16,
            vocab_size: 9,
            max_positions: 6,
            num_classes: 4,
            dropout_rate: 0.1,
            seed: 11,
        };
        // Larger weights than the default init so every path carries signal.
        let mut params = init_model(&cfg).unwrap();
        for t in params.arrays_mut() {
            for x in t.data.iter_mut() {
                *x *= 20.0;
            }
        }
        let batch = [example(&[4, 5, 6], 6), example(&[7], 6)];
        let labels = [MoodLabel::Romantic, MoodLabel::Sad];
        for mode in [Mode::Eval, Mode::Train { dropout_seed: 3 }] {
            let checks = check_gradients(&params, &batch, &labels, mode, 1e-4, usize::MAX, 0).unwrap();
            for c in &checks {
                assert_eq!(c.checked, c.total);
                assert!(c.max_relative_error <= 1e-3, "{mode:?} {c:?}");
            }
        }
    }
}
