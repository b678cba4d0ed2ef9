//! Forward pass, loss, and exact backpropagation.
//!
//! Only unmasked positions are materialized: a masked key receives a `-inf`
//! score and therefore zero attention weight, and masked query rows never
//! reach the `[CLS]` output, so dropping them yields identical logits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::{
    attention, attention_backward, gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, log_sum_exp,
    softmax_unchecked,
};
use super::{Gradients, ModelConfig, ModelError, Parameters, Result, Tensor, NUM_CLASSES};
use crate::corpus::MoodLabel;
use crate::seed;
use crate::tokenizer::EncodedExample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active; masks are drawn from `dropout_seed` and recorded.
    Train { dropout_seed: u64 },
    Eval,
}

#[derive(Debug, Clone)]
struct LayerCache {
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<Vec<f64>>,
    ctx: Vec<f64>,
    attn_drop: Option<Vec<f64>>,
    xhat1: Vec<f64>,
    inv1: Vec<f64>,
    h1: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
    ffn_drop: Option<Vec<f64>>,
    xhat2: Vec<f64>,
    inv2: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ExampleTrace {
    ids: Vec<u32>,
    positions: Vec<usize>,
    emb_drop: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
    cls: Vec<f64>,
    cls_drop: Option<Vec<f64>>,
}

/// Cached activations of a batch forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `[batch × num_classes]`
    pub logits: Tensor,
    pub mode: Mode,
    config: ModelConfig,
    examples: Vec<ExampleTrace>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.examples.len()
    }

    pub fn logits_row(&self, i: usize) -> &[f64] {
        self.logits.row(i)
    }
}

fn dropout_mask(rng: &mut Option<ChaCha8Rng>, len: usize, rate: f64) -> Option<Vec<f64>> {
    let rng = rng.as_mut()?;
    if rate == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some((0..len).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect())
}

fn apply_mask(x: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        for (v, s) in x.iter_mut().zip(m) {
            *v *= s;
        }
    }
}

fn head_slice(x: &[f64], n: usize, width: usize, head: usize, dh: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * dh);
    for r in 0..n {
        out.extend_from_slice(&x[r * width + head * dh..r * width + (head + 1) * dh]);
    }
    out
}

fn head_scatter(dst: &mut [f64], src: &[f64], n: usize, width: usize, head: usize, dh: usize) {
    for r in 0..n {
        dst[r * width + head * dh..r * width + (head + 1) * dh].copy_from_slice(&src[r * dh..(r + 1) * dh]);
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn active_positions(example: &EncodedExample, config: &ModelConfig) -> Result<(Vec<u32>, Vec<usize>)> {
    if example.ids.len() != example.mask.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "ids length {} vs mask length {}",
            example.ids.len(),
            example.mask.len()
        )));
    }
    let positions: Vec<usize> = (0..example.mask.len()).filter(|&i| example.mask[i] != 0).collect();
    if positions.is_empty() {
        return Err(ModelError::AllMasked);
    }
    if positions[0] != 0 {
        return Err(ModelError::ClsMasked);
    }
    let mut ids = Vec::with_capacity(positions.len());
    for &p in &positions {
        if p >= config.max_positions {
            return Err(ModelError::PositionOutOfRange {
                position: p,
                max_positions: config.max_positions,
            });
        }
        let id = example.ids[p];
        if id as usize >= config.vocab_size {
            return Err(ModelError::IdOutOfRange {
                id,
                vocab_size: config.vocab_size,
            });
        }
        ids.push(id);
    }
    Ok((ids, positions))
}

fn forward_example(params: &Parameters, example: &EncodedExample, rng: &mut Option<ChaCha8Rng>) -> Result<(Vec<f64>, ExampleTrace)> {
    let cfg = &params.config;
    let h = cfg.hidden_size;
    let f = cfg.ffn_size;
    let heads = cfg.num_heads;
    let dh = cfg.head_dim();
    let p = cfg.dropout_rate;
    let (ids, positions) = active_positions(example, cfg)?;
    let n = ids.len();

    let mut x = Vec::with_capacity(n * h);
    for (&id, &pos) in ids.iter().zip(&positions) {
        let tok = params.token_embedding.row(id as usize);
        let pe = params.position_embedding.row(pos);
        x.extend(tok.iter().zip(pe).map(|(a, b)| a + b));
    }
    let emb_drop = dropout_mask(rng, n * h, p);
    apply_mask(&mut x, &emb_drop);

    let mut layers = Vec::with_capacity(cfg.num_layers);
    let all_keys = vec![1u8; n];
    for layer in &params.layers {
        let q = linear(&x, &layer.query.weight.data, &layer.query.bias.data, n, h, h);
        let k = linear(&x, &layer.key.weight.data, &layer.key.bias.data, n, h, h);
        let v = linear(&x, &layer.value.weight.data, &layer.value.bias.data, n, h, h);
        let mut ctx = vec![0.0; n * h];
        let mut probs = Vec::with_capacity(heads);
        for hd in 0..heads {
            let (qh, kh, vh) = (head_slice(&q, n, h, hd, dh), head_slice(&k, n, h, hd, dh), head_slice(&v, n, h, hd, dh));
            let (out, pr) = attention(&qh, &kh, &vh, &all_keys, n, dh)?;
            head_scatter(&mut ctx, &out, n, h, hd, dh);
            probs.push(pr);
        }
        let mut a = linear(&ctx, &layer.attn_out.weight.data, &layer.attn_out.bias.data, n, h, h);
        let attn_drop = dropout_mask(rng, n * h, p);
        apply_mask(&mut a, &attn_drop);
        add_into(&mut a, &x);
        let (h1, xhat1, inv1) = layer_norm(&a, &layer.attn_norm.gain.data, &layer.attn_norm.bias.data, h);

        let u = linear(&h1, &layer.ffn_in.weight.data, &layer.ffn_in.bias.data, n, h, f);
        let g: Vec<f64> = u.iter().map(|&z| gelu(z)).collect();
        let mut ff = linear(&g, &layer.ffn_out.weight.data, &layer.ffn_out.bias.data, n, f, h);
        let ffn_drop = dropout_mask(rng, n * h, p);
        apply_mask(&mut ff, &ffn_drop);
        add_into(&mut ff, &h1);
        let (out, xhat2, inv2) = layer_norm(&ff, &layer.ffn_norm.gain.data, &layer.ffn_norm.bias.data, h);

        layers.push(LayerCache {
            x: std::mem::replace(&mut x, out),
            q,
            k,
            v,
            probs,
            ctx,
            attn_drop,
            xhat1,
            inv1,
            h1,
            u,
            g,
            ffn_drop,
            xhat2,
            inv2,
        });
    }

    let cls = x[..h].to_vec();
    let cls_drop = dropout_mask(rng, h, p);
    let mut pooled = cls.clone();
    apply_mask(&mut pooled, &cls_drop);
    let logits = linear(&pooled, &params.classifier.weight.data, &params.classifier.bias.data, 1, h, cfg.num_classes);
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(ModelError::NonFinite("logits"));
    }
    Ok((
        logits,
        ExampleTrace {
            ids,
            positions,
            emb_drop,
            layers,
            cls,
            cls_drop,
        },
    ))
}

/// Runs the encoder over a batch.
///
/// In [`Mode::Train`] each example draws its dropout masks from a stream
/// derived from the seed and the example's index in the batch.
pub fn forward(params: &Parameters, batch: &[EncodedExample], mode: Mode) -> Result<ForwardTrace> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let c = params.config.num_classes;
    let mut logits = Tensor::zeros(&[batch.len(), c]);
    let mut examples = Vec::with_capacity(batch.len());
    for (i, ex) in batch.iter().enumerate() {
        let mut rng = match mode {
            Mode::Train { dropout_seed } => Some(ChaCha8Rng::seed_from_u64(seed::derive_indexed(
                dropout_seed,
                seed::stream::DROPOUT,
                i as u64,
            ))),
            Mode::Eval => None,
        };
        let (row, trace) = forward_example(params, ex, &mut rng)?;
        logits.row_mut(i).copy_from_slice(&row);
        examples.push(trace);
    }
    Ok(ForwardTrace {
        logits,
        mode,
        config: params.config,
        examples,
    })
}

fn check_labels(logits: &Tensor, labels: &[MoodLabel]) -> Result<()> {
    if logits.shape[0] != labels.len() {
        return Err(ModelError::TraceMismatch(format!(
            "{} logit rows vs {} labels",
            logits.shape[0],
            labels.len()
        )));
    }
    Ok(())
}

fn weights_for(labels: &[MoodLabel], class_weights: Option<&[f64]>) -> Vec<f64> {
    labels
        .iter()
        .map(|l| class_weights.map_or(1.0, |w| w[l.index()]))
        .collect()
}

/// Mean negative log-likelihood of the labels under softmax(logits).
pub fn cross_entropy(logits: &Tensor, labels: &[MoodLabel]) -> Result<f64> {
    cross_entropy_weighted(logits, labels, None)
}

/// Weighted mean: `Σ w[y]·nll / Σ w[y]`.
pub fn cross_entropy_weighted(logits: &Tensor, labels: &[MoodLabel], class_weights: Option<&[f64]>) -> Result<f64> {
    check_labels(logits, labels)?;
    let w = weights_for(labels, class_weights);
    let total: f64 = w.iter().sum();
    let mut loss = 0.0;
    for (i, label) in labels.iter().enumerate() {
        let row = logits.row(i);
        loss += w[i] * (log_sum_exp(row) - row[label.index()]);
    }
    Ok(loss / total)
}

/// Exact gradients of [`cross_entropy`] with respect to every parameter.
pub fn backward(params: &Parameters, trace: &ForwardTrace, labels: &[MoodLabel]) -> Result<Gradients> {
    backward_weighted(params, trace, labels, None)
}

pub fn backward_weighted(
    params: &Parameters,
    trace: &ForwardTrace,
    labels: &[MoodLabel],
    class_weights: Option<&[f64]>,
) -> Result<Gradients> {
    if trace.config != params.config {
        return Err(ModelError::TraceMismatch("model config differs".into()));
    }
    check_labels(&trace.logits, labels)?;
    let cfg = &params.config;
    let h = cfg.hidden_size;
    let f = cfg.ffn_size;
    let c = cfg.num_classes;
    let heads = cfg.num_heads;
    let dh = cfg.head_dim();
    let w = weights_for(labels, class_weights);
    let total: f64 = w.iter().sum();

    let mut grads = Parameters::zeros(cfg);
    for (i, (ex, label)) in trace.examples.iter().zip(labels).enumerate() {
        let n = ex.ids.len();
        let mut dlogits = softmax_unchecked(trace.logits.row(i));
        dlogits[label.index()] -= 1.0;
        for d in dlogits.iter_mut() {
            *d *= w[i] / total;
        }

        let mut pooled = ex.cls.clone();
        apply_mask(&mut pooled, &ex.cls_drop);
        let mut dcls = linear_backward(
            &pooled,
            &params.classifier.weight.data,
            &dlogits,
            1,
            h,
            c,
            &mut grads.classifier.weight.data,
            &mut grads.classifier.bias.data,
        );
        apply_mask(&mut dcls, &ex.cls_drop);

        let mut dx = vec![0.0; n * h];
        dx[..h].copy_from_slice(&dcls);
        for (layer, (cache, g)) in params
            .layers
            .iter()
            .zip(ex.layers.iter().zip(grads.layers.iter_mut()))
            .rev()
        {
            let dr2 = layer_norm_backward(
                &dx,
                &cache.xhat2,
                &cache.inv2,
                &layer.ffn_norm.gain.data,
                h,
                &mut g.ffn_norm.gain.data,
                &mut g.ffn_norm.bias.data,
            );
            let mut dff = dr2.clone();
            apply_mask(&mut dff, &cache.ffn_drop);
            let dgel = linear_backward(
                &cache.g,
                &layer.ffn_out.weight.data,
                &dff,
                n,
                f,
                h,
                &mut g.ffn_out.weight.data,
                &mut g.ffn_out.bias.data,
            );
            let du: Vec<f64> = dgel.iter().zip(&cache.u).map(|(d, &u)| d * gelu_grad(u)).collect();
            let mut dh1 = linear_backward(
                &cache.h1,
                &layer.ffn_in.weight.data,
                &du,
                n,
                h,
                f,
                &mut g.ffn_in.weight.data,
                &mut g.ffn_in.bias.data,
            );
            add_into(&mut dh1, &dr2);

            let dr1 = layer_norm_backward(
                &dh1,
                &cache.xhat1,
                &cache.inv1,
                &layer.attn_norm.gain.data,
                h,
                &mut g.attn_norm.gain.data,
                &mut g.attn_norm.bias.data,
            );
            let mut da = dr1.clone();
            apply_mask(&mut da, &cache.attn_drop);
            let dctx = linear_backward(
                &cache.ctx,
                &layer.attn_out.weight.data,
                &da,
                n,
                h,
                h,
                &mut g.attn_out.weight.data,
                &mut g.attn_out.bias.data,
            );
            let mut dq = vec![0.0; n * h];
            let mut dk = vec![0.0; n * h];
            let mut dv = vec![0.0; n * h];
            for hd in 0..heads {
                let (dqh, dkh, dvh) = attention_backward(
                    &head_slice(&cache.q, n, h, hd, dh),
                    &head_slice(&cache.k, n, h, hd, dh),
                    &head_slice(&cache.v, n, h, hd, dh),
                    &cache.probs[hd],
                    &head_slice(&dctx, n, h, hd, dh),
                    n,
                    dh,
                );
                head_scatter(&mut dq, &dqh, n, h, hd, dh);
                head_scatter(&mut dk, &dkh, n, h, hd, dh);
                head_scatter(&mut dv, &dvh, n, h, hd, dh);
            }
            let mut dx_new = dr1;
            for (lin, glin, d) in [
                (&layer.query, &mut g.query, &dq),
                (&layer.key, &mut g.key, &dk),
                (&layer.value, &mut g.value, &dv),
            ] {
                let part = linear_backward(&cache.x, &lin.weight.data, d, n, h, h, &mut glin.weight.data, &mut glin.bias.data);
                add_into(&mut dx_new, &part);
            }
            dx = dx_new;
        }

        apply_mask(&mut dx, &ex.emb_drop);
        for (r, (&id, &pos)) in ex.ids.iter().zip(&ex.positions).enumerate() {
            let d = &dx[r * h..(r + 1) * h];
            add_into(grads.token_embedding.row_mut(id as usize), d);
            add_into(grads.position_embedding.row_mut(pos), d);
        }
    }
    Ok(grads)
}

/// Argmax class (ties to the lowest index) and the softmax probabilities.
pub fn predict_from_logits(logits: &[f64]) -> (MoodLabel, Vec<f64>) {
    let probs = softmax_unchecked(logits);
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    (MoodLabel::from_index(best).expect("four classes"), probs)
}

pub fn predict(params: &Parameters, example: &EncodedExample) -> Result<(MoodLabel, Vec<f64>)> {
    let trace = forward(params, std::slice::from_ref(example), Mode::Eval)?;
    debug_assert_eq!(trace.logits.shape[1], NUM_CLASSES);
    Ok(predict_from_logits(trace.logits.row(0)))
}
