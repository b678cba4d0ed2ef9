//! Dense row-major kernels and the differentiable primitives of the encoder.

use super::{ModelError, Result};

/// `a[m×k] · b[k×n]`
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// Accumulates `aᵀ[k×m] · b[m×n]` into `out[k×n]`.
pub fn matmul_tn_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in out[p * n..(p + 1) * n].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `a[m×n] · bᵀ` where `b` is `[k×n]`.
pub fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            out[i * k + j] = arow.iter().zip(&b[j * n..(j + 1) * n]).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `x[rows×in] · w[in×out] + bias`
pub fn linear(x: &[f64], w: &[f64], bias: &[f64], rows: usize, inp: usize, out: usize) -> Vec<f64> {
    let mut y = matmul(x, w, rows, inp, out);
    for r in y.chunks_mut(out) {
        for (v, b) in r.iter_mut().zip(bias) {
            *v += b;
        }
    }
    y
}

/// Backward of [`linear`]: accumulates weight and bias gradients, returns `dx`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    rows: usize,
    inp: usize,
    out: usize,
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    matmul_tn_acc(x, dy, rows, inp, out, dw);
    for r in dy.chunks(out) {
        for (g, d) in db.iter_mut().zip(r) {
            *g += d;
        }
    }
    matmul_nt(dy, w, rows, out, inp)
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ModelError::NonFinite("softmax input"));
    }
    Ok(softmax_unchecked(v))
}

pub(crate) fn softmax_unchecked(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// GELU, tanh approximation. Differs from the erf form by up to ~1e-3.
pub fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_K * u * u * u)).tanh())
}

pub fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_K * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * u * u)
}

pub const LAYER_NORM_EPS: f64 = 1e-12;

/// Per-row layer normalization. Returns `(y, x_hat, inv_std)`.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], width: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let rows = x.len() / width;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * width..(r + 1) * width];
        let mean = row.iter().sum::<f64>() / width as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
        let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv[r] = is;
        for j in 0..width {
            let h = (row[j] - mean) * is;
            xhat[r * width + j] = h;
            y[r * width + j] = gain[j] * h + bias[j];
        }
    }
    (y, xhat, inv)
}

pub fn layer_norm_backward(
    dy: &[f64],
    xhat: &[f64],
    inv: &[f64],
    gain: &[f64],
    width: usize,
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; dy.len()];
    for (r, &is) in inv.iter().enumerate() {
        let span = r * width..(r + 1) * width;
        let (dyr, hr) = (&dy[span.clone()], &xhat[span.clone()]);
        let mut mean_d = 0.0;
        let mut mean_dh = 0.0;
        for j in 0..width {
            dgain[j] += dyr[j] * hr[j];
            dbias[j] += dyr[j];
            let d = dyr[j] * gain[j];
            mean_d += d;
            mean_dh += d * hr[j];
        }
        mean_d /= width as f64;
        mean_dh /= width as f64;
        for j in 0..width {
            let d = dyr[j] * gain[j];
            dx[r * width + j] = is * (d - mean_d - hr[j] * mean_dh);
        }
    }
    dx
}

/// Scaled dot-product attention for one head.
///
/// `q`, `k`, `v` are `[len × d]`; `mask[j] == 0` excludes key `j`. Returns the
/// output `[len × d]` and the attention probabilities `[len × len]`.
pub fn attention(q: &[f64], k: &[f64], v: &[f64], mask: &[u8], len: usize, d: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if q.len() != len * d || k.len() != len * d || v.len() != len * d || mask.len() != len {
        return Err(ModelError::ShapeMismatch(format!(
            "attention expects [{len}×{d}] inputs and a mask of {len}"
        )));
    }
    if !mask.iter().any(|&m| m != 0) {
        return Err(ModelError::AllMasked);
    }
    let scale = 1.0 / (d as f64).sqrt();
    let mut probs = matmul_nt(q, k, len, d, len);
    for row in probs.chunks_mut(len) {
        for (s, &m) in row.iter_mut().zip(mask) {
            *s = if m != 0 { *s * scale } else { f64::NEG_INFINITY };
        }
        let p = softmax_unchecked(row);
        row.copy_from_slice(&p);
    }
    let out = matmul(&probs, v, len, len, d);
    Ok((out, probs))
}

/// Backward of [`attention`]: returns `(dq, dk, dv)`.
pub fn attention_backward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    probs: &[f64],
    dout: &[f64],
    len: usize,
    d: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let scale = 1.0 / (d as f64).sqrt();
    let mut dv = vec![0.0; len * d];
    matmul_tn_acc(probs, dout, len, len, d, &mut dv);
    let dp = matmul_nt(dout, v, len, d, len);
    let mut ds = vec![0.0; len * len];
    for i in 0..len {
        let pr = &probs[i * len..(i + 1) * len];
        let dpr = &dp[i * len..(i + 1) * len];
        let dot: f64 = pr.iter().zip(dpr).map(|(a, b)| a * b).sum();
        for j in 0..len {
            ds[i * len + j] = pr[j] * (dpr[j] - dot) * scale;
        }
    }
    let dq = matmul(&ds, k, len, len, d);
    let mut dk = vec![0.0; len * d];
    matmul_tn_acc(&ds, q, len, len, d, &mut dk);
    (dq, dk, dv)
}
