//! Layers with hand-written reverse-mode gradients.
//!
//! Every layer splits into a forward pass that returns its output plus a cache,
//! and a backward pass that consumes the cache, accumulates parameter
//! gradients into the layer and returns the gradient with respect to its input.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Matrix;
use crate::{Error, Result};

/// A trainable tensor together with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Self { name: name.into(), value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub(crate) fn accumulate(&mut self, g: &Matrix) -> Result<()> {
        self.grad.add_assign(g)
    }
}

pub(crate) fn check_finite(m: &Matrix, layer: &str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { layer: layer.to_string() })
    }
}

/// Affine map `y = x·W + b` with `W: in×out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    /// Gaussian init scaled by `1/sqrt(fan_in)`, zero bias.
    pub fn new<R: Rng + ?Sized>(name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let std = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| std * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect::<Vec<f64>>();
        let weight = Matrix::from_vec(fan_in, fan_out, data).expect("sized above");
        Self {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), Matrix::zeros(1, fan_out)),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul(&self.weight.value)?.add_row_broadcast(&self.bias.value)
    }

    pub fn backward(&mut self, x: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
        self.weight.accumulate(&x.t_matmul(grad_out)?)?;
        self.bias.accumulate(&grad_out.sum_rows())?;
        grad_out.matmul_t(&self.weight.value)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: &Matrix) -> Matrix {
    x.map(|v| if v > 30.0 { v } else if v < -30.0 { v.exp() } else { v.exp().ln_1p() })
}

/// Gradient of softplus given its pre-activation input.
pub fn softplus_backward(x: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
    x.zip_map(grad_out, "softplus_backward", |v, g| g / (1.0 + (-v).exp()))
}

/// Row-wise softmax.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Batch normalization over the batch dimension.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Matrix,
    pub running_var: Matrix,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    x_hat: Matrix,
    inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), Matrix::filled(1, dim, 1.0)),
            beta: Param::new(format!("{name}.beta"), Matrix::zeros(1, dim)),
            running_mean: Matrix::zeros(1, dim),
            running_var: Matrix::filled(1, dim, 1.0),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.value.cols()
    }

    /// Normalizes with batch statistics and updates the running estimates.
    pub fn forward_train(&mut self, x: &Matrix) -> Result<(Matrix, BatchNormCache)> {
        let (n, d) = x.shape();
        if d != self.dim() || n == 0 {
            return Err(Error::shape("BatchNorm::forward_train", format!("{n}x{d} into dim {}", self.dim())));
        }
        let mean = x.sum_rows().scale(1.0 / n as f64);
        let mut var = Matrix::zeros(1, d);
        for r in 0..n {
            for (c, v) in x.row(r).iter().enumerate() {
                let dv = v - mean.get(0, c);
                var.as_mut_slice()[c] += dv * dv;
            }
        }
        let var = var.scale(1.0 / n as f64);
        let inv_std: Vec<f64> = var.as_slice().iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut x_hat = Matrix::zeros(n, d);
        let mut y = Matrix::zeros(n, d);
        for r in 0..n {
            for c in 0..d {
                let h = (x.get(r, c) - mean.get(0, c)) * inv_std[c];
                x_hat.set(r, c, h);
                y.set(r, c, self.gamma.value.get(0, c) * h + self.beta.value.get(0, c));
            }
        }
        let m = self.momentum;
        let unbiased = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
        for c in 0..d {
            let rm = self.running_mean.get(0, c);
            let rv = self.running_var.get(0, c);
            self.running_mean.set(0, c, (1.0 - m) * rm + m * mean.get(0, c));
            self.running_var.set(0, c, (1.0 - m) * rv + m * var.get(0, c) * unbiased);
        }
        Ok((y, BatchNormCache { x_hat, inv_std }))
    }

    /// Inference mode: a fixed affine map from the running statistics.
    pub fn forward_eval(&self, x: &Matrix) -> Result<Matrix> {
        let (n, d) = x.shape();
        if d != self.dim() {
            return Err(Error::shape("BatchNorm::forward_eval", format!("{n}x{d} into dim {}", self.dim())));
        }
        let mut y = Matrix::zeros(n, d);
        for c in 0..d {
            let scale = self.gamma.value.get(0, c) / (self.running_var.get(0, c) + self.eps).sqrt();
            let shift = self.beta.value.get(0, c) - scale * self.running_mean.get(0, c);
            for r in 0..n {
                y.set(r, c, scale * x.get(r, c) + shift);
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, cache: &BatchNormCache, grad_out: &Matrix) -> Result<Matrix> {
        let (n, d) = grad_out.shape();
        if cache.x_hat.shape() != (n, d) {
            return Err(Error::shape("BatchNorm::backward", "cache does not match gradient"));
        }
        let dgamma = cache.x_hat.hadamard(grad_out)?.sum_rows();
        let dbeta = grad_out.sum_rows();
        let mut dx = Matrix::zeros(n, d);
        let nf = n as f64;
        for c in 0..d {
            let g = self.gamma.value.get(0, c);
            let sum_dy = dbeta.get(0, c);
            let sum_dy_xhat = dgamma.get(0, c);
            for r in 0..n {
                let dy = grad_out.get(r, c);
                let v = g * cache.inv_std[c] / nf * (nf * dy - sum_dy - cache.x_hat.get(r, c) * sum_dy_xhat);
                dx.set(r, c, v);
            }
        }
        self.gamma.accumulate(&dgamma)?;
        self.beta.accumulate(&dbeta)?;
        Ok(dx)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

/// Sinusoidal timestep embedding: entry `2i` is `sin(t / 10000^(2i/dim))`,
/// entry `2i+1` the matching cosine.
pub fn sinusoidal_embed(t: f64, dim: usize) -> Result<Vec<f64>> {
    if !dim.is_multiple_of(2) {
        return Err(Error::shape("sinusoidal_embed", format!("dimension {dim} is odd")));
    }
    let mut out = vec![0.0; dim];
    for i in 0..dim / 2 {
        let freq = 10000f64.powf(2.0 * i as f64 / dim as f64);
        out[2 * i] = (t / freq).sin();
        out[2 * i + 1] = (t / freq).cos();
    }
    Ok(out)
}

/// Scaled dot-product attention `softmax(Q·Kᵀ/√h)·V`.
pub fn cross_attention(queries: &Matrix, keys: &Matrix, values: &Matrix) -> Result<Matrix> {
    Ok(attention_weights(queries, keys, values)?.1)
}

/// Returns `(weights, output)`; weights rows are probability vectors.
pub fn attention_weights(queries: &Matrix, keys: &Matrix, values: &Matrix) -> Result<(Matrix, Matrix)> {
    if queries.cols() != keys.cols() || keys.rows() != values.rows() {
        return Err(Error::shape(
            "cross_attention",
            format!(
                "queries {:?}, keys {:?}, values {:?}",
                queries.shape(),
                keys.shape(),
                values.shape()
            ),
        ));
    }
    let scale = 1.0 / (queries.cols().max(1) as f64).sqrt();
    let weights = softmax_rows(&queries.matmul_t(keys)?.scale(scale));
    let out = weights.matmul(values)?;
    Ok((weights, out))
}

/// Single-head cross attention between two token sequences.
///
/// Each input row of width `tokens * width` is reshaped into `tokens` tokens of
/// size `width`. The query source attends over the key/value source through
/// shared per-token projections, and the attended tokens are flattened back.
#[derive(Debug, Clone)]
pub struct CrossAttention {
    pub wq: Param,
    pub wk: Param,
    pub wv: Param,
    pub wo: Param,
    pub tokens: usize,
    pub width: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    rows: usize,
    /// Token-major views, `(rows * tokens) × width`.
    xq: Matrix,
    xkv: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// Stacked per-row attention weights, `(rows * tokens) × tokens`.
    attn: Matrix,
    out: Matrix,
}

impl CrossAttention {
    pub fn new<R: Rng + ?Sized>(name: &str, tokens: usize, width: usize, rng: &mut R) -> Self {
        let proj = |suffix: &str, rng: &mut R| {
            let l = Linear::new(&format!("{name}.{suffix}"), width, width, rng);
            l.weight
        };
        Self {
            wq: proj("wq", rng),
            wk: proj("wk", rng),
            wv: proj("wv", rng),
            wo: proj("wo", rng),
            tokens,
            width,
        }
    }

    pub fn dim(&self) -> usize {
        self.tokens * self.width
    }

    /// Row-major `n × (tokens·width)` is the same buffer as `(n·tokens) × width`.
    fn as_tokens(&self, x: &Matrix) -> Matrix {
        Matrix::from_vec(x.rows() * self.tokens, self.width, x.as_slice().to_vec()).expect("row width checked")
    }

    fn as_rows(&self, x: Matrix, rows: usize) -> Matrix {
        Matrix::from_vec(rows, self.dim(), x.into_vec()).expect("token count checked")
    }

    fn check(&self, q_src: &Matrix, kv_src: &Matrix) -> Result<()> {
        if q_src.cols() != self.dim() || kv_src.cols() != self.dim() || q_src.rows() != kv_src.rows() {
            return Err(Error::shape(
                "CrossAttention",
                format!("inputs {:?} and {:?} for dim {}", q_src.shape(), kv_src.shape(), self.dim()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, q_src: &Matrix, kv_src: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(q_src, kv_src)?.0)
    }

    pub fn forward_cached(&self, q_src: &Matrix, kv_src: &Matrix) -> Result<(Matrix, AttentionCache)> {
        self.check(q_src, kv_src)?;
        let n = q_src.rows();
        let (t, w) = (self.tokens, self.width);
        let xq = self.as_tokens(q_src);
        let xkv = self.as_tokens(kv_src);
        let q = xq.matmul(&self.wq.value)?;
        let k = xkv.matmul(&self.wk.value)?;
        let v = xkv.matmul(&self.wv.value)?;
        let scale = 1.0 / (w as f64).sqrt();
        let mut attn = Matrix::zeros(n * t, t);
        let mut out = Matrix::zeros(n * t, w);
        let (qs, ks, vs) = (q.as_slice(), k.as_slice(), v.as_slice());
        for r in 0..n {
            let base = r * t;
            for i in 0..t {
                let qi = &qs[(base + i) * w..(base + i + 1) * w];
                let a = attn.row_mut(base + i);
                for (j, aj) in a.iter_mut().enumerate() {
                    let kj = &ks[(base + j) * w..(base + j + 1) * w];
                    *aj = scale * qi.iter().zip(kj).map(|(x, y)| x * y).sum::<f64>();
                }
                let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for aj in a.iter_mut() {
                    *aj = (*aj - m).exp();
                    z += *aj;
                }
                a.iter_mut().for_each(|aj| *aj /= z);
                let a = attn.row(base + i).to_vec();
                let o = out.row_mut(base + i);
                for (j, &aj) in a.iter().enumerate() {
                    let vj = &vs[(base + j) * w..(base + j + 1) * w];
                    for (ov, &vv) in o.iter_mut().zip(vj) {
                        *ov += aj * vv;
                    }
                }
            }
        }
        let y = self.as_rows(out.matmul(&self.wo.value)?, n);
        Ok((y, AttentionCache { rows: n, xq, xkv, q, k, v, attn, out }))
    }

    /// Returns gradients with respect to the query source and the key/value source.
    pub fn backward(&mut self, cache: &AttentionCache, grad_out: &Matrix) -> Result<(Matrix, Matrix)> {
        let n = grad_out.rows();
        if cache.rows != n || grad_out.cols() != self.dim() {
            return Err(Error::shape("CrossAttention::backward", "cache does not match gradient"));
        }
        let (t, w) = (self.tokens, self.width);
        let scale = 1.0 / (w as f64).sqrt();
        let dy = self.as_tokens(grad_out);
        let gwo = cache.out.t_matmul(&dy)?;
        let d_out = dy.matmul_t(&self.wo.value)?;
        let mut d_q = Matrix::zeros(n * t, w);
        let mut d_k = Matrix::zeros(n * t, w);
        let mut d_v = Matrix::zeros(n * t, w);
        let mut d_logits = vec![0.0; t * t];
        for r in 0..n {
            let base = r * t;
            for i in 0..t {
                let a = cache.attn.row(base + i);
                let go = d_out.row(base + i);
                // d_attn_ij = go · v_j
                let mut dot = 0.0;
                for j in 0..t {
                    let g: f64 = go.iter().zip(cache.v.row(base + j)).map(|(x, y)| x * y).sum();
                    d_logits[i * t + j] = g;
                    dot += a[j] * g;
                }
                for j in 0..t {
                    d_logits[i * t + j] = a[j] * (d_logits[i * t + j] - dot) * scale;
                }
                for j in 0..t {
                    let aij = a[j];
                    for (dv, &g) in d_v.row_mut(base + j).iter_mut().zip(go) {
                        *dv += aij * g;
                    }
                }
            }
            for i in 0..t {
                for j in 0..t {
                    let dl = d_logits[i * t + j];
                    if dl == 0.0 {
                        continue;
                    }
                    for (dq, &kv) in d_q.row_mut(base + i).iter_mut().zip(cache.k.row(base + j)) {
                        *dq += dl * kv;
                    }
                    for (dk, &qv) in d_k.row_mut(base + j).iter_mut().zip(cache.q.row(base + i)) {
                        *dk += dl * qv;
                    }
                }
            }
        }
        self.wq.accumulate(&cache.xq.t_matmul(&d_q)?)?;
        self.wk.accumulate(&cache.xkv.t_matmul(&d_k)?)?;
        self.wv.accumulate(&cache.xkv.t_matmul(&d_v)?)?;
        self.wo.accumulate(&gwo)?;
        let dxq = d_q.matmul_t(&self.wq.value)?;
        let dxkv = d_k.matmul_t(&self.wk.value)?.add(&d_v.matmul_t(&self.wv.value)?)?;
        Ok((self.as_rows(dxq, n), self.as_rows(dxkv, n)))
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.wq, &self.wk, &self.wv, &self.wo]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.wq, &mut self.wk, &mut self.wv, &mut self.wo]
    }
}
