//! The two networks used by the pipeline.
//!
//! [`NoiseNet`] predicts diffusion noise from a noised label vector, the
//! instance features, the prior mean and the timestep:
//!
//! ```text
//! x ──inst_enc──softplus──► zx ─┬─ inst_attn(q=zx, kv=zy) + zx ──► hx ─┐
//! [S_t | prior] ──label_enc──softplus──► zy ─┴─ label_attn(q=zy, kv=zx) + zy ──► hy ─┤
//!                                                         hx ⊙ hy + time_proj(emb(t))
//!                                  └─► [Linear ─ BatchNorm ─ Softplus] × blocks ─► head ─► ε̂
//! ```
//!
//! [`PriorNet`] is a one-hidden-layer softmax classifier.

use rand::Rng;

use super::checkpoint::Checkpoint;
use super::layers::{
    check_finite, sinusoidal_embed, softmax_rows, softplus, softplus_backward, AttentionCache, BatchNorm,
    BatchNormCache, CrossAttention, Linear, Param,
};
use super::Matrix;
use crate::{Error, Result};

/// Anything with an ordered list of trainable parameters.
pub trait Network {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.value.as_slice().len()).sum()
    }
}

/// Architecture sizes for [`NoiseNet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    /// Width of the fused representation; must be a multiple of `tokens`.
    pub hidden: usize,
    /// Number of tokens each representation is split into for attention.
    pub tokens: usize,
    /// Sinusoidal time-embedding size (even).
    pub time_dim: usize,
    /// Feed-forward blocks after fusion.
    pub blocks: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { hidden: 128, tokens: 8, time_dim: 64, blocks: 2 }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.tokens == 0 || !self.hidden.is_multiple_of(self.tokens) {
            return Err(Error::config("hidden", format!("{} is not a positive multiple of tokens={}", self.hidden, self.tokens)));
        }
        if self.time_dim == 0 || !self.time_dim.is_multiple_of(2) {
            return Err(Error::config("time_dim", format!("{} must be positive and even", self.time_dim)));
        }
        Ok(())
    }
}

/// Batched inputs to the noise network; all matrices share the row count.
#[derive(Debug, Clone, Copy)]
pub struct NoiseInput<'a> {
    pub noised: &'a Matrix,
    pub features: &'a Matrix,
    pub prior: &'a Matrix,
    pub timesteps: &'a [usize],
}

#[derive(Debug, Clone)]
pub struct NoiseNet {
    cfg: NetConfig,
    features: usize,
    classes: usize,
    inst_enc: Linear,
    label_enc: Linear,
    inst_attn: CrossAttention,
    label_attn: CrossAttention,
    time_proj: Linear,
    blocks: Vec<(Linear, BatchNorm)>,
    head: Linear,
}

struct Tape {
    x: Matrix,
    zx_pre: Matrix,
    zx: Matrix,
    label_in: Matrix,
    zy_pre: Matrix,
    zy: Matrix,
    inst_cache: AttentionCache,
    label_cache: AttentionCache,
    hx: Matrix,
    hy: Matrix,
    temb: Matrix,
    blocks: Vec<BlockTape>,
    last: Matrix,
}

struct BlockTape {
    input: Matrix,
    bn_cache: BatchNormCache,
    bn_out: Matrix,
}

fn concat_cols(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::shape("concat_cols", format!("{:?} and {:?}", a.shape(), b.shape())));
    }
    let mut out = Matrix::zeros(a.rows(), a.cols() + b.cols());
    for r in 0..a.rows() {
        let row = out.row_mut(r);
        row[..a.cols()].copy_from_slice(a.row(r));
        row[a.cols()..].copy_from_slice(b.row(r));
    }
    Ok(out)
}

pub(crate) fn time_embedding(timesteps: &[usize], dim: usize) -> Result<Matrix> {
    let mut out = Matrix::zeros(timesteps.len(), dim);
    for (r, &t) in timesteps.iter().enumerate() {
        out.row_mut(r).copy_from_slice(&sinusoidal_embed(t as f64, dim)?);
    }
    Ok(out)
}

impl NoiseNet {
    pub fn new<R: Rng + ?Sized>(features: usize, classes: usize, cfg: NetConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.hidden;
        let width = h / cfg.tokens;
        Ok(Self {
            cfg,
            features,
            classes,
            inst_enc: Linear::new("noise.inst_enc", features, h, rng),
            label_enc: Linear::new("noise.label_enc", 2 * classes, h, rng),
            inst_attn: CrossAttention::new("noise.inst_attn", cfg.tokens, width, rng),
            label_attn: CrossAttention::new("noise.label_attn", cfg.tokens, width, rng),
            time_proj: Linear::new("noise.time_proj", cfg.time_dim, h, rng),
            blocks: (0..cfg.blocks)
                .map(|i| {
                    (
                        Linear::new(&format!("noise.block{i}.linear"), h, h, rng),
                        BatchNorm::new(&format!("noise.block{i}.bn"), h),
                    )
                })
                .collect(),
            head: Linear::new("noise.head", h, classes, rng),
        })
    }

    pub fn config(&self) -> NetConfig {
        self.cfg
    }

    pub fn feature_dim(&self) -> usize {
        self.features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn check_input(&self, input: &NoiseInput<'_>) -> Result<usize> {
        let b = input.noised.rows();
        let ok = input.noised.cols() == self.classes
            && input.prior.shape() == (b, self.classes)
            && input.features.shape() == (b, self.features)
            && input.timesteps.len() == b;
        if !ok {
            return Err(Error::shape(
                "NoiseNet",
                format!(
                    "noised {:?}, features {:?}, prior {:?}, {} timesteps for features={} classes={}",
                    input.noised.shape(),
                    input.features.shape(),
                    input.prior.shape(),
                    input.timesteps.len(),
                    self.features,
                    self.classes
                ),
            ));
        }
        Ok(b)
    }

    /// Inference-mode prediction (batch normalization uses running statistics).
    pub fn predict(&self, input: &NoiseInput<'_>) -> Result<Matrix> {
        self.check_input(input)?;
        let zx = softplus(&self.inst_enc.forward(input.features)?);
        let zy = softplus(&self.label_enc.forward(&concat_cols(input.noised, input.prior)?)?);
        let hx = zx.add(&self.inst_attn.forward(&zx, &zy)?)?;
        let hy = zy.add(&self.label_attn.forward(&zy, &zx)?)?;
        let te = self.time_proj.forward(&time_embedding(input.timesteps, self.cfg.time_dim)?)?;
        let mut h = hx.hadamard(&hy)?.add(&te)?;
        for (lin, bn) in &self.blocks {
            h = softplus(&bn.forward_eval(&lin.forward(&h)?)?);
        }
        let out = self.head.forward(&h)?;
        check_finite(&out, "noise.head")?;
        Ok(out)
    }

    fn forward_train(&mut self, input: &NoiseInput<'_>) -> Result<(Matrix, Tape)> {
        self.check_input(input)?;
        let x = input.features.clone();
        let zx_pre = self.inst_enc.forward(&x)?;
        let zx = softplus(&zx_pre);
        check_finite(&zx, "noise.inst_enc")?;
        let label_in = concat_cols(input.noised, input.prior)?;
        let zy_pre = self.label_enc.forward(&label_in)?;
        let zy = softplus(&zy_pre);
        check_finite(&zy, "noise.label_enc")?;
        let (ax, inst_cache) = self.inst_attn.forward_cached(&zx, &zy)?;
        let hx = zx.add(&ax)?;
        check_finite(&hx, "noise.inst_attn")?;
        let (ay, label_cache) = self.label_attn.forward_cached(&zy, &zx)?;
        let hy = zy.add(&ay)?;
        check_finite(&hy, "noise.label_attn")?;
        let temb = time_embedding(input.timesteps, self.cfg.time_dim)?;
        let te = self.time_proj.forward(&temb)?;
        let mut h = hx.hadamard(&hy)?.add(&te)?;
        check_finite(&h, "noise.fusion")?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, (lin, bn)) in self.blocks.iter_mut().enumerate() {
            let pre = lin.forward(&h)?;
            let (bn_out, bn_cache) = bn.forward_train(&pre)?;
            let next = softplus(&bn_out);
            check_finite(&next, &format!("noise.block{i}"))?;
            blocks.push(BlockTape { input: h, bn_cache, bn_out });
            h = next;
        }
        let out = self.head.forward(&h)?;
        check_finite(&out, "noise.head")?;
        let tape = Tape {
            x,
            zx_pre,
            zx,
            label_in,
            zy_pre,
            zy,
            inst_cache,
            label_cache,
            hx,
            hy,
            temb,
            blocks,
            last: h,
        };
        Ok((out, tape))
    }

    fn backward(&mut self, tape: Tape, grad_out: &Matrix) -> Result<()> {
        let mut dh = self.head.backward(&tape.last, grad_out)?;
        for ((lin, bn), bt) in self.blocks.iter_mut().zip(&tape.blocks).rev() {
            let d_bn = softplus_backward(&bt.bn_out, &dh)?;
            let d_pre = bn.backward(&bt.bn_cache, &d_bn)?;
            dh = lin.backward(&bt.input, &d_pre)?;
        }
        self.time_proj.backward(&tape.temb, &dh)?;
        let dhx = dh.hadamard(&tape.hy)?;
        let dhy = dh.hadamard(&tape.hx)?;
        let (dzy_q, dzx_kv) = self.label_attn.backward(&tape.label_cache, &dhy)?;
        let (dzx_q, dzy_kv) = self.inst_attn.backward(&tape.inst_cache, &dhx)?;
        let dzx = dhx.add(&dzx_q)?.add(&dzx_kv)?;
        let dzy = dhy.add(&dzy_q)?.add(&dzy_kv)?;
        debug_assert_eq!(dzx.shape(), tape.zx.shape());
        debug_assert_eq!(dzy.shape(), tape.zy.shape());
        self.inst_enc.backward(&tape.x, &softplus_backward(&tape.zx_pre, &dzx)?)?;
        self.label_enc.backward(&tape.label_in, &softplus_backward(&tape.zy_pre, &dzy)?)?;
        Ok(())
    }

    /// Training-mode pass: returns `mean_b ‖target_b − ε̂_b‖²` and leaves the
    /// gradient of that loss in every parameter (previous gradients are cleared).
    pub fn forward_backward(&mut self, input: &NoiseInput<'_>, target: &Matrix) -> Result<f64> {
        if target.shape() != input.noised.shape() {
            return Err(Error::shape("NoiseNet::forward_backward", format!("target {:?}", target.shape())));
        }
        self.zero_grad();
        let (pred, tape) = self.forward_train(input)?;
        let b = pred.rows() as f64;
        let diff = pred.sub(target)?;
        let loss = diff.as_slice().iter().map(|v| v * v).sum::<f64>() / b;
        if !loss.is_finite() {
            return Err(Error::NonFinite { layer: "noise.loss".into() });
        }
        self.backward(tape, &diff.scale(2.0 / b))?;
        Ok(loss)
    }

    pub fn save(&self, ckpt: &mut Checkpoint) {
        ckpt.set_meta("noise.features", self.features);
        ckpt.set_meta("noise.classes", self.classes);
        ckpt.set_meta("noise.hidden", self.cfg.hidden);
        ckpt.set_meta("noise.tokens", self.cfg.tokens);
        ckpt.set_meta("noise.time_dim", self.cfg.time_dim);
        ckpt.set_meta("noise.blocks", self.cfg.blocks);
        for p in self.params() {
            ckpt.insert(&p.name, p.value.clone());
        }
        for (i, (_, bn)) in self.blocks.iter().enumerate() {
            ckpt.insert(&format!("noise.block{i}.bn.running_mean"), bn.running_mean.clone());
            ckpt.insert(&format!("noise.block{i}.bn.running_var"), bn.running_var.clone());
        }
    }

    pub fn load(ckpt: &Checkpoint) -> Result<Self> {
        let cfg = NetConfig {
            hidden: ckpt.meta_parse("noise.hidden")?,
            tokens: ckpt.meta_parse("noise.tokens")?,
            time_dim: ckpt.meta_parse("noise.time_dim")?,
            blocks: ckpt.meta_parse("noise.blocks")?,
        };
        let features = ckpt.meta_parse("noise.features")?;
        let classes = ckpt.meta_parse("noise.classes")?;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut net = Self::new(features, classes, cfg, &mut rng)?;
        for p in net.params_mut() {
            p.value = ckpt.tensor_shaped(&p.name, p.value.shape())?.clone();
        }
        for (i, (_, bn)) in net.blocks.iter_mut().enumerate() {
            let shape = bn.running_mean.shape();
            bn.running_mean = ckpt.tensor_shaped(&format!("noise.block{i}.bn.running_mean"), shape)?.clone();
            bn.running_var = ckpt.tensor_shaped(&format!("noise.block{i}.bn.running_var"), shape)?.clone();
        }
        Ok(net)
    }
}

impl Network for NoiseNet {
    fn params(&self) -> Vec<&Param> {
        let mut out = self.inst_enc.params();
        out.extend(self.label_enc.params());
        out.extend(self.inst_attn.params());
        out.extend(self.label_attn.params());
        out.extend(self.time_proj.params());
        for (lin, bn) in &self.blocks {
            out.extend(lin.params());
            out.extend(bn.params());
        }
        out.extend(self.head.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.inst_enc.params_mut();
        out.extend(self.label_enc.params_mut());
        out.extend(self.inst_attn.params_mut());
        out.extend(self.label_attn.params_mut());
        out.extend(self.time_proj.params_mut());
        for (lin, bn) in &mut self.blocks {
            out.extend(lin.params_mut());
            out.extend(bn.params_mut());
        }
        out.extend(self.head.params_mut());
        out
    }
}

/// Softmax classifier `features → hidden (softplus) → classes`.
#[derive(Debug, Clone)]
pub struct PriorNet {
    hidden: Linear,
    out: Linear,
}

impl PriorNet {
    pub fn new<R: Rng + ?Sized>(features: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        Self {
            hidden: Linear::new("prior.hidden", features, hidden, rng),
            out: Linear::new("prior.out", hidden, classes, rng),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.hidden.in_dim()
    }

    pub fn classes(&self) -> usize {
        self.out.out_dim()
    }

    pub fn probabilities(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.feature_dim() {
            return Err(Error::shape("PriorNet", format!("{} features, expected {}", x.cols(), self.feature_dim())));
        }
        let h = softplus(&self.hidden.forward(x)?);
        let p = softmax_rows(&self.out.forward(&h)?);
        check_finite(&p, "prior.out")?;
        Ok(p)
    }

    /// Cross-entropy against soft targets, averaged over rows; leaves gradients in
    /// the parameters.
    pub fn forward_backward(&mut self, x: &Matrix, targets: &Matrix) -> Result<f64> {
        if x.cols() != self.feature_dim() || targets.shape() != (x.rows(), self.classes()) {
            return Err(Error::shape("PriorNet::forward_backward", format!("x {:?}, targets {:?}", x.shape(), targets.shape())));
        }
        self.zero_grad();
        let pre = self.hidden.forward(x)?;
        let h = softplus(&pre);
        check_finite(&h, "prior.hidden")?;
        let logits = self.out.forward(&h)?;
        let p = softmax_rows(&logits);
        check_finite(&p, "prior.out")?;
        let b = x.rows() as f64;
        let mut loss = 0.0;
        for (pv, tv) in p.as_slice().iter().zip(targets.as_slice()) {
            if *tv > 0.0 {
                loss -= tv * pv.max(1e-300).ln();
            }
        }
        loss /= b;
        if !loss.is_finite() {
            return Err(Error::NonFinite { layer: "prior.loss".into() });
        }
        let d_logits = p.sub(targets)?.scale(1.0 / b);
        let dh = self.out.backward(&h, &d_logits)?;
        self.hidden.backward(x, &softplus_backward(&pre, &dh)?)?;
        Ok(loss)
    }

    pub fn save(&self, ckpt: &mut Checkpoint) {
        ckpt.set_meta("prior.features", self.feature_dim());
        ckpt.set_meta("prior.hidden", self.hidden.out_dim());
        ckpt.set_meta("prior.classes", self.classes());
        for p in self.params() {
            ckpt.insert(&p.name, p.value.clone());
        }
    }

    pub fn load(ckpt: &Checkpoint) -> Result<Self> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut net = Self::new(
            ckpt.meta_parse("prior.features")?,
            ckpt.meta_parse("prior.hidden")?,
            ckpt.meta_parse("prior.classes")?,
            &mut rng,
        );
        for p in net.params_mut() {
            p.value = ckpt.tensor_shaped(&p.name, p.value.shape())?.clone();
        }
        Ok(net)
    }
}

impl Network for PriorNet {
    fn params(&self) -> Vec<&Param> {
        let mut out = self.hidden.params();
        out.extend(self.out.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.hidden.params_mut();
        out.extend(self.out.params_mut());
        out
    }
}
