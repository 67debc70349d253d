//! A small pre-LN, decoder-only transformer with hand-written backpropagation.
//!
//! Layout: token embedding (plus fixed sinusoidal positions), `n_blocks`
//! transformer blocks of `LN -> causal MHA -> residual -> LN -> MLP -> residual`,
//! a final LayerNorm and an untied linear head. Attention and MLP projections
//! carry no biases. All arithmetic is `f64`.
//!
//! Gradients are always produced for every parameter; choosing which ones to
//! apply is the optimizer's business.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target value that excludes a position from the loss.
pub const IGNORE_INDEX: usize = usize::MAX;

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub mlp_ratio: usize,
    pub max_seq_len: usize,
    /// Bytes per parameter used for optimizer-state accounting only.
    pub param_dtype_bytes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 16,
            d_model: 32,
            n_heads: 4,
            n_blocks: 8,
            mlp_ratio: 4,
            max_seq_len: 32,
            param_dtype_bytes: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_blocks", self.n_blocks),
            ("mlp_ratio", self.mlp_ratio),
            ("max_seq_len", self.max_seq_len),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::config(
                "n_heads",
                format!(
                    "d_model ({}) is not divisible by n_heads ({})",
                    self.d_model, self.n_heads
                ),
            ));
        }
        if !matches!(self.param_dtype_bytes, 2 | 4 | 8) {
            return Err(Error::config(
                "param_dtype_bytes",
                format!("{} is not one of 2, 4, 8", self.param_dtype_bytes),
            ));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn hidden_dim(&self) -> usize {
        self.mlp_ratio * self.d_model
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub id: ParamId,
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    /// `None` until a backward pass has run.
    pub grad: Option<Vec<f64>>,
}

impl ParamTensor {
    pub fn new(id: ParamId, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self {
            id,
            name: name.into(),
            shape,
            values,
            grad: None,
        }
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }
}

/// A `[batch, seq]` block of token ids with next-token targets, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub batch_size: usize,
    pub seq_len: usize,
    pub token_ids: Vec<usize>,
    /// Same layout as `token_ids`; [`IGNORE_INDEX`] masks a position out of the loss.
    pub targets: Vec<usize>,
}

impl Batch {
    pub fn new(
        batch_size: usize,
        seq_len: usize,
        token_ids: Vec<usize>,
        targets: Vec<usize>,
    ) -> Result<Self> {
        let n = batch_size * seq_len;
        if n == 0 {
            return Err(Error::Input("batch must be non-empty".into()));
        }
        if token_ids.len() != n || targets.len() != n {
            return Err(Error::Input(format!(
                "expected {n} token ids and targets, got {} and {}",
                token_ids.len(),
                targets.len()
            )));
        }
        Ok(Self {
            batch_size,
            seq_len,
            token_ids,
            targets,
        })
    }

    fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.seq_len > config.max_seq_len {
            return Err(Error::Input(format!(
                "sequence length {} exceeds max_seq_len {}",
                self.seq_len, config.max_seq_len
            )));
        }
        if let Some(&bad) = self.token_ids.iter().find(|&&t| t >= config.vocab_size) {
            return Err(Error::Input(format!(
                "token id {bad} out of range for vocab_size {}",
                config.vocab_size
            )));
        }
        if let Some(&bad) = self
            .targets
            .iter()
            .find(|&&t| t != IGNORE_INDEX && t >= config.vocab_size)
        {
            return Err(Error::Input(format!(
                "target id {bad} out of range for vocab_size {}",
                config.vocab_size
            )));
        }
        if self.targets.iter().all(|&t| t == IGNORE_INDEX) {
            return Err(Error::Input("batch has no target positions".into()));
        }
        Ok(())
    }
}

// Per-block tensor offsets, relative to `block_base(i)`.
const LN1_GAIN: usize = 0;
const LN1_BIAS: usize = 1;
const ATTN_Q: usize = 2;
const ATTN_K: usize = 3;
const ATTN_V: usize = 4;
const ATTN_O: usize = 5;
const LN2_GAIN: usize = 6;
const LN2_BIAS: usize = 7;
const MLP_UP: usize = 8;
const MLP_DOWN: usize = 9;
const TENSORS_PER_BLOCK: usize = 10;

const TOKEN_EMBED: usize = 0;

fn block_base(i: usize) -> usize {
    1 + i * TENSORS_PER_BLOCK
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: Vec<ParamTensor>,
}

/// Builds a freshly initialized model. Weight matrices are drawn from
/// `N(0, 0.02)`, LayerNorm gains are one and biases zero.
pub fn init_model(config: ModelConfig, seed: u64) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut weight = |rows: usize, cols: usize| -> Vec<f64> {
        (0..rows * cols).map(|_| normal.sample(&mut rng)).collect()
    };

    let d = config.d_model;
    let h = config.hidden_dim();
    let v = config.vocab_size;

    let mut tensors: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
    tensors.push(("embed.token".into(), vec![v, d], weight(v, d)));
    for i in 0..config.n_blocks {
        let p = format!("block.{i}");
        tensors.push((format!("{p}.ln1.gain"), vec![d], vec![1.0; d]));
        tensors.push((format!("{p}.ln1.bias"), vec![d], vec![0.0; d]));
        tensors.push((format!("{p}.attn.q"), vec![d, d], weight(d, d)));
        tensors.push((format!("{p}.attn.k"), vec![d, d], weight(d, d)));
        tensors.push((format!("{p}.attn.v"), vec![d, d], weight(d, d)));
        tensors.push((format!("{p}.attn.o"), vec![d, d], weight(d, d)));
        tensors.push((format!("{p}.ln2.gain"), vec![d], vec![1.0; d]));
        tensors.push((format!("{p}.ln2.bias"), vec![d], vec![0.0; d]));
        tensors.push((format!("{p}.mlp.up"), vec![d, h], weight(d, h)));
        tensors.push((format!("{p}.mlp.down"), vec![h, d], weight(h, d)));
    }
    tensors.push(("final_norm.gain".into(), vec![d], vec![1.0; d]));
    tensors.push(("final_norm.bias".into(), vec![d], vec![0.0; d]));
    tensors.push(("head.weight".into(), vec![d, v], weight(d, v)));

    let params = tensors
        .into_iter()
        .enumerate()
        .map(|(i, (name, shape, values))| ParamTensor::new(ParamId(i), name, shape, values))
        .collect();
    Ok(Model { config, params })
}

impl Model {
    /// Wraps an existing parameter list, checking that it has the layout
    /// `init_model` produces for `config`.
    pub fn from_params(config: ModelConfig, params: Vec<ParamTensor>) -> Result<Self> {
        config.validate()?;
        let reference = init_model(config, 0)?;
        if reference.params.len() != params.len() {
            return Err(Error::Input(format!(
                "expected {} parameter tensors, got {}",
                reference.params.len(),
                params.len()
            )));
        }
        for (want, got) in reference.params.iter().zip(&params) {
            if want.name != got.name || want.shape != got.shape || got.values.len() != want.numel()
            {
                return Err(Error::Input(format!(
                    "parameter `{}` does not match expected `{}` {:?}",
                    got.name, want.name, want.shape
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[ParamTensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamTensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(ParamTensor::numel).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Mean next-token cross-entropy over all non-ignored target positions.
    pub fn forward_loss(&self, batch: &Batch) -> Result<f64> {
        batch.validate(&self.config)?;
        Ok(self.forward(batch).loss)
    }

    /// Runs forward and backward, overwriting every parameter's gradient.
    /// Returns the loss of the forward pass.
    pub fn backward(&mut self, batch: &Batch) -> Result<f64> {
        batch.validate(&self.config)?;
        let cache = self.forward(batch);
        if !cache.loss.is_finite() {
            return Err(Error::NonFinite {
                tensor: "loss".into(),
            });
        }
        let grads = self.backprop(batch, &cache);
        for (p, g) in self.params.iter_mut().zip(grads) {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    tensor: p.name.clone(),
                });
            }
            p.grad = Some(g);
        }
        Ok(cache.loss)
    }

    fn w(&self, idx: usize) -> &[f64] {
        &self.params[idx].values
    }

    fn forward(&self, batch: &Batch) -> ForwardCache {
        let cfg = &self.config;
        let (bs, t_len, d) = (batch.batch_size, batch.seq_len, cfg.d_model);
        let n = bs * t_len;
        let hidden = cfg.hidden_dim();
        let vocab = cfg.vocab_size;

        let pe = sinusoidal_positions(t_len, d);
        let emb = self.w(TOKEN_EMBED);
        let mut x = vec![0.0; n * d];
        for (row, &tok) in batch.token_ids.iter().enumerate() {
            let t = row % t_len;
            let dst = &mut x[row * d..(row + 1) * d];
            let src = &emb[tok * d..(tok + 1) * d];
            let pos = &pe[t * d..(t + 1) * d];
            for j in 0..d {
                dst[j] = src[j] + pos[j];
            }
        }

        let mut blocks = Vec::with_capacity(cfg.n_blocks);
        for i in 0..cfg.n_blocks {
            let base = block_base(i);
            let ln1 = layer_norm(&x, self.w(base + LN1_GAIN), self.w(base + LN1_BIAS), d);
            let q = matmul(&ln1.out, self.w(base + ATTN_Q), n, d, d);
            let k = matmul(&ln1.out, self.w(base + ATTN_K), n, d, d);
            let v = matmul(&ln1.out, self.w(base + ATTN_V), n, d, d);
            let (probs, ctx) = causal_attention(&q, &k, &v, bs, t_len, cfg.n_heads, d);
            let attn_out = matmul(&ctx, self.w(base + ATTN_O), n, d, d);
            let mut x_mid = x.clone();
            add_assign(&mut x_mid, &attn_out);

            let ln2 = layer_norm(&x_mid, self.w(base + LN2_GAIN), self.w(base + LN2_BIAS), d);
            let pre_act = matmul(&ln2.out, self.w(base + MLP_UP), n, d, hidden);
            let act: Vec<f64> = pre_act.iter().map(|&u| gelu(u)).collect();
            let mlp_out = matmul(&act, self.w(base + MLP_DOWN), n, hidden, d);
            let mut x_out = x_mid.clone();
            add_assign(&mut x_out, &mlp_out);

            blocks.push(BlockCache {
                ln1,
                q,
                k,
                v,
                probs,
                ctx,
                ln2,
                pre_act,
                act,
            });
            x = x_out;
        }

        let head_base = block_base(cfg.n_blocks);
        let lnf = layer_norm(&x, self.w(head_base), self.w(head_base + 1), d);
        let logits = matmul(&lnf.out, self.w(head_base + 2), n, d, vocab);

        // Softmax cross-entropy; `probs` is reused as the logits gradient later.
        let mut probs = vec![0.0; n * vocab];
        let mut total = 0.0;
        let mut count = 0usize;
        for row in 0..n {
            let l = &logits[row * vocab..(row + 1) * vocab];
            let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            let p = &mut probs[row * vocab..(row + 1) * vocab];
            for j in 0..vocab {
                p[j] = (l[j] - max).exp();
                sum += p[j];
            }
            for pj in p.iter_mut() {
                *pj /= sum;
            }
            let target = batch.targets[row];
            if target != IGNORE_INDEX {
                total += max + sum.ln() - l[target];
                count += 1;
            }
        }

        ForwardCache {
            loss: total / count as f64,
            count,
            blocks,
            lnf,
            probs,
        }
    }

    fn backprop(&self, batch: &Batch, cache: &ForwardCache) -> Vec<Vec<f64>> {
        let cfg = &self.config;
        let (bs, t_len, d) = (batch.batch_size, batch.seq_len, cfg.d_model);
        let n = bs * t_len;
        let hidden = cfg.hidden_dim();
        let vocab = cfg.vocab_size;

        let mut grads: Vec<Vec<f64>> = self.params.iter().map(|p| vec![0.0; p.numel()]).collect();

        let scale = 1.0 / cache.count as f64;
        let mut dlogits = cache.probs.clone();
        for row in 0..n {
            let dl = &mut dlogits[row * vocab..(row + 1) * vocab];
            let target = batch.targets[row];
            if target == IGNORE_INDEX {
                dl.fill(0.0);
            } else {
                dl[target] -= 1.0;
                for g in dl.iter_mut() {
                    *g *= scale;
                }
            }
        }

        let head_base = block_base(cfg.n_blocks);
        matmul_tn_acc(&cache.lnf.out, &dlogits, n, d, vocab, &mut grads[head_base + 2]);
        let dy = matmul_nt(&dlogits, self.w(head_base + 2), n, vocab, d);
        let mut dx = {
            let (gain_grad, rest) = grads[head_base..].split_at_mut(1);
            layer_norm_backward(
                &cache.lnf,
                &dy,
                self.w(head_base),
                d,
                &mut gain_grad[0],
                &mut rest[0],
            )
        };

        for i in (0..cfg.n_blocks).rev() {
            let base = block_base(i);
            let bc = &cache.blocks[i];

            // MLP branch: dx is the gradient w.r.t. the block output.
            matmul_tn_acc(&bc.act, &dx, n, hidden, d, &mut grads[base + MLP_DOWN]);
            let mut dpre = matmul_nt(&dx, self.w(base + MLP_DOWN), n, d, hidden);
            for (g, &u) in dpre.iter_mut().zip(&bc.pre_act) {
                *g *= gelu_grad(u);
            }
            matmul_tn_acc(&bc.ln2.out, &dpre, n, d, hidden, &mut grads[base + MLP_UP]);
            let dln2 = matmul_nt(&dpre, self.w(base + MLP_UP), n, hidden, d);
            let dmid = {
                let (gain_grad, rest) = grads[base + LN2_GAIN..].split_at_mut(1);
                layer_norm_backward(
                    &bc.ln2,
                    &dln2,
                    self.w(base + LN2_GAIN),
                    d,
                    &mut gain_grad[0],
                    &mut rest[0],
                )
            };
            add_assign(&mut dx, &dmid);

            // Attention branch.
            matmul_tn_acc(&bc.ctx, &dx, n, d, d, &mut grads[base + ATTN_O]);
            let dctx = matmul_nt(&dx, self.w(base + ATTN_O), n, d, d);
            let (dq, dk, dv) = causal_attention_backward(
                &bc.q,
                &bc.k,
                &bc.v,
                &bc.probs,
                &dctx,
                bs,
                t_len,
                cfg.n_heads,
                d,
            );
            matmul_tn_acc(&bc.ln1.out, &dq, n, d, d, &mut grads[base + ATTN_Q]);
            matmul_tn_acc(&bc.ln1.out, &dk, n, d, d, &mut grads[base + ATTN_K]);
            matmul_tn_acc(&bc.ln1.out, &dv, n, d, d, &mut grads[base + ATTN_V]);
            let mut dln1 = matmul_nt(&dq, self.w(base + ATTN_Q), n, d, d);
            add_assign(&mut dln1, &matmul_nt(&dk, self.w(base + ATTN_K), n, d, d));
            add_assign(&mut dln1, &matmul_nt(&dv, self.w(base + ATTN_V), n, d, d));
            let din = {
                let (gain_grad, rest) = grads[base + LN1_GAIN..].split_at_mut(1);
                layer_norm_backward(
                    &bc.ln1,
                    &dln1,
                    self.w(base + LN1_GAIN),
                    d,
                    &mut gain_grad[0],
                    &mut rest[0],
                )
            };
            add_assign(&mut dx, &din);
        }

        let demb = &mut grads[TOKEN_EMBED];
        for (row, &tok) in batch.token_ids.iter().enumerate() {
            let src = &dx[row * d..(row + 1) * d];
            let dst = &mut demb[tok * d..(tok + 1) * d];
            for j in 0..d {
                dst[j] += src[j];
            }
        }
        grads
    }
}

struct LayerNormCache {
    normed: Vec<f64>,
    rstd: Vec<f64>,
    out: Vec<f64>,
}

struct BlockCache {
    ln1: LayerNormCache,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    ctx: Vec<f64>,
    ln2: LayerNormCache,
    pre_act: Vec<f64>,
    act: Vec<f64>,
}

struct ForwardCache {
    loss: f64,
    count: usize,
    blocks: Vec<BlockCache>,
    lnf: LayerNormCache,
    probs: Vec<f64>,
}

/// Amplitude of the position table. Matches the embedding init std so token
/// identity is not drowned out in the residual stream.
pub const POSITION_SCALE: f64 = 0.02;

/// Fixed sin/cos position table, `[seq_len, d]`, scaled by [`POSITION_SCALE`].
pub fn sinusoidal_positions(seq_len: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; seq_len * d];
    for t in 0..seq_len {
        for j in 0..d {
            let pair = (j / 2) as f64;
            let freq = 10000f64.powf(-2.0 * pair / d as f64);
            let angle = t as f64 * freq;
            pe[t * d + j] = POSITION_SCALE * if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let th = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

/// `a[n,k] @ b[k,m]`
fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `acc[k,m] += a[n,k]^T @ dy[n,m]`
fn matmul_tn_acc(a: &[f64], dy: &[f64], n: usize, k: usize, m: usize, acc: &mut [f64]) {
    for i in 0..n {
        let dyrow = &dy[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            let arow = &mut acc[p * m..(p + 1) * m];
            for (o, &g) in arow.iter_mut().zip(dyrow) {
                *o += av * g;
            }
        }
    }
}

/// `dy[n,m] @ w[k,m]^T`
fn matmul_nt(dy: &[f64], w: &[f64], n: usize, m: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        let dyrow = &dy[i * m..(i + 1) * m];
        for p in 0..k {
            let wrow = &w[p * m..(p + 1) * m];
            out[i * k + p] = dyrow.iter().zip(wrow).map(|(a, b)| a * b).sum();
        }
    }
    out
}

fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], d: usize) -> LayerNormCache {
    let rows = x.len() / d;
    let mut normed = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let nv = (xr[j] - mean) * rs;
            normed[r * d + j] = nv;
            out[r * d + j] = nv * gain[j] + bias[j];
        }
    }
    LayerNormCache { normed, rstd, out }
}

fn layer_norm_backward(
    cache: &LayerNormCache,
    dout: &[f64],
    gain: &[f64],
    d: usize,
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let rows = dout.len() / d;
    let mut dx = vec![0.0; dout.len()];
    let mut dnorm = vec![0.0; d];
    for r in 0..rows {
        let nr = &cache.normed[r * d..(r + 1) * d];
        let dr = &dout[r * d..(r + 1) * d];
        let mut mean_dn = 0.0;
        let mut mean_dn_n = 0.0;
        for j in 0..d {
            dgain[j] += dr[j] * nr[j];
            dbias[j] += dr[j];
            dnorm[j] = dr[j] * gain[j];
            mean_dn += dnorm[j];
            mean_dn_n += dnorm[j] * nr[j];
        }
        mean_dn /= d as f64;
        mean_dn_n /= d as f64;
        let rs = cache.rstd[r];
        for j in 0..d {
            dx[r * d + j] = rs * (dnorm[j] - mean_dn - nr[j] * mean_dn_n);
        }
    }
    dx
}

/// Returns `(probs[b,h,t,s], ctx[n,d])`; `probs` is zero above the diagonal.
fn causal_attention(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    bs: usize,
    t_len: usize,
    n_heads: usize,
    d: usize,
) -> (Vec<f64>, Vec<f64>) {
    let hd = d / n_heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut probs = vec![0.0; bs * n_heads * t_len * t_len];
    let mut ctx = vec![0.0; bs * t_len * d];
    for b in 0..bs {
        for h in 0..n_heads {
            let off = h * hd;
            for t in 0..t_len {
                let qrow = &q[(b * t_len + t) * d + off..][..hd];
                let prow = &mut probs[((b * n_heads + h) * t_len + t) * t_len..][..t_len];
                let mut max = f64::NEG_INFINITY;
                for s in 0..=t {
                    let krow = &k[(b * t_len + s) * d + off..][..hd];
                    let score = qrow.iter().zip(krow).map(|(a, c)| a * c).sum::<f64>() * scale;
                    prow[s] = score;
                    max = max.max(score);
                }
                let mut sum = 0.0;
                for p in prow[..=t].iter_mut() {
                    *p = (*p - max).exp();
                    sum += *p;
                }
                for p in prow[..=t].iter_mut() {
                    *p /= sum;
                }
                let crow = &mut ctx[(b * t_len + t) * d + off..][..hd];
                for s in 0..=t {
                    let vrow = &v[(b * t_len + s) * d + off..][..hd];
                    let p = prow[s];
                    for (c, &vv) in crow.iter_mut().zip(vrow) {
                        *c += p * vv;
                    }
                }
            }
        }
    }
    (probs, ctx)
}

#[allow(clippy::too_many_arguments)]
fn causal_attention_backward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    probs: &[f64],
    dctx: &[f64],
    bs: usize,
    t_len: usize,
    n_heads: usize,
    d: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hd = d / n_heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut dq = vec![0.0; q.len()];
    let mut dk = vec![0.0; k.len()];
    let mut dv = vec![0.0; v.len()];
    let mut dp = vec![0.0; t_len];
    for b in 0..bs {
        for h in 0..n_heads {
            let off = h * hd;
            for t in 0..t_len {
                let prow = &probs[((b * n_heads + h) * t_len + t) * t_len..][..t_len];
                let dcrow = &dctx[(b * t_len + t) * d + off..][..hd];
                let mut dot = 0.0;
                for s in 0..=t {
                    let vrow = &v[(b * t_len + s) * d + off..][..hd];
                    dp[s] = dcrow.iter().zip(vrow).map(|(a, c)| a * c).sum();
                    dot += prow[s] * dp[s];
                    let dvrow = &mut dv[(b * t_len + s) * d + off..][..hd];
                    for (g, &dc) in dvrow.iter_mut().zip(dcrow) {
                        *g += prow[s] * dc;
                    }
                }
                let qi = (b * t_len + t) * d + off;
                for s in 0..=t {
                    let ds = prow[s] * (dp[s] - dot) * scale;
                    let ki = (b * t_len + s) * d + off;
                    for j in 0..hd {
                        dq[qi + j] += ds * k[ki + j];
                        dk[ki + j] += ds * q[qi + j];
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}
