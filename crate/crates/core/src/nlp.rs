//! A toy token-mixing encoder for desk-scale text classification.
//!
//! Each block replaces self-attention with a 2-D blended transform over the
//! sequence and hidden axes, followed by the usual residual + layer-norm +
//! feed-forward structure. Initialized at blend weights (1, 0, 1) the mixing
//! sublayer is exactly the real part of a 2-D DFT. Every gradient here is
//! hand-derived; `gradcheck` and the tests pin them against central finite
//! differences.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GtError, Result};
use crate::gt::{gt_backward_2d, gt_forward_2d, Cache2d, GtParams};
use crate::io::{Checkpoint, Tensor};
use crate::train::{cross_entropy, top1_accuracy, Optimizer, OptimizerState, ParamGroup};

pub const PAD_TOKEN: usize = 0;
pub const CLS_TOKEN: usize = 1;
/// Pad + classification marker + all byte values.
pub const BYTE_VOCAB: usize = 258;

const LAYER_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub seq_len: usize,
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub num_layers: usize,
    pub num_classes: usize,
    /// Share one blend parameterization across layers instead of learning a
    /// triple per layer.
    pub shared_gt: bool,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(GtError::InvalidConfig("need at least one layer".into()));
        }
        if self.vocab_size == 0 || self.ffn_dim == 0 || self.num_classes < 2 {
            return Err(GtError::InvalidConfig(
                "vocab, ffn width, and class count must be positive (>= 2 classes)".into(),
            ));
        }
        // The NLP transform list includes the DLT, which needs N >= 2.
        if self.seq_len < 2 || self.hidden_dim < 2 {
            return Err(GtError::InvalidConfig(
                "sequence and hidden sizes must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    /// vocab_size x hidden_dim
    pub token: Array2<f64>,
    /// seq_len x hidden_dim
    pub pos: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub gt: GtParams,
    pub ln1_gamma: Array1<f64>,
    pub ln1_beta: Array1<f64>,
    /// hidden_dim x ffn_dim
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// ffn_dim x hidden_dim
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub ln2_gamma: Array1<f64>,
    pub ln2_beta: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    /// hidden_dim x num_classes
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    pub embedding: EmbeddingTable,
    pub layers: Vec<LayerParams>,
    pub head: ClassifierHead,
}

impl EncoderModel {
    /// Random init: N(0, 0.02) matrices, zero biases, unit layer-norm gains,
    /// blend at the real-part DFT configuration (1, 0, 1).
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let randn2 = |r: usize, c: usize, rng: &mut ChaCha8Rng| {
            Array2::from_shape_fn((r, c), |_| 0.02 * normal(rng))
        };
        let embedding = EmbeddingTable {
            token: randn2(config.vocab_size, config.hidden_dim, &mut rng),
            pos: randn2(config.seq_len, config.hidden_dim, &mut rng),
        };
        let layers = (0..config.num_layers)
            .map(|_| LayerParams {
                gt: GtParams::nlp(),
                ln1_gamma: Array1::ones(config.hidden_dim),
                ln1_beta: Array1::zeros(config.hidden_dim),
                w1: randn2(config.hidden_dim, config.ffn_dim, &mut rng),
                b1: Array1::zeros(config.ffn_dim),
                w2: randn2(config.ffn_dim, config.hidden_dim, &mut rng),
                b2: Array1::zeros(config.hidden_dim),
                ln2_gamma: Array1::ones(config.hidden_dim),
                ln2_beta: Array1::zeros(config.hidden_dim),
            })
            .collect();
        let head = ClassifierHead {
            w: randn2(config.hidden_dim, config.num_classes, &mut rng),
            b: Array1::zeros(config.num_classes),
        };
        Ok(EncoderModel {
            config,
            embedding,
            layers,
            head,
        })
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Token + positional embedding lookup: row t is
/// `token_emb[tokens[t]] + pos_emb[t]`.
pub fn embed(tokens: &[usize], table: &EmbeddingTable) -> Result<Array2<f64>> {
    let (vocab, hidden) = table.token.dim();
    let (seq_len, pos_hidden) = table.pos.dim();
    if hidden != pos_hidden {
        return Err(GtError::ShapeMismatch(
            "token and positional embeddings disagree on hidden size".into(),
        ));
    }
    if tokens.len() != seq_len {
        return Err(GtError::DimensionMismatch {
            expected: seq_len,
            got: tokens.len(),
        });
    }
    let mut out = Array2::zeros((seq_len, hidden));
    for (t, &id) in tokens.iter().enumerate() {
        if id >= vocab {
            return Err(GtError::TokenOutOfRange { id, vocab });
        }
        for h in 0..hidden {
            out[[t, h]] = table.token[[id, h]] + table.pos[[t, h]];
        }
    }
    Ok(out)
}

/// The token-mixing sublayer: a 2-D blended transform across the sequence
/// and hidden axes with shared weights, mixed back to a real matrix.
pub fn gt_mixing_sublayer(x: &Array2<f64>, gt: &GtParams) -> Result<Array2<f64>> {
    Ok(gt_forward_2d(gt, x)?.0)
}

fn gelu(x: f64) -> f64 {
    // tanh approximation
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_prime(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * x * x)
}

struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Vec<f64>,
}

fn layer_norm(
    x: &Array2<f64>,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
) -> (Array2<f64>, LayerNormCache) {
    let (rows, cols) = x.dim();
    let mut out = Array2::zeros((rows, cols));
    let mut xhat = Array2::zeros((rows, cols));
    let mut inv_std = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.sum() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(inv);
        for c in 0..cols {
            let h = (x[[r, c]] - mean) * inv;
            xhat[[r, c]] = h;
            out[[r, c]] = gamma[c] * h + beta[c];
        }
    }
    (out, LayerNormCache { xhat, inv_std })
}

fn layer_norm_backward(
    upstream: &Array2<f64>,
    gamma: &Array1<f64>,
    cache: &LayerNormCache,
    d_gamma: &mut Array1<f64>,
    d_beta: &mut Array1<f64>,
) -> Array2<f64> {
    let (rows, cols) = upstream.dim();
    let mut dx = Array2::zeros((rows, cols));
    for r in 0..rows {
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for c in 0..cols {
            let dy = upstream[[r, c]];
            let xhat = cache.xhat[[r, c]];
            d_gamma[c] += dy * xhat;
            d_beta[c] += dy;
            let dxhat = dy * gamma[c];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat;
        }
        mean_dxhat /= cols as f64;
        mean_dxhat_xhat /= cols as f64;
        for c in 0..cols {
            let dxhat = upstream[[r, c]] * gamma[c];
            dx[[r, c]] = cache.inv_std[r]
                * (dxhat - mean_dxhat - cache.xhat[[r, c]] * mean_dxhat_xhat);
        }
    }
    dx
}

struct BlockCache {
    x_in: Array2<f64>,
    mix: Cache2d,
    ln1: LayerNormCache,
    x1: Array2<f64>,
    h_pre: Array2<f64>,
    h_act: Array2<f64>,
    ln2: LayerNormCache,
}

fn block_forward(x: &Array2<f64>, layer: &LayerParams) -> Result<(Array2<f64>, BlockCache)> {
    let (mix_out, mix_cache) = gt_forward_2d(&layer.gt, x)?;
    let res1 = x + &mix_out;
    let (x1, ln1) = layer_norm(&res1, &layer.ln1_gamma, &layer.ln1_beta);
    let h_pre = x1.dot(&layer.w1) + &layer.b1;
    let h_act = h_pre.mapv(gelu);
    let ffn_out = h_act.dot(&layer.w2) + &layer.b2;
    let res2 = &x1 + &ffn_out;
    let (x2, ln2) = layer_norm(&res2, &layer.ln2_gamma, &layer.ln2_beta);
    Ok((
        x2,
        BlockCache {
            x_in: x.clone(),
            mix: mix_cache,
            ln1,
            x1,
            h_pre,
            h_act,
            ln2,
        },
    ))
}

/// `layer_norm(x + mixing(x))` then `layer_norm(x1 + ffn(x1))`.
pub fn encoder_block(x: &Array2<f64>, layer: &LayerParams) -> Result<Array2<f64>> {
    Ok(block_forward(x, layer)?.0)
}

struct ForwardCache {
    tokens: Vec<usize>,
    blocks: Vec<BlockCache>,
    pooled: Array1<f64>,
}

fn forward_cached(model: &EncoderModel, tokens: &[usize]) -> Result<(Vec<f64>, ForwardCache)> {
    let mut x = embed(tokens, &model.embedding)?;
    let mut blocks = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let (next, cache) = block_forward(&x, layer)?;
        blocks.push(cache);
        x = next;
    }
    // Pool the first position, BERT-style.
    let pooled = x.row(0).to_owned();
    let logits: Vec<f64> = (0..model.config.num_classes)
        .map(|c| {
            model
                .head
                .w
                .column(c)
                .iter()
                .zip(pooled.iter())
                .map(|(w, p)| w * p)
                .sum::<f64>()
                + model.head.b[c]
        })
        .collect();
    Ok((
        logits,
        ForwardCache {
            tokens: tokens.to_vec(),
            blocks,
            pooled,
        },
    ))
}

/// Class logits for one token sequence.
pub fn classify(tokens: &[usize], model: &EncoderModel) -> Result<Vec<f64>> {
    Ok(forward_cached(model, tokens)?.0)
}

/// Gradient holder shaped exactly like the model parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub embedding: EmbeddingTable,
    pub layers: Vec<LayerParams>,
    pub head: ClassifierHead,
}

impl Gradients {
    pub fn zeros_like(model: &EncoderModel) -> Self {
        let zero_gt = |gt: &GtParams| GtParams {
            transforms: gt.transforms.clone(),
            weights: vec![0.0; gt.weights.len()],
            mixer: 0.0,
        };
        Gradients {
            embedding: EmbeddingTable {
                token: Array2::zeros(model.embedding.token.dim()),
                pos: Array2::zeros(model.embedding.pos.dim()),
            },
            layers: model
                .layers
                .iter()
                .map(|l| LayerParams {
                    gt: zero_gt(&l.gt),
                    ln1_gamma: Array1::zeros(l.ln1_gamma.len()),
                    ln1_beta: Array1::zeros(l.ln1_beta.len()),
                    w1: Array2::zeros(l.w1.dim()),
                    b1: Array1::zeros(l.b1.len()),
                    w2: Array2::zeros(l.w2.dim()),
                    b2: Array1::zeros(l.b2.len()),
                    ln2_gamma: Array1::zeros(l.ln2_gamma.len()),
                    ln2_beta: Array1::zeros(l.ln2_beta.len()),
                })
                .collect(),
            head: ClassifierHead {
                w: Array2::zeros(model.head.w.dim()),
                b: Array1::zeros(model.head.b.len()),
            },
        }
    }
}

/// Mean loss, top-1 accuracy, and accumulated gradients over a batch.
/// Samples are reduced in ascending index order.
pub fn batch_loss_and_grads(
    model: &EncoderModel,
    inputs: &[Vec<usize>],
    labels: &[usize],
) -> Result<(f64, f64, Gradients)> {
    if inputs.is_empty() {
        return Err(GtError::EmptyBatch);
    }
    if inputs.len() != labels.len() {
        return Err(GtError::ShapeMismatch(format!(
            "{} inputs with {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let classes = model.config.num_classes;
    let mut logits = Array2::zeros((inputs.len(), classes));
    let mut caches = Vec::with_capacity(inputs.len());
    for (i, tokens) in inputs.iter().enumerate() {
        let (l, cache) = forward_cached(model, tokens)?;
        for c in 0..classes {
            logits[[i, c]] = l[c];
        }
        caches.push(cache);
    }
    let (loss, dlogits) = cross_entropy(&logits, labels)?;
    let accuracy = top1_accuracy(&logits, labels)?;
    let mut grads = Gradients::zeros_like(model);
    for (i, cache) in caches.iter().enumerate() {
        let row: Vec<f64> = (0..classes).map(|c| dlogits[[i, c]]).collect();
        backward_into(model, cache, &row, &mut grads)?;
    }
    Ok((loss, accuracy, grads))
}

fn backward_into(
    model: &EncoderModel,
    cache: &ForwardCache,
    dlogits: &[f64],
    grads: &mut Gradients,
) -> Result<()> {
    let hidden = model.config.hidden_dim;
    let seq = model.config.seq_len;

    let mut d_pooled = vec![0.0; hidden];
    for (c, &dl) in dlogits.iter().enumerate() {
        for h in 0..hidden {
            grads.head.w[[h, c]] += cache.pooled[h] * dl;
            d_pooled[h] += model.head.w[[h, c]] * dl;
        }
        grads.head.b[c] += dl;
    }

    let mut dx = Array2::zeros((seq, hidden));
    for h in 0..hidden {
        dx[[0, h]] = d_pooled[h];
    }

    for idx in (0..model.layers.len()).rev() {
        let layer = &model.layers[idx];
        let block = &cache.blocks[idx];
        let glayer = &mut grads.layers[idx];

        // LN2 -> residual split.
        let d_res2 = layer_norm_backward(
            &dx,
            &layer.ln2_gamma,
            &block.ln2,
            &mut glayer.ln2_gamma,
            &mut glayer.ln2_beta,
        );
        // FFN: x1 -> w1 -> gelu -> w2.
        let d_ffn = &d_res2;
        for r in 0..block.h_act.nrows() {
            for c in 0..hidden {
                glayer.b2[c] += d_ffn[[r, c]];
            }
        }
        glayer.w2 += &block.h_act.t().dot(d_ffn);
        let d_h_act = d_ffn.dot(&layer.w2.t());
        let d_h_pre = {
            let mut d = d_h_act;
            d.zip_mut_with(&block.h_pre, |g, &pre| *g *= gelu_prime(pre));
            d
        };
        for r in 0..d_h_pre.nrows() {
            for c in 0..d_h_pre.ncols() {
                glayer.b1[c] += d_h_pre[[r, c]];
            }
        }
        glayer.w1 += &block.x1.t().dot(&d_h_pre);
        let mut d_x1 = d_h_pre.dot(&layer.w1.t());
        d_x1 += &d_res2; // residual branch

        // LN1 -> residual split.
        let d_res1 = layer_norm_backward(
            &d_x1,
            &layer.ln1_gamma,
            &block.ln1,
            &mut glayer.ln1_gamma,
            &mut glayer.ln1_beta,
        );
        // Mixing branch.
        let mix_grads = gt_backward_2d(&layer.gt, &block.x_in, &d_res1, &block.mix)?;
        for (g, d) in glayer.gt.weights.iter_mut().zip(&mix_grads.d_weights) {
            *g += d;
        }
        glayer.gt.mixer += mix_grads.d_mixer;
        dx = &d_res1 + &mix_grads.d_input;
    }

    // Embeddings, positions ascending.
    for (t, &id) in cache.tokens.iter().enumerate() {
        for h in 0..hidden {
            grads.embedding.token[[id, h]] += dx[[t, h]];
            grads.embedding.pos[[t, h]] += dx[[t, h]];
        }
    }
    Ok(())
}

/// Flat views over every trainable tensor, in a fixed order shared by the
/// model and its gradients.
fn tensor_slices_mut<'a>(
    embedding: &'a mut EmbeddingTable,
    layers: &'a mut [LayerParams],
    head: &'a mut ClassifierHead,
) -> Vec<(&'a mut [f64], bool, bool)> {
    // (slice, decay, is_gt)
    let mut out: Vec<(&mut [f64], bool, bool)> = vec![
        (embedding.token.as_slice_mut().unwrap(), true, false),
        (embedding.pos.as_slice_mut().unwrap(), true, false),
    ];
    for layer in layers.iter_mut() {
        out.push((layer.gt.weights.as_mut_slice(), false, true));
        out.push((std::slice::from_mut(&mut layer.gt.mixer), false, true));
        out.push((layer.ln1_gamma.as_slice_mut().unwrap(), false, false));
        out.push((layer.ln1_beta.as_slice_mut().unwrap(), false, false));
        out.push((layer.w1.as_slice_mut().unwrap(), true, false));
        out.push((layer.b1.as_slice_mut().unwrap(), false, false));
        out.push((layer.w2.as_slice_mut().unwrap(), true, false));
        out.push((layer.b2.as_slice_mut().unwrap(), false, false));
        out.push((layer.ln2_gamma.as_slice_mut().unwrap(), false, false));
        out.push((layer.ln2_beta.as_slice_mut().unwrap(), false, false));
    }
    out.push((head.w.as_slice_mut().unwrap(), true, false));
    out.push((head.b.as_slice_mut().unwrap(), false, false));
    out
}

/// Read-only twin of [`tensor_slices_mut`]; the two must stay in the same
/// order.
fn tensor_slices<'a>(
    embedding: &'a EmbeddingTable,
    layers: &'a [LayerParams],
    head: &'a ClassifierHead,
) -> Vec<&'a [f64]> {
    let mut out: Vec<&[f64]> = vec![
        embedding.token.as_slice().unwrap(),
        embedding.pos.as_slice().unwrap(),
    ];
    for layer in layers {
        out.push(layer.gt.weights.as_slice());
        out.push(std::slice::from_ref(&layer.gt.mixer));
        out.push(layer.ln1_gamma.as_slice().unwrap());
        out.push(layer.ln1_beta.as_slice().unwrap());
        out.push(layer.w1.as_slice().unwrap());
        out.push(layer.b1.as_slice().unwrap());
        out.push(layer.w2.as_slice().unwrap());
        out.push(layer.b2.as_slice().unwrap());
        out.push(layer.ln2_gamma.as_slice().unwrap());
        out.push(layer.ln2_beta.as_slice().unwrap());
    }
    out.push(head.w.as_slice().unwrap());
    out.push(head.b.as_slice().unwrap());
    out
}

impl EncoderModel {
    pub fn flatten_params(&self) -> Vec<f64> {
        tensor_slices(&self.embedding, &self.layers, &self.head)
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        let mut offset = 0;
        for (slice, _, _) in
            tensor_slices_mut(&mut self.embedding, &mut self.layers, &mut self.head)
        {
            let next = offset + slice.len();
            if next > flat.len() {
                return Err(GtError::ShapeMismatch("flat parameter vector too short".into()));
            }
            slice.copy_from_slice(&flat[offset..next]);
            offset = next;
        }
        if offset != flat.len() {
            return Err(GtError::ShapeMismatch("flat parameter vector too long".into()));
        }
        Ok(())
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        tensor_slices(&self.embedding, &self.layers, &self.head)
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

/// One optimizer step over every model tensor. Blend weights and mixers use
/// `gt_lr_multiplier` and never receive weight decay. With `shared_gt`, the
/// per-layer blend gradients are summed and every layer receives the same
/// update.
pub fn apply_gradients(
    model: &mut EncoderModel,
    grads: &Gradients,
    optimizer: &Optimizer,
    state: &mut OptimizerState,
    lr: f64,
    gt_lr_multiplier: f64,
) -> Result<()> {
    let mut grads = grads.clone();
    if model.config.shared_gt && model.layers.len() > 1 {
        let mut dw = vec![0.0; grads.layers[0].gt.weights.len()];
        let mut dm = 0.0;
        for layer in &grads.layers {
            for (acc, g) in dw.iter_mut().zip(&layer.gt.weights) {
                *acc += g;
            }
            dm += layer.gt.mixer;
        }
        for layer in &mut grads.layers {
            layer.gt.weights.copy_from_slice(&dw);
            layer.gt.mixer = dm;
        }
    }
    {
        let grad_slices = tensor_slices(&grads.embedding, &grads.layers, &grads.head);
        let model_slices =
            tensor_slices_mut(&mut model.embedding, &mut model.layers, &mut model.head);
        if model_slices.len() != grad_slices.len() {
            return Err(GtError::ShapeMismatch(
                "gradient tensor count differs from model".into(),
            ));
        }
        let mut groups: Vec<ParamGroup> = model_slices
            .into_iter()
            .zip(grad_slices)
            .map(|((values, decay, is_gt), grad)| {
                let mut group = ParamGroup::new(values, grad);
                if !decay {
                    group = group.no_decay();
                }
                if is_gt {
                    group = group.with_lr_scale(gt_lr_multiplier);
                }
                group
            })
            .collect();
        optimizer.step(&mut groups, state, lr)?;
    }
    if model.config.shared_gt && model.layers.len() > 1 {
        let reference = model.layers[0].gt.clone();
        for layer in &mut model.layers[1..] {
            layer.gt = reference.clone();
        }
    }
    Ok(())
}

/// Map text to `[CLS], bytes...` padded or truncated to `seq_len`.
pub fn tokenize_bytes(text: &str, seq_len: usize) -> Vec<usize> {
    let mut tokens = Vec::with_capacity(seq_len);
    if seq_len == 0 {
        return tokens;
    }
    tokens.push(CLS_TOKEN);
    for &b in text.as_bytes() {
        if tokens.len() == seq_len {
            break;
        }
        tokens.push(b as usize + 2);
    }
    while tokens.len() < seq_len {
        tokens.push(PAD_TOKEN);
    }
    tokens
}

/// Parse a `label<TAB>text` dataset, one example per line.
pub fn parse_text_dataset(content: &str) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = line.split_once('\t').ok_or_else(|| {
            GtError::Format(format!("line {}: expected label<TAB>text", lineno + 1))
        })?;
        let label: usize = label.trim().parse().map_err(|_| {
            GtError::Format(format!("line {}: bad label {label:?}", lineno + 1))
        })?;
        out.push((label, text.to_string()));
    }
    if out.is_empty() {
        return Err(GtError::EmptyDataset);
    }
    Ok(out)
}

pub fn load_text_dataset(path: &Path) -> Result<Vec<(usize, String)>> {
    let content = std::fs::read_to_string(path)?;
    parse_text_dataset(&content)
}

/// Serialize the model into the named-tensor container.
pub fn save_model(model: &EncoderModel) -> Checkpoint {
    let mut ck = Checkpoint::default();
    let real = |a: &Array2<f64>| {
        Tensor::real(vec![a.nrows(), a.ncols()], a.iter().copied().collect()).unwrap()
    };
    let real1 = |a: &Array1<f64>| Tensor::real(vec![a.len()], a.to_vec()).unwrap();
    let c = &model.config;
    ck.tensors.push((
        "config".into(),
        Tensor::real(
            vec![7],
            vec![
                c.vocab_size as f64,
                c.seq_len as f64,
                c.hidden_dim as f64,
                c.ffn_dim as f64,
                c.num_layers as f64,
                c.num_classes as f64,
                if c.shared_gt { 1.0 } else { 0.0 },
            ],
        )
        .unwrap(),
    ));
    ck.tensors
        .push(("embedding.token".into(), real(&model.embedding.token)));
    ck.tensors
        .push(("embedding.pos".into(), real(&model.embedding.pos)));
    for (i, layer) in model.layers.iter().enumerate() {
        ck.params.push((format!("layer{i}.gt"), layer.gt.clone()));
        ck.tensors
            .push((format!("layer{i}.ln1.gamma"), real1(&layer.ln1_gamma)));
        ck.tensors
            .push((format!("layer{i}.ln1.beta"), real1(&layer.ln1_beta)));
        ck.tensors.push((format!("layer{i}.w1"), real(&layer.w1)));
        ck.tensors.push((format!("layer{i}.b1"), real1(&layer.b1)));
        ck.tensors.push((format!("layer{i}.w2"), real(&layer.w2)));
        ck.tensors.push((format!("layer{i}.b2"), real1(&layer.b2)));
        ck.tensors
            .push((format!("layer{i}.ln2.gamma"), real1(&layer.ln2_gamma)));
        ck.tensors
            .push((format!("layer{i}.ln2.beta"), real1(&layer.ln2_beta)));
    }
    ck.tensors.push(("head.w".into(), real(&model.head.w)));
    ck.tensors.push(("head.b".into(), real1(&model.head.b)));
    ck
}

pub fn load_model(ck: &Checkpoint) -> Result<EncoderModel> {
    let config_values = ck.tensor("config")?.as_real()?;
    if config_values.len() != 7 {
        return Err(GtError::Format("config tensor must hold 7 values".into()));
    }
    let config = EncoderConfig {
        vocab_size: config_values[0] as usize,
        seq_len: config_values[1] as usize,
        hidden_dim: config_values[2] as usize,
        ffn_dim: config_values[3] as usize,
        num_layers: config_values[4] as usize,
        num_classes: config_values[5] as usize,
        shared_gt: config_values[6] != 0.0,
    };
    config.validate()?;
    let mat = |name: &str, rows: usize, cols: usize| -> Result<Array2<f64>> {
        let t = ck.tensor(name)?;
        if t.dims != vec![rows, cols] {
            return Err(GtError::ShapeMismatch(format!(
                "tensor {name} has dims {:?}, expected [{rows}, {cols}]",
                t.dims
            )));
        }
        Ok(Array2::from_shape_vec((rows, cols), t.as_real()?.to_vec()).unwrap())
    };
    let vec1 = |name: &str, len: usize| -> Result<Array1<f64>> {
        let t = ck.tensor(name)?;
        if t.dims != vec![len] {
            return Err(GtError::ShapeMismatch(format!(
                "tensor {name} has dims {:?}, expected [{len}]",
                t.dims
            )));
        }
        Ok(Array1::from_vec(t.as_real()?.to_vec()))
    };
    let embedding = EmbeddingTable {
        token: mat("embedding.token", config.vocab_size, config.hidden_dim)?,
        pos: mat("embedding.pos", config.seq_len, config.hidden_dim)?,
    };
    let mut layers = Vec::with_capacity(config.num_layers);
    for i in 0..config.num_layers {
        layers.push(LayerParams {
            gt: ck.gt_params(&format!("layer{i}.gt"))?.clone(),
            ln1_gamma: vec1(&format!("layer{i}.ln1.gamma"), config.hidden_dim)?,
            ln1_beta: vec1(&format!("layer{i}.ln1.beta"), config.hidden_dim)?,
            w1: mat(&format!("layer{i}.w1"), config.hidden_dim, config.ffn_dim)?,
            b1: vec1(&format!("layer{i}.b1"), config.ffn_dim)?,
            w2: mat(&format!("layer{i}.w2"), config.ffn_dim, config.hidden_dim)?,
            b2: vec1(&format!("layer{i}.b2"), config.hidden_dim)?,
            ln2_gamma: vec1(&format!("layer{i}.ln2.gamma"), config.hidden_dim)?,
            ln2_beta: vec1(&format!("layer{i}.ln2.beta"), config.hidden_dim)?,
        });
    }
    let head = ClassifierHead {
        w: mat("head.w", config.hidden_dim, config.num_classes)?,
        b: vec1("head.b", config.num_classes)?,
    };
    Ok(EncoderModel {
        config,
        embedding,
        layers,
        head,
    })
}
