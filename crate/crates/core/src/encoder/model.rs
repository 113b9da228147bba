//! Forward pass, loss and hand-derived backward pass.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::config::{EncoderConfig, HeadKind};
use super::encode::EncodedPair;
use super::params::{LayerNormParams, ModelParameters};
use super::vocab::PAD;

const NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifierOutput {
    /// `(no-match, match)` scores before softmax.
    pub logits: [f64; 2],
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-ln softmax(logits)[label]`, exact for large margins.
fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let (arg, max) = logits
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, l)| if l > acc.1 { (i, l) } else { acc });
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != arg)
        .map(|(_, l)| (l - max).exp())
        .sum();
    (max - logits[label]) + rest.ln_1p()
}

/// Mean softmax cross-entropy; `labels[i]` is true for "match".
pub fn loss(outputs: &[ClassifierOutput], labels: &[bool]) -> f64 {
    assert_eq!(outputs.len(), labels.len(), "one label per output");
    if outputs.is_empty() {
        return 0.0;
    }
    let total: f64 = outputs
        .iter()
        .zip(labels)
        .map(|(o, &y)| cross_entropy(&o.logits, usize::from(y)))
        .sum();
    total / outputs.len() as f64
}

struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, p: &LayerNormParams) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *is = 1.0 / (var + NORM_EPS).sqrt();
        let s = *is;
        row.mapv_inplace(|v| v * s);
    }
    let y = &xhat * &p.gamma + &p.beta;
    (y, NormCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    p: &LayerNormParams,
    grad: &mut LayerNormParams,
) -> Array2<f64> {
    grad.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    grad.beta += &dy.sum_axis(Axis(0));
    let dxhat = dy * &p.gamma;
    let d = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    Zip::from(dx.rows_mut())
        .and(dxhat.rows())
        .and(cache.xhat.rows())
        .and(&cache.inv_std)
        .for_each(|mut out, g, xh, &is| {
            let mean_g = g.sum() / d;
            let mean_gx = g.dot(&xh) / d;
            Zip::from(&mut out)
                .and(&g)
                .and(&xh)
                .for_each(|o, &gi, &xi| *o = is * (gi - mean_g - xi * mean_gx));
        });
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(w) + b
}

/// Accumulates weight and bias gradients of `y = x w + b` and returns `dx`.
fn linear_backward(
    x: &Array2<f64>,
    w: &Array2<f64>,
    dy: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    ndarray::linalg::general_mat_mul(1.0, &x.t(), dy, 1.0, dw);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

fn dropout_mask(rng: &mut ChaCha8Rng, shape: (usize, usize), rate: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < rate { 0.0 } else { keep })
}

struct BlockCache {
    input: Array2<f64>,
    query: Array2<f64>,
    key: Array2<f64>,
    value: Array2<f64>,
    probs: Vec<Array2<f64>>,
    context: Array2<f64>,
    attn_drop: Option<Array2<f64>>,
    attn_norm: NormCache,
    hidden: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
    ff_drop: Option<Array2<f64>>,
    ff_norm: NormCache,
}

/// Activations of one sequence, kept for the backward pass.
pub struct ForwardCache {
    token_ids: Vec<usize>,
    segment_ids: Vec<u8>,
    embed_norm: NormCache,
    embed_drop: Option<Array2<f64>>,
    blocks: Vec<BlockCache>,
    pooled_positions: Vec<usize>,
    pooled: Array1<f64>,
    pub logits: [f64; 2],
}

fn attention_probs(scores: ArrayView2<'_, f64>, valid_keys: &[bool]) -> Array2<f64> {
    let mut probs = Array2::zeros(scores.raw_dim());
    for (mut out, row) in probs.rows_mut().into_iter().zip(scores.rows()) {
        let max = row
            .iter()
            .zip(valid_keys)
            .filter(|(_, &ok)| ok)
            .map(|(&s, _)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for ((o, &s), &ok) in out.iter_mut().zip(row.iter()).zip(valid_keys) {
            if ok {
                *o = (s - max).exp();
                sum += *o;
            }
        }
        out.mapv_inplace(|v| v / sum);
    }
    probs
}

fn check_input(ids: &[usize], segments: &[u8], target_mask: &[bool], config: &EncoderConfig) -> Result<()> {
    if ids.is_empty() || ids.len() != segments.len() || ids.len() != target_mask.len() {
        return Err(Error::Input("token, segment and mask lengths disagree".into()));
    }
    if ids.len() > config.max_seq_length {
        return Err(Error::Input(format!(
            "sequence of {} tokens exceeds max_seq_length {}",
            ids.len(),
            config.max_seq_length
        )));
    }
    if let Some(&bad) = ids.iter().find(|&&id| id >= config.vocab_size) {
        return Err(Error::Input(format!(
            "token id {bad} outside vocabulary of size {}",
            config.vocab_size
        )));
    }
    if ids[0] == PAD {
        return Err(Error::Input("sequence starts with PAD".into()));
    }
    if segments.iter().any(|&s| s > 1) {
        return Err(Error::Input("segment ids must be 0 or 1".into()));
    }
    if config.head == HeadKind::TokenCls && !target_mask.iter().any(|&m| m) {
        return Err(Error::Input("token head needs at least one target position".into()));
    }
    Ok(())
}

/// Runs one (possibly PAD-padded) sequence and keeps the activations.
/// Dropout is applied only when `dropout` is given and the rate is positive.
pub fn forward_with_cache(
    params: &ModelParameters,
    config: &EncoderConfig,
    token_ids: &[usize],
    segment_ids: &[u8],
    target_mask: &[bool],
    mut dropout: Option<&mut ChaCha8Rng>,
) -> Result<ForwardCache> {
    check_input(token_ids, segment_ids, target_mask, config)?;
    let len = token_ids.len();
    let dim = config.model_dim;
    let head_dim = config.head_dim();
    let scale = 1.0 / (head_dim as f64).sqrt();
    let rate = config.dropout_rate;
    let valid: Vec<bool> = token_ids.iter().map(|&t| t != PAD).collect();
    let mut drop = |shape: (usize, usize)| -> Option<Array2<f64>> {
        match dropout.as_deref_mut() {
            Some(rng) if rate > 0.0 => Some(dropout_mask(rng, shape, rate)),
            _ => None,
        }
    };

    let mut x = Array2::zeros((len, dim));
    for (t, mut row) in x.rows_mut().into_iter().enumerate() {
        row.assign(&params.token_embedding.row(token_ids[t]));
        row += &params.position_embedding.row(t);
        row += &params.segment_embedding.row(segment_ids[t] as usize);
    }
    let (mut x, embed_norm) = layer_norm(&x, &params.embedding_norm);
    let embed_drop = drop((len, dim));
    if let Some(m) = &embed_drop {
        x *= m;
    }

    let mut blocks = Vec::with_capacity(params.layers.len());
    for block in &params.layers {
        let query = linear(&x, &block.w_query, &block.b_query);
        let key = linear(&x, &block.w_key, &block.b_key);
        let value = linear(&x, &block.w_value, &block.b_value);
        let mut context = Array2::zeros((len, dim));
        let mut probs = Vec::with_capacity(config.num_heads);
        for h in 0..config.num_heads {
            let cols = s![.., h * head_dim..(h + 1) * head_dim];
            let scores = query.slice(cols).dot(&key.slice(cols).t()) * scale;
            let p = attention_probs(scores.view(), &valid);
            context.slice_mut(cols).assign(&p.dot(&value.slice(cols)));
            probs.push(p);
        }
        let mut attn = linear(&context, &block.w_out, &block.b_out);
        let attn_drop = drop((len, dim));
        if let Some(m) = &attn_drop {
            attn *= m;
        }
        let (hidden, attn_norm) = layer_norm(&(&x + &attn), &block.attn_norm);

        let ff_pre = linear(&hidden, &block.w_ff_in, &block.b_ff_in);
        let ff_act = ff_pre.mapv(gelu);
        let mut ff = linear(&ff_act, &block.w_ff_out, &block.b_ff_out);
        let ff_drop = drop((len, dim));
        if let Some(m) = &ff_drop {
            ff *= m;
        }
        let (out, ff_norm) = layer_norm(&(&hidden + &ff), &block.ff_norm);

        blocks.push(BlockCache {
            input: std::mem::replace(&mut x, out),
            query,
            key,
            value,
            probs,
            context,
            attn_drop,
            attn_norm,
            hidden,
            ff_pre,
            ff_act,
            ff_drop,
            ff_norm,
        });
    }

    let pooled_positions: Vec<usize> = match config.head {
        HeadKind::TokenCls => (0..len).filter(|&t| target_mask[t]).collect(),
        HeadKind::SentCls | HeadKind::SentClsWs => vec![0],
    };
    let mut pooled = Array1::zeros(dim);
    for &t in &pooled_positions {
        pooled += &x.row(t);
    }
    pooled /= pooled_positions.len() as f64;
    let out = pooled.dot(&params.head_weight) + &params.head_bias;

    Ok(ForwardCache {
        token_ids: token_ids.to_vec(),
        segment_ids: segment_ids.to_vec(),
        embed_norm,
        embed_drop,
        blocks,
        pooled_positions,
        pooled,
        logits: [out[0], out[1]],
    })
}

/// Backpropagates `dlogits` through the cached activations, adding into `grads`.
pub fn backward(
    params: &ModelParameters,
    config: &EncoderConfig,
    cache: &ForwardCache,
    dlogits: [f64; 2],
    grads: &mut ModelParameters,
) {
    let len = cache.token_ids.len();
    let dim = config.model_dim;
    let head_dim = config.head_dim();
    let scale = 1.0 / (head_dim as f64).sqrt();
    let dl = ArrayView1::from(&dlogits);

    for i in 0..dim {
        for j in 0..2 {
            grads.head_weight[[i, j]] += cache.pooled[i] * dlogits[j];
        }
    }
    grads.head_bias += &dl;
    let dpooled = params.head_weight.dot(&dl) / cache.pooled_positions.len() as f64;
    let mut dx = Array2::zeros((len, dim));
    for &t in &cache.pooled_positions {
        let mut row = dx.row_mut(t);
        row += &dpooled;
    }

    for (layer, (block, bc)) in params.layers.iter().zip(&cache.blocks).enumerate().rev() {
        let g = &mut grads.layers[layer];

        let dres = layer_norm_backward(&dx, &bc.ff_norm, &block.ff_norm, &mut g.ff_norm);
        let mut dff = dres.clone();
        if let Some(m) = &bc.ff_drop {
            dff *= m;
        }
        let dact = linear_backward(&bc.ff_act, &block.w_ff_out, &dff, &mut g.w_ff_out, &mut g.b_ff_out);
        let dpre = &dact * &bc.ff_pre.mapv(gelu_grad);
        let mut dhidden = linear_backward(&bc.hidden, &block.w_ff_in, &dpre, &mut g.w_ff_in, &mut g.b_ff_in);
        dhidden += &dres;

        let dres = layer_norm_backward(&dhidden, &bc.attn_norm, &block.attn_norm, &mut g.attn_norm);
        let mut dattn = dres.clone();
        if let Some(m) = &bc.attn_drop {
            dattn *= m;
        }
        let dcontext = linear_backward(&bc.context, &block.w_out, &dattn, &mut g.w_out, &mut g.b_out);

        let mut dquery = Array2::zeros((len, dim));
        let mut dkey = Array2::zeros((len, dim));
        let mut dvalue = Array2::zeros((len, dim));
        for (h, p) in bc.probs.iter().enumerate() {
            let cols = s![.., h * head_dim..(h + 1) * head_dim];
            let dctx = dcontext.slice(cols);
            let dp = dctx.dot(&bc.value.slice(cols).t());
            dvalue.slice_mut(cols).assign(&p.t().dot(&dctx));
            let mut ds = &dp * p;
            for (mut row, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                let inner = row.sum();
                Zip::from(&mut row).and(&prow).for_each(|d, &pv| *d -= pv * inner);
            }
            ds *= scale;
            dquery.slice_mut(cols).assign(&ds.dot(&bc.key.slice(cols)));
            dkey.slice_mut(cols).assign(&ds.t().dot(&bc.query.slice(cols)));
        }
        let mut dinput = dres;
        dinput += &linear_backward(&bc.input, &block.w_query, &dquery, &mut g.w_query, &mut g.b_query);
        dinput += &linear_backward(&bc.input, &block.w_key, &dkey, &mut g.w_key, &mut g.b_key);
        dinput += &linear_backward(&bc.input, &block.w_value, &dvalue, &mut g.w_value, &mut g.b_value);
        dx = dinput;
    }

    if let Some(m) = &cache.embed_drop {
        dx *= m;
    }
    let demb = layer_norm_backward(&dx, &cache.embed_norm, &params.embedding_norm, &mut grads.embedding_norm);
    for (t, row) in demb.rows().into_iter().enumerate() {
        let mut tok = grads.token_embedding.row_mut(cache.token_ids[t]);
        tok += &row;
        let mut pos = grads.position_embedding.row_mut(t);
        pos += &row;
        let mut seg = grads.segment_embedding.row_mut(cache.segment_ids[t] as usize);
        seg += &row;
    }
}

/// Pads a batch to its longest sequence and classifies every pair. PAD keys
/// are excluded from attention, so padding does not change any logit.
pub fn forward(
    params: &ModelParameters,
    batch: &[EncodedPair],
    config: &EncoderConfig,
    mut dropout: Option<&mut ChaCha8Rng>,
) -> Result<Vec<ClassifierOutput>> {
    let width = batch.iter().map(EncodedPair::len).max().unwrap_or(0);
    batch
        .iter()
        .map(|pair| {
            let mut ids = pair.token_ids.clone();
            let mut segs = pair.segment_ids.clone();
            let mut mask = pair.target_mask.clone();
            ids.resize(width, PAD);
            segs.resize(width, 0);
            mask.resize(width, false);
            let cache = forward_with_cache(params, config, &ids, &segs, &mask, dropout.as_deref_mut())?;
            Ok(ClassifierOutput { logits: cache.logits })
        })
        .collect()
}

/// Mean cross-entropy over `batch` and its gradient. Each sequence runs at
/// its own length.
pub fn loss_and_grads(
    params: &ModelParameters,
    config: &EncoderConfig,
    batch: &[EncodedPair],
    mut dropout: Option<&mut ChaCha8Rng>,
) -> Result<(f64, ModelParameters)> {
    let mut grads = ModelParameters::zeros(config);
    let n = batch.len().max(1) as f64;
    let mut total = 0.0;
    for pair in batch {
        let cache = forward_with_cache(
            params,
            config,
            &pair.token_ids,
            &pair.segment_ids,
            &pair.target_mask,
            dropout.as_deref_mut(),
        )?;
        let label = usize::from(pair.label);
        total += cross_entropy(&cache.logits, label);
        let probs = softmax(&cache.logits);
        let mut dlogits = [probs[0] / n, probs[1] / n];
        dlogits[label] -= 1.0 / n;
        backward(params, config, &cache, dlogits, &mut grads);
    }
    Ok((total / n, grads))
}
