//! Bidirectional post-norm transformer encoder with a hand-written backward
//! pass.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use super::params::{EncoderParams, LayerParams, PromptEmbeddings};
use crate::error::{Error, Result};
use crate::template::InputSequence;

const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

/// Final-layer hidden vectors, one row per input position.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates(pub Array2<f64>);

impl HiddenStates {
    pub fn seq_len(&self) -> usize {
        self.0.nrows()
    }

    pub fn row(&self, pos: usize) -> Result<ndarray::ArrayView1<'_, f64>> {
        if pos >= self.0.nrows() {
            return Err(Error::IndexOutOfBounds {
                index: pos,
                len: self.0.nrows(),
            });
        }
        Ok(self.0.row(pos))
    }
}

struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

struct LayerCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    context: Array2<f64>,
    attn_norm: NormCache,
    mid: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
    ffn_norm: NormCache,
}

/// Activations kept from a forward pass for the backward pass.
pub struct ForwardCache {
    token_ids: Vec<usize>,
    pseudo_slots: Vec<usize>,
    with_prompts: bool,
    layers: Vec<LayerCache>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn hidden(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn into_hidden(self) -> HiddenStates {
        HiddenStates(self.output)
    }
}

fn layer_norm(
    x: &Array2<f64>,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row.mapv_inplace(|v| v * *inv);
    }
    let y = &xhat * gamma + beta;
    (y, NormCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    gamma: &Array1<f64>,
    dgamma: &mut Array1<f64>,
    dbeta: &mut Array1<f64>,
) -> Array2<f64> {
    *dgamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbeta += &dy.sum_axis(Axis(0));
    let dxhat = dy * gamma;
    let d = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (((mut out, g), xh), &inv) in dx
        .rows_mut()
        .into_iter()
        .zip(dxhat.rows())
        .zip(cache.xhat.rows())
        .zip(cache.inv_std.iter())
    {
        let mean_g = g.sum() / d;
        let mean_gx = g.dot(&xh) / d;
        Zip::from(&mut out)
            .and(&g)
            .and(&xh)
            .for_each(|o, &gi, &xi| *o = inv * (gi - mean_g - xi * mean_gx));
    }
    dx
}

fn gelu(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * x * (1.0 + t)
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(w) + b
}

fn layer_forward(x: Array2<f64>, p: &LayerParams, n_heads: usize) -> LayerCache {
    let d = x.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = linear(&x, &p.wq, &p.bq);
    let k = linear(&x, &p.wk, &p.bk);
    let v = linear(&x, &p.wv, &p.bv);
    let mut context = Array2::zeros(x.raw_dim());
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        softmax_rows(&mut scores);
        context.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        probs.push(scores);
    }
    let attn_out = linear(&context, &p.wo, &p.bo);
    let (mid, attn_norm) = layer_norm(&(&x + &attn_out), &p.attn_norm_gamma, &p.attn_norm_beta);
    let pre_act = linear(&mid, &p.w1, &p.b1);
    let act = pre_act.mapv(gelu);
    let ffn_out = linear(&act, &p.w2, &p.b2);
    let (_, ffn_norm) = layer_norm(&(&mid + &ffn_out), &p.ffn_norm_gamma, &p.ffn_norm_beta);
    LayerCache {
        input: x,
        q,
        k,
        v,
        probs,
        context,
        attn_norm,
        mid,
        pre_act,
        act,
        ffn_norm,
    }
}

fn layer_output(cache: &LayerCache, p: &LayerParams) -> Array2<f64> {
    &cache.ffn_norm.xhat * &p.ffn_norm_gamma + &p.ffn_norm_beta
}

/// Adds `dy` into the gradients of a linear map and returns the input gradient.
fn linear_backward(
    x: &ArrayView2<f64>,
    dy: &ArrayView2<f64>,
    w: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *dw += &x.t().dot(dy);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

fn layer_backward(
    cache: &LayerCache,
    p: &LayerParams,
    g: &mut LayerParams,
    d_out: &Array2<f64>,
    n_heads: usize,
) -> Array2<f64> {
    let d = cache.input.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let d_res2 = layer_norm_backward(
        d_out,
        &cache.ffn_norm,
        &p.ffn_norm_gamma,
        &mut g.ffn_norm_gamma,
        &mut g.ffn_norm_beta,
    );
    let d_act = linear_backward(
        &cache.act.view(),
        &d_res2.view(),
        &p.w2,
        &mut g.w2,
        &mut g.b2,
    );
    let d_pre = d_act * &cache.pre_act.mapv(gelu_grad);
    let mut d_mid = linear_backward(
        &cache.mid.view(),
        &d_pre.view(),
        &p.w1,
        &mut g.w1,
        &mut g.b1,
    );
    d_mid += &d_res2;

    let d_res1 = layer_norm_backward(
        &d_mid,
        &cache.attn_norm,
        &p.attn_norm_gamma,
        &mut g.attn_norm_gamma,
        &mut g.attn_norm_beta,
    );
    let d_context = linear_backward(
        &cache.context.view(),
        &d_res1.view(),
        &p.wo,
        &mut g.wo,
        &mut g.bo,
    );

    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dk = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for (h, probs) in cache.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let d_ctx_h = d_context.slice(cols);
        let d_probs = d_ctx_h.dot(&cache.v.slice(cols).t());
        dv.slice_mut(cols).assign(&probs.t().dot(&d_ctx_h));
        let mut d_scores = d_probs;
        for (mut ds, pr) in d_scores.rows_mut().into_iter().zip(probs.rows()) {
            let dot = ds.dot(&pr);
            Zip::from(&mut ds)
                .and(&pr)
                .for_each(|x, &pi| *x = pi * (*x - dot) * scale);
        }
        dq.slice_mut(cols)
            .assign(&d_scores.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols)
            .assign(&d_scores.t().dot(&cache.q.slice(cols)));
    }
    let x = cache.input.view();
    let mut dx = d_res1;
    dx += &linear_backward(&x, &dq.view(), &p.wq, &mut g.wq, &mut g.bq);
    dx += &linear_backward(&x, &dk.view(), &p.wk, &mut g.wk, &mut g.bk);
    dx += &linear_backward(&x, &dv.view(), &p.wv, &mut g.wv, &mut g.bv);
    dx
}

/// Runs the encoder over raw ids. With `prompts`, the input embedding at
/// `pseudo_slots[j]` is replaced by prompt vector `j`.
pub fn forward(
    token_ids: &[usize],
    pseudo_slots: &[usize],
    params: &EncoderParams,
    prompts: Option<&PromptEmbeddings>,
) -> Result<ForwardCache> {
    let cfg = &params.config;
    let n = token_ids.len();
    if n == 0 || n > cfg.max_len {
        return Err(Error::ShapeMismatch(format!(
            "sequence length {n} outside 1..={}",
            cfg.max_len
        )));
    }
    if let Some(&bad) = token_ids.iter().find(|&&id| id >= cfg.vocab_size) {
        return Err(Error::ShapeMismatch(format!(
            "token id {bad} >= vocabulary size {}",
            cfg.vocab_size
        )));
    }
    if let Some(p) = prompts {
        if p.len() != pseudo_slots.len() || p.vectors.ncols() != cfg.d_model {
            return Err(Error::ShapeMismatch(format!(
                "{} prompt vectors of width {} for {} pseudo slots of width {}",
                p.len(),
                p.vectors.ncols(),
                pseudo_slots.len(),
                cfg.d_model
            )));
        }
    }
    if let Some(&bad) = pseudo_slots.iter().find(|&&pos| pos >= n) {
        return Err(Error::IndexOutOfBounds { index: bad, len: n });
    }

    let mut x = Array2::zeros((n, cfg.d_model));
    for (i, (&id, mut row)) in token_ids.iter().zip(x.rows_mut()).enumerate() {
        row.assign(&params.token_embeddings.row(id));
        row += &params.position_embeddings.row(i);
    }
    if let Some(p) = prompts {
        for (j, &pos) in pseudo_slots.iter().enumerate() {
            let mut row = x.row_mut(pos);
            row.assign(&p.vectors.row(j));
            row += &params.position_embeddings.row(pos);
        }
    }

    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let cache = layer_forward(x, lp, cfg.n_heads);
        x = layer_output(&cache, lp);
        layers.push(cache);
    }
    Ok(ForwardCache {
        token_ids: token_ids.to_vec(),
        pseudo_slots: pseudo_slots.to_vec(),
        with_prompts: prompts.is_some(),
        layers,
        output: x,
    })
}

/// Backpropagates `d_hidden` (gradient w.r.t. the final hidden states) and
/// accumulates into `grads` and, when the forward pass used prompts, into
/// `prompt_grads`.
pub fn backward(
    cache: &ForwardCache,
    d_hidden: &Array2<f64>,
    params: &EncoderParams,
    grads: &mut EncoderParams,
    prompt_grads: Option<&mut Array2<f64>>,
) {
    let mut d = d_hidden.clone();
    for ((lc, lp), lg) in cache
        .layers
        .iter()
        .zip(&params.layers)
        .zip(grads.layers.iter_mut())
        .rev()
    {
        d = layer_backward(lc, lp, lg, &d, params.config.n_heads);
    }
    let mut prompt_grads = prompt_grads.filter(|_| cache.with_prompts);
    for (i, (&id, row)) in cache.token_ids.iter().zip(d.rows()).enumerate() {
        let mut pos_row = grads.position_embeddings.row_mut(i);
        pos_row += &row;
        let slot = if cache.with_prompts {
            cache.pseudo_slots.iter().position(|&p| p == i)
        } else {
            None
        };
        match slot {
            Some(j) => {
                if let Some(pg) = prompt_grads.as_deref_mut() {
                    let mut prow = pg.row_mut(j);
                    prow += &row;
                }
            }
            None => {
                let mut trow = grads.token_embeddings.row_mut(id);
                trow += &row;
            }
        }
    }
}

pub fn encode(
    seq: &InputSequence,
    params: &EncoderParams,
    prompts: Option<&PromptEmbeddings>,
) -> Result<HiddenStates> {
    Ok(forward(&seq.token_ids, &seq.pseudo_slots, params, prompts)?.into_hidden())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelConfig;

    fn params() -> EncoderParams {
        EncoderParams::init(ModelConfig::toy(50), 11).unwrap()
    }

    #[test]
    fn output_shape() {
        let ids: Vec<usize> = (0..14).map(|i| (i * 3) % 50).collect();
        let h = forward(&ids, &[], &params(), None).unwrap().into_hidden();
        assert_eq!(h.0.dim(), (14, 16));
        assert!(h.0.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn deterministic() {
        let ids = [1, 5, 9, 40, 2];
        let p = params();
        let a = forward(&ids, &[], &p, None).unwrap().into_hidden();
        let b = forward(&ids, &[], &p, None).unwrap().into_hidden();
        assert!(a
            .0
            .iter()
            .zip(b.0.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn prompts_replace_embeddings() {
        let p = params();
        let ids = [1, 7, 8, 3];
        let mut prompts = PromptEmbeddings::zeros(2, 16);
        prompts
            .vectors
            .row_mut(0)
            .assign(&p.token_embeddings.row(7));
        prompts
            .vectors
            .row_mut(1)
            .assign(&p.token_embeddings.row(8));
        let with = forward(&ids, &[1, 2], &p, Some(&prompts))
            .unwrap()
            .into_hidden();
        let without = forward(&ids, &[1, 2], &p, None).unwrap().into_hidden();
        assert_eq!(with, without);
        prompts.vectors[[0, 0]] += 1.0;
        let changed = forward(&ids, &[1, 2], &p, Some(&prompts))
            .unwrap()
            .into_hidden();
        assert_ne!(changed, without);
    }

    #[test]
    fn shape_errors() {
        let p = params();
        assert!(matches!(
            forward(&[1, 50], &[], &p, None),
            Err(Error::ShapeMismatch(_))
        ));
        let prompts = PromptEmbeddings::zeros(2, 16);
        assert!(matches!(
            forward(&[1, 2, 3], &[1], &p, Some(&prompts)),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(forward(&vec![1; 65], &[], &p, None).is_err());
    }

    #[test]
    fn gelu_derivative_matches_difference_quotient() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let eps = 1e-6;
            let fd = (gelu(x + eps) - gelu(x - eps)) / (2.0 * eps);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x = {x}");
        }
    }
}
