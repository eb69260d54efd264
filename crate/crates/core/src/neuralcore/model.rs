//! Batched classifier forward and reverse pass.
//!
//! Pipeline per sample: attention → mean over valid query positions →
//! layer norm → dropout → linear(d→h) → ReLU → linear(h→2).
//!
//! Mean pooling commutes with the value and output projections, and every
//! attention row sums to one, so the pooled context is computed as
//! `((ā·X_kv)·Wv + bv)·Wo + bo` with `ā` the query-averaged attention row.
//! Only the query and key projections are applied per position.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::{add_bias, softmax_rows};
use super::{HyperParams, ModelError, ModelParams};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttentionMode {
    /// Text embeddings attend to themselves.
    #[serde(rename = "self-text")]
    SelfText,
    /// Audio embeddings attend to themselves.
    #[serde(rename = "self-audio")]
    SelfAudio,
    /// Text queries attend to audio keys and values.
    #[serde(rename = "cross")]
    Cross,
}

impl AttentionMode {
    pub const ALL: [AttentionMode; 3] = [AttentionMode::SelfText, AttentionMode::SelfAudio, AttentionMode::Cross];

    pub fn as_str(self) -> &'static str {
        match self {
            AttentionMode::SelfText => "self-text",
            AttentionMode::SelfAudio => "self-audio",
            AttentionMode::Cross => "cross",
        }
    }

    pub fn needs_audio(self) -> bool {
        !matches!(self, AttentionMode::SelfText)
    }
}

impl fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttentionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttentionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (expected self-text, self-audio or cross)"))
    }
}

/// Zero-padded sequences with a validity mask (`true` = real position).
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    pub data: Array3<f64>,
    pub mask: Array2<bool>,
}

impl SequenceBatch {
    /// Pad `seqs` with zero rows up to the longest length.
    pub fn from_sequences(seqs: &[ArrayView2<f64>]) -> Result<Self, ModelError> {
        let width = seqs.first().map_or(0, |s| s.ncols());
        if seqs.iter().any(|s| s.ncols() != width) {
            return Err(ModelError::ShapeMismatch("sequences differ in feature width".into()));
        }
        let max_len = seqs.iter().map(|s| s.nrows()).max().unwrap_or(0);
        let mut data = Array3::zeros((seqs.len(), max_len, width));
        let mut mask = Array2::from_elem((seqs.len(), max_len), false);
        for (b, seq) in seqs.iter().enumerate() {
            data.slice_mut(s![b, ..seq.nrows(), ..]).assign(seq);
            mask.slice_mut(s![b, ..seq.nrows()]).fill(true);
        }
        Ok(SequenceBatch { data, mask })
    }

    pub fn batch_size(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    /// The same batch with `extra` masked zero rows appended to every sample.
    pub fn with_padding(&self, extra: usize) -> Self {
        let (b, l, d) = self.data.dim();
        let mut data = Array3::zeros((b, l + extra, d));
        data.slice_mut(s![.., ..l, ..]).assign(&self.data);
        let mut mask = Array2::from_elem((b, l + extra), false);
        mask.slice_mut(s![.., ..l]).assign(&self.mask);
        SequenceBatch { data, mask }
    }

    fn valid_positions(&self, sample: usize) -> Vec<usize> {
        self.mask
            .row(sample)
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchInput {
    /// Query sequences; also keys and values in the self-attention modes.
    pub query: SequenceBatch,
    /// Separate key/value sequences, cross mode only.
    pub key_value: Option<SequenceBatch>,
    /// Class index per sample (0 = negative, 1 = positive).
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Span {
    q_start: usize,
    q_len: usize,
    k_start: usize,
    k_len: usize,
}

/// Activations cached by [`model_forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    xq: Array2<f64>,
    /// `None` when keys are the query rows (self modes).
    xk: Option<Array2<f64>>,
    q: Array2<f64>,
    k: Array2<f64>,
    spans: Vec<Span>,
    attn: Vec<Array2<f64>>,
    z: Array2<f64>,
    u: Array2<f64>,
    pooled: Array2<f64>,
    normed: Array2<f64>,
    inv_std: Array1<f64>,
    keep: Option<Array2<f64>>,
    y: Array2<f64>,
    h1: Array2<f64>,
    r: Array2<f64>,
    logits: Array2<f64>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    /// Mean-pooled attention context per sample (`batch × d`), before layer norm.
    pub fn pooled_context(&self) -> &Array2<f64> {
        &self.pooled
    }

    /// Attention weights over the valid keys of `sample` (valid queries × valid keys).
    pub fn attention_weights(&self, sample: usize) -> &Array2<f64> {
        &self.attn[sample]
    }

    /// Recompute the logits from the cached normalised activations.
    pub fn replay_logits(&self, params: &ModelParams) -> Array2<f64> {
        head_forward(params, &self.normed, self.keep.as_ref()).3
    }
}

fn stack(rows: &[Array2<f64>], width: usize) -> Array2<f64> {
    let total: usize = rows.iter().map(|r| r.nrows()).sum();
    let mut out = Array2::zeros((total, width));
    let mut at = 0;
    for r in rows {
        out.slice_mut(s![at..at + r.nrows(), ..]).assign(r);
        at += r.nrows();
    }
    out
}

fn head_forward(
    params: &ModelParams,
    normed: &Array2<f64>,
    keep: Option<&Array2<f64>>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
    let mut y = normed * &params.ln_gain.view().insert_axis(Axis(0));
    y += &params.ln_bias.view().insert_axis(Axis(0));
    if let Some(k) = keep {
        y *= k;
    }
    let h1 = add_bias(y.dot(&params.w1), &params.b1);
    let r = h1.mapv(|v| v.max(0.0));
    let logits = add_bias(r.dot(&params.w2), &params.b2);
    (y, h1, r, logits)
}

fn check_batch(params: &ModelParams, batch: &BatchInput, mode: AttentionMode) -> Result<(), ModelError> {
    let d = params.dims().d_model;
    let check_seq = |seq: &SequenceBatch, what: &str| -> Result<(), ModelError> {
        let (b, l, w) = seq.data.dim();
        if w != d {
            return Err(ModelError::ShapeMismatch(format!("{what} width {w}, model expects {d}")));
        }
        if seq.mask.dim() != (b, l) {
            return Err(ModelError::ShapeMismatch(format!("{what} mask shape differs from data")));
        }
        if let Some(sample) = (0..b).find(|&i| !seq.mask.row(i).iter().any(|&m| m)) {
            return Err(ModelError::AllMasked { sample });
        }
        Ok(())
    };
    check_seq(&batch.query, "query")?;
    let n = batch.query.batch_size();
    if n == 0 {
        return Err(ModelError::ShapeMismatch("empty batch".into()));
    }
    if batch.labels.len() != n {
        return Err(ModelError::ShapeMismatch(format!("{} labels for {n} samples", batch.labels.len())));
    }
    if batch.labels.iter().any(|&y| y > 1) {
        return Err(ModelError::ShapeMismatch("labels must be 0 or 1".into()));
    }
    match (mode, &batch.key_value) {
        (AttentionMode::Cross, Some(kv)) => {
            check_seq(kv, "key/value")?;
            if kv.batch_size() != n {
                return Err(ModelError::ShapeMismatch("key/value batch size differs from query".into()));
            }
        }
        (AttentionMode::Cross, None) => return Err(ModelError::MissingKeyValue),
        (_, Some(_)) => {
            return Err(ModelError::ShapeMismatch(
                "self-attention batches carry no separate key/value sequences".into(),
            ))
        }
        (_, None) => {}
    }
    Ok(())
}

/// Run the classifier on a batch. Dropout is applied only when `training`.
pub fn model_forward<R: Rng + ?Sized>(
    params: &ModelParams,
    hp: &HyperParams,
    batch: &BatchInput,
    mode: AttentionMode,
    training: bool,
    rng: &mut R,
) -> Result<(Array2<f64>, ForwardTrace), ModelError> {
    check_batch(params, batch, mode)?;
    let d = params.dims().d_model;
    let n = batch.query.batch_size();
    let scale = 1.0 / (d as f64).sqrt();

    let gather = |seq: &SequenceBatch, b: usize| -> Array2<f64> {
        seq.data.index_axis(Axis(0), b).select(Axis(0), &seq.valid_positions(b))
    };
    let q_rows: Vec<Array2<f64>> = (0..n).map(|b| gather(&batch.query, b)).collect();
    let k_rows: Option<Vec<Array2<f64>>> = batch
        .key_value
        .as_ref()
        .map(|kv| (0..n).map(|b| gather(kv, b)).collect());

    let mut spans = Vec::with_capacity(n);
    let (mut qa, mut ka) = (0, 0);
    for b in 0..n {
        let q_len = q_rows[b].nrows();
        let k_len = k_rows.as_ref().map_or(q_len, |k| k[b].nrows());
        spans.push(Span { q_start: qa, q_len, k_start: ka, k_len });
        qa += q_len;
        ka += k_len;
    }

    let xq = stack(&q_rows, d);
    let xk = k_rows.map(|k| stack(&k, d));
    let xk_view = xk.as_ref().unwrap_or(&xq);

    let q = add_bias(xq.dot(&params.wq), &params.bq);
    let k = add_bias(xk_view.dot(&params.wk), &params.bk);

    let mut attn = Vec::with_capacity(n);
    let mut z = Array2::zeros((n, d));
    for (b, sp) in spans.iter().enumerate() {
        let qb = q.slice(s![sp.q_start..sp.q_start + sp.q_len, ..]);
        let kb = k.slice(s![sp.k_start..sp.k_start + sp.k_len, ..]);
        let mut a = qb.dot(&kb.t()) * scale;
        softmax_rows(&mut a);
        let a_bar = a.mean_axis(Axis(0)).expect("non-empty query");
        let xkb = xk_view.slice(s![sp.k_start..sp.k_start + sp.k_len, ..]);
        z.row_mut(b).assign(&a_bar.dot(&xkb));
        attn.push(a);
    }

    let u = add_bias(z.dot(&params.wv), &params.bv);
    let pooled = add_bias(u.dot(&params.wo), &params.bo);

    let mut normed = pooled.clone();
    let mut inv_std = Array1::zeros(n);
    for (b, mut row) in normed.rows_mut().into_iter().enumerate() {
        let mu = row.mean().expect("d > 0");
        row -= mu;
        let var = row.mapv(|v| v * v).mean().expect("d > 0");
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row *= inv;
        inv_std[b] = inv;
    }

    let keep = (training && hp.dropout_rate > 0.0).then(|| {
        let p = hp.dropout_rate;
        let scale = 1.0 / (1.0 - p);
        Array2::from_shape_simple_fn((n, d), || if rng.random::<f64>() < p { 0.0 } else { scale })
    });

    let (y, h1, r, logits) = head_forward(params, &normed, keep.as_ref());
    let trace = ForwardTrace {
        xq,
        xk,
        q,
        k,
        spans,
        attn,
        z,
        u,
        pooled,
        normed,
        inv_std,
        keep,
        y,
        h1,
        r,
        logits: logits.clone(),
    };
    Ok((logits, trace))
}

/// Reverse pass: parameter gradients given `∂loss/∂logits` (`batch × 2`).
pub fn backward(params: &ModelParams, trace: &ForwardTrace, dlogits: &Array2<f64>) -> ModelParams {
    let dims = params.dims();
    let d = dims.d_model;
    let n = trace.spans.len();
    let scale = 1.0 / (d as f64).sqrt();
    let mut g = ModelParams::zeros(dims);

    // MLP head
    g.w2 = trace.r.t().dot(dlogits);
    g.b2 = dlogits.sum_axis(Axis(0));
    let mut dh = dlogits.dot(&params.w2.t());
    dh.zip_mut_with(&trace.h1, |g, &h| {
        if h <= 0.0 {
            *g = 0.0;
        }
    });
    g.w1 = trace.y.t().dot(&dh);
    g.b1 = dh.sum_axis(Axis(0));
    let mut dy = dh.dot(&params.w1.t());
    if let Some(k) = &trace.keep {
        dy *= k;
    }

    // layer norm
    g.ln_gain = (&dy * &trace.normed).sum_axis(Axis(0));
    g.ln_bias = dy.sum_axis(Axis(0));
    let mut dpooled = dy * params.ln_gain.view().insert_axis(Axis(0));
    for (b, mut row) in dpooled.rows_mut().into_iter().enumerate() {
        let nrow = trace.normed.row(b);
        let mean_g = row.mean().expect("d > 0");
        let mean_gn = row.dot(&nrow) / d as f64;
        let inv = trace.inv_std[b];
        row.zip_mut_with(&nrow, |v, &nh| *v = inv * (*v - mean_g - nh * mean_gn));
    }

    // output and value projections
    g.wo = trace.u.t().dot(&dpooled);
    g.bo = dpooled.sum_axis(Axis(0));
    let du = dpooled.dot(&params.wo.t());
    g.wv = trace.z.t().dot(&du);
    g.bv = du.sum_axis(Axis(0));
    let dz = du.dot(&params.wv.t());

    // attention scores
    let xk = trace.xk.as_ref().unwrap_or(&trace.xq);
    let mut dq = Array2::zeros(trace.q.dim());
    let mut dk = Array2::zeros(trace.k.dim());
    for b in 0..n {
        let sp = trace.spans[b];
        let a = &trace.attn[b];
        let xkb = xk.slice(s![sp.k_start..sp.k_start + sp.k_len, ..]);
        // every query row receives the same upstream gradient ∂ā/∂A = 1/q_len
        let da_row = xkb.dot(&dz.row(b)) / sp.q_len as f64;
        let mut ds = a.clone();
        for mut row in ds.rows_mut() {
            let inner = row.dot(&da_row);
            row.zip_mut_with(&da_row, |w, &g| *w *= (g - inner) * scale);
        }
        let qb = trace.q.slice(s![sp.q_start..sp.q_start + sp.q_len, ..]);
        let kb = trace.k.slice(s![sp.k_start..sp.k_start + sp.k_len, ..]);
        dq.slice_mut(s![sp.q_start..sp.q_start + sp.q_len, ..]).assign(&ds.dot(&kb));
        dk.slice_mut(s![sp.k_start..sp.k_start + sp.k_len, ..]).assign(&ds.t().dot(&qb));
    }
    g.wq = trace.xq.t().dot(&dq);
    g.bq = dq.sum_axis(Axis(0));
    g.wk = xk.t().dot(&dk);
    g.bk = dk.sum_axis(Axis(0));
    g
}
