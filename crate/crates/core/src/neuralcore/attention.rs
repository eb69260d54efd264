//! Single-head scaled dot-product attention over one sample.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::{ModelError, ModelParams};

/// Full attention result for one query sequence.
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// `query_len × d` context, after the output projection.
    pub context: Array2<f64>,
    /// `query_len × key_len` weights; masked key columns are exactly zero.
    pub weights: Array2<f64>,
}

/// Numerically stable softmax of each row, in place.
pub(crate) fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

pub(crate) fn gather_rows(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

pub(crate) fn add_bias(mut m: Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    m += &b.view().insert_axis(Axis(0));
    m
}

/// `softmax((x_q·Wq + bq)(x_k·Wk + bk)ᵀ / √d)` restricted to unmasked keys,
/// applied to `x_v·Wv + bv` and projected by `Wo`, `bo`.
///
/// Every query row gets an output row; only keys are masked.
pub fn attention_forward(
    params: &ModelParams,
    query: ArrayView2<f64>,
    key: ArrayView2<f64>,
    value: ArrayView2<f64>,
    key_mask: &[bool],
) -> Result<AttentionOutput, ModelError> {
    let d = params.dims().d_model;
    if query.ncols() != d || key.ncols() != d || value.ncols() != d {
        return Err(ModelError::ShapeMismatch(format!(
            "feature width must be {d} (query {}, key {}, value {})",
            query.ncols(),
            key.ncols(),
            value.ncols()
        )));
    }
    if key.nrows() != value.nrows() || key.nrows() != key_mask.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "key rows {}, value rows {}, mask length {}",
            key.nrows(),
            value.nrows(),
            key_mask.len()
        )));
    }
    let valid: Vec<usize> = (0..key_mask.len()).filter(|&i| key_mask[i]).collect();
    if valid.is_empty() {
        return Err(ModelError::AllMasked { sample: 0 });
    }

    let scale = 1.0 / (d as f64).sqrt();
    let q = add_bias(query.dot(&params.wq), &params.bq);
    let k = add_bias(gather_rows(key, &valid).dot(&params.wk), &params.bk);
    let v = add_bias(gather_rows(value, &valid).dot(&params.wv), &params.bv);

    let mut a = q.dot(&k.t()) * scale;
    softmax_rows(&mut a);
    let context = add_bias(a.dot(&v).dot(&params.wo), &params.bo);

    let mut weights = Array2::zeros((query.nrows(), key.nrows()));
    for (j, &col) in valid.iter().enumerate() {
        weights.slice_mut(s![.., col]).assign(&a.column(j));
    }
    Ok(AttentionOutput { context, weights })
}
