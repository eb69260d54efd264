use ndarray::{Array2, ArrayView2};

use super::NUM_CLASSES;

/// Softmax probabilities per row and the arg-max class (ties go to class 0).
pub fn predict(logits: ArrayView2<f64>) -> (Array2<f64>, Vec<usize>) {
    let mut probs = logits.to_owned();
    super::attention::softmax_rows(&mut probs);
    let classes = logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect();
    (probs, classes)
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// Class-weighted mean cross-entropy `Σ w_y·(−log p_y) / Σ w_y` and its
/// gradient with respect to the logits.
pub fn weighted_cross_entropy(
    logits: ArrayView2<f64>,
    labels: &[usize],
    class_weights: [f64; NUM_CLASSES],
) -> (f64, Array2<f64>) {
    assert_eq!(logits.nrows(), labels.len(), "one label per logit row");
    let total_weight: f64 = labels.iter().map(|&y| class_weights[y]).sum();
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.dim());
    for (i, row) in logits.rows().into_iter().enumerate() {
        let y = labels[i];
        let w = class_weights[y] / total_weight;
        let ls = log_softmax(&row.to_vec());
        loss -= w * ls[y];
        for (c, l) in ls.iter().enumerate() {
            let target = if c == y { 1.0 } else { 0.0 };
            grad[[i, c]] = w * (l.exp() - target);
        }
    }
    (loss, grad)
}

/// Inverse-frequency weights `N / (2·N_c)`; `None` if a class is absent.
pub fn inverse_frequency_weights(labels: &[usize]) -> Option<[f64; NUM_CLASSES]> {
    let mut counts = [0usize; NUM_CLASSES];
    for &y in labels {
        counts[y] += 1;
    }
    if counts.contains(&0) {
        return None;
    }
    let n = labels.len() as f64;
    Some(counts.map(|c| n / (NUM_CLASSES as f64 * c as f64)))
}
