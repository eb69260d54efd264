//! Analytic-versus-numerical gradient comparison.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    backward, model_forward, weighted_cross_entropy, AttentionMode, BatchInput, HyperParams, ModelDims,
    ModelError, ModelParams, SequenceBatch, TENSOR_NAMES,
};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Pass threshold on the maximum relative error.
pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Denominator floor so that vanishing gradients compare on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckOptions {
    /// Scale the analytic query-projection gradient by 2 before comparing.
    /// Exists to prove the checker notices broken gradients.
    pub corrupt_gradient: bool,
    /// Check at most this many coordinates per tensor (evenly strided); all when `None`.
    pub max_coords_per_tensor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub mode: AttentionMode,
    pub tensor: &'static str,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub fd_step: f64,
    pub tolerance: f64,
    pub entries: Vec<TensorCheck>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Compare [`backward`] against central differences of the weighted loss on
/// one batch. Dropout is active, with the mask pinned by `dropout_seed`.
pub fn check_batch_gradients(
    params: &ModelParams,
    hp: &HyperParams,
    batch: &BatchInput,
    mode: AttentionMode,
    class_weights: [f64; 2],
    dropout_seed: u64,
    opts: &GradCheckOptions,
) -> Result<Vec<TensorCheck>, ModelError> {
    let loss_at = |p: &ModelParams| -> Result<f64, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
        let (logits, _) = model_forward(p, hp, batch, mode, true, &mut rng)?;
        Ok(weighted_cross_entropy(logits.view(), &batch.labels, class_weights).0)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let (logits, trace) = model_forward(params, hp, batch, mode, true, &mut rng)?;
    let (_, dlogits) = weighted_cross_entropy(logits.view(), &batch.labels, class_weights);
    let mut grads = backward(params, &trace, &dlogits);
    if opts.corrupt_gradient {
        grads.wq *= 2.0;
    }

    let mut probe = params.clone();
    let mut out = Vec::with_capacity(TENSOR_NAMES.len());
    for (t, name) in TENSOR_NAMES.iter().enumerate() {
        let len = params.tensors()[t].len();
        let stride = opts.max_coords_per_tensor.map_or(1, |m| len.div_ceil(m.max(1)).max(1));
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        for i in (0..len).step_by(stride) {
            let orig = params.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + FD_STEP;
            let up = loss_at(&probe)?;
            probe.tensors_mut()[t][i] = orig - FD_STEP;
            let down = loss_at(&probe)?;
            probe.tensors_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(grads.tensors()[t][i], numeric));
            checked += 1;
        }
        out.push(TensorCheck { mode, tensor: name, checked, max_rel_error: worst });
    }
    Ok(out)
}

fn random_seqs<R: Rng>(rng: &mut R, n: usize, max_len: usize, d: usize) -> Vec<Array2<f64>> {
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..=max_len);
            Array2::from_shape_simple_fn((len, d), || rng.random_range(-1.5..1.5))
        })
        .collect()
}

/// A tiny random model and padded batch for `mode`: width 6, hidden 5,
/// three samples of length ≤ 4.
pub fn tiny_problem(seed: u64, mode: AttentionMode) -> (ModelParams, BatchInput) {
    let dims = ModelDims { d_model: 6, hidden: 5 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(dims, &mut rng);
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let pad = |seqs: &[Array2<f64>]| {
        let views: Vec<_> = seqs.iter().map(|s| s.view()).collect();
        SequenceBatch::from_sequences(&views).expect("equal widths")
    };
    let text = random_seqs(&mut rng, 3, 4, dims.d_model);
    let audio = random_seqs(&mut rng, 3, 4, dims.d_model);
    let labels = vec![0, 1, rng.random_range(0..2)];
    let batch = match mode {
        AttentionMode::SelfText => BatchInput { query: pad(&text), key_value: None, labels },
        AttentionMode::SelfAudio => BatchInput { query: pad(&audio), key_value: None, labels },
        AttentionMode::Cross => BatchInput { query: pad(&text), key_value: Some(pad(&audio)), labels },
    };
    (params, batch)
}

pub fn grad_check(seed: u64) -> GradCheckReport {
    grad_check_with(seed, &GradCheckOptions::default())
}

/// Gradient check of every parameter of a tiny random model in all three modes.
pub fn grad_check_with(seed: u64, opts: &GradCheckOptions) -> GradCheckReport {
    let hp = HyperParams::default();
    let mut entries = Vec::new();
    for (i, mode) in AttentionMode::ALL.into_iter().enumerate() {
        let (params, batch) = tiny_problem(seed.wrapping_add(i as u64), mode);
        let checks = check_batch_gradients(&params, &hp, &batch, mode, [1.25, 0.8], seed ^ 0x5eed, opts)
            .expect("tiny problems are well-formed");
        entries.extend(checks);
    }
    let max_rel_error = entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max);
    GradCheckReport { seed, fd_step: FD_STEP, tolerance: GRAD_TOLERANCE, entries, max_rel_error }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_seven_passes() {
        let r = grad_check(7);
        assert!(r.passed(), "max relative error {}", r.max_rel_error);
        assert_eq!(r.entries.len(), 3 * 14);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let r = grad_check_with(7, &GradCheckOptions { corrupt_gradient: true, ..Default::default() });
        assert!(r.max_rel_error > 1e-2);
        assert!(!r.passed());
    }

    #[test]
    fn deterministic() {
        assert_eq!(grad_check(11), grad_check(11));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(2.0, 1.0), 0.5);
        assert!(relative_error(1e-12, 2e-12) < 1e-5);
    }
}
