use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::batching::stratified_batches;
use super::{ExperimentError, Sample, Task};
use crate::neuralcore::{
    adam_step, backward, inverse_frequency_weights, model_forward, predict, weighted_cross_entropy, AdamState,
    AttentionMode, BatchInput, HyperParams, ModelDims, ModelParams, SequenceBatch,
};

const EVAL_BATCH: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub task: Task,
    pub mode: AttentionMode,
    pub seed: u64,
    pub hyper: HyperParams,
    pub dims: ModelDims,
}

impl TrainConfig {
    pub fn new(task: Task, mode: AttentionMode, seed: u64) -> Self {
        TrainConfig { task, mode, seed, hyper: HyperParams::default(), dims: ModelDims::default() }
    }
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub class_weights: [f64; 2],
    /// Mean weighted training loss per completed epoch.
    pub train_loss: Vec<f64>,
    /// Held-out loss per completed epoch (empty when nothing was held out).
    pub holdout_loss: Vec<f64>,
    pub stopping_epoch: usize,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub holdout_subjects: Vec<String>,
    pub params: ModelParams,
}

fn modality<'a>(s: &'a Sample, audio: bool) -> Result<ArrayView2<'a, f64>, ExperimentError> {
    let (m, name) = if audio { (&s.audio, "audio") } else { (&s.text, "text") };
    m.as_ref()
        .map(|m| m.view())
        .ok_or_else(|| ExperimentError::MissingModality { subject: s.subject_id.clone(), modality: name })
}

fn pad(samples: &[&Sample], audio: bool) -> Result<SequenceBatch, ExperimentError> {
    let views = samples.iter().map(|s| modality(s, audio)).collect::<Result<Vec<_>, _>>()?;
    Ok(SequenceBatch::from_sequences(&views)?)
}

/// Pad and stack samples into a batch for `mode`.
pub fn make_batch(samples: &[&Sample], mode: AttentionMode) -> Result<BatchInput, ExperimentError> {
    let labels = samples.iter().map(|s| s.class).collect();
    Ok(match mode {
        AttentionMode::SelfText => BatchInput { query: pad(samples, false)?, key_value: None, labels },
        AttentionMode::SelfAudio => BatchInput { query: pad(samples, true)?, key_value: None, labels },
        AttentionMode::Cross => {
            BatchInput { query: pad(samples, false)?, key_value: Some(pad(samples, true)?), labels }
        }
    })
}

/// Eval-mode logits for every sample, in order.
pub fn infer_logits(params: &ModelParams, samples: &[&Sample], mode: AttentionMode) -> Result<Array2<f64>, ExperimentError> {
    let hp = HyperParams::default();
    // dropout is off, so this generator is never drawn from
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut out = Array2::zeros((samples.len(), 2));
    for (chunk_idx, chunk) in samples.chunks(EVAL_BATCH).enumerate() {
        let batch = make_batch(chunk, mode)?;
        let (logits, _) = model_forward(params, &hp, &batch, mode, false, &mut rng)?;
        let at = chunk_idx * EVAL_BATCH;
        out.slice_mut(ndarray::s![at..at + chunk.len(), ..]).assign(&logits);
    }
    Ok(out)
}

/// Positive-class softmax probability per sample.
pub fn score(params: &ModelParams, samples: &[&Sample], mode: AttentionMode) -> Result<Vec<f64>, ExperimentError> {
    let logits = infer_logits(params, samples, mode)?;
    let (probs, _) = predict(logits.view());
    Ok(probs.column(1).to_vec())
}

fn eval_loss(
    params: &ModelParams,
    samples: &[&Sample],
    mode: AttentionMode,
    weights: [f64; 2],
) -> Result<f64, ExperimentError> {
    let logits = infer_logits(params, samples, mode)?;
    let labels: Vec<usize> = samples.iter().map(|s| s.class).collect();
    Ok(weighted_cross_entropy(logits.view(), &labels, weights).0)
}

/// Stratified hold-out of `fraction` of each class (at least one subject
/// from any class with three or more), drawn from `rng`.
fn split_holdout<'a>(
    samples: &[&'a Sample],
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<&'a Sample>, Vec<&'a Sample>) {
    let mut fit = Vec::new();
    let mut held = Vec::new();
    for class in 0..2 {
        let mut members: Vec<&Sample> = samples.iter().copied().filter(|s| s.class == class).collect();
        members.shuffle(rng);
        let n = members.len();
        let mut k = (fraction * n as f64).round() as usize;
        if fraction > 0.0 && n >= 3 {
            k = k.max(1);
        }
        k = k.min(n.saturating_sub(1));
        held.extend(members.drain(..k));
        fit.extend(members);
    }
    // restore input order so batching does not depend on class grouping
    let pos = |s: &Sample| samples.iter().position(|x| std::ptr::eq(*x, s)).unwrap_or(usize::MAX);
    fit.sort_by_key(|s| pos(s));
    held.sort_by_key(|s| pos(s));
    (fit, held)
}

/// Train one classifier with weighted cross-entropy and Adam.
///
/// A stratified slice of the training samples is held out; training stops
/// once its loss has not improved for `patience` epochs, and the parameters
/// of the best held-out epoch are returned.
pub fn train_model(config: &TrainConfig, samples: &[&Sample]) -> Result<TrainRun, ExperimentError> {
    let hp = &config.hyper;
    hp.validate()?;
    let labels: Vec<usize> = samples.iter().map(|s| s.class).collect();
    if inverse_frequency_weights(&labels).is_none() {
        return Err(ExperimentError::DegenerateTrainingSet);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (fit, held) = split_holdout(samples, hp.holdout_fraction, &mut rng);
    let fit_labels: Vec<usize> = fit.iter().map(|s| s.class).collect();
    let class_weights = match hp.class_weights {
        Some(w) => w,
        None => inverse_frequency_weights(&fit_labels).ok_or(ExperimentError::DegenerateTrainingSet)?,
    };

    let mut params = ModelParams::init(config.dims, &mut rng);
    let mut adam = AdamState::new(config.dims);
    let mut train_loss = Vec::with_capacity(hp.max_epochs);
    let mut holdout_loss = Vec::with_capacity(hp.max_epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut stopping_epoch = 0;

    for epoch in 1..=hp.max_epochs {
        stopping_epoch = epoch;
        let mut epoch_loss = 0.0;
        for idx in stratified_batches(&fit_labels, hp.batch_size, &mut rng) {
            let members: Vec<&Sample> = idx.iter().map(|&i| fit[i]).collect();
            let batch = make_batch(&members, config.mode)?;
            let (logits, trace) = model_forward(&params, hp, &batch, config.mode, true, &mut rng)?;
            let (loss, dlogits) = weighted_cross_entropy(logits.view(), &batch.labels, class_weights);
            let grads = backward(&params, &trace, &dlogits);
            adam_step(&mut params, &grads, &mut adam, hp);
            epoch_loss += loss * members.len() as f64;
        }
        train_loss.push(epoch_loss / fit.len() as f64);

        if held.is_empty() {
            continue;
        }
        let loss = eval_loss(&params, &held, config.mode, class_weights)?;
        holdout_loss.push(loss);
        match &best {
            Some((b, _, _)) if loss >= *b => {}
            _ => best = Some((loss, epoch, params.clone())),
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if epoch - best_epoch >= hp.patience {
            break;
        }
    }

    let (best_epoch, params) = match best {
        Some((_, e, p)) => (e, p),
        None => (stopping_epoch, params),
    };
    Ok(TrainRun {
        config: config.clone(),
        class_weights,
        train_loss,
        holdout_loss,
        stopping_epoch,
        best_epoch,
        holdout_subjects: held.iter().map(|s| s.subject_id.clone()).collect(),
        params,
    })
}
