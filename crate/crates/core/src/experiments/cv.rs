use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use super::auc::{roc_curve, trapezoid};
use super::folds::stratified_kfold;
use super::train::{score, train_model, TrainConfig};
use super::{load_samples, ExperimentError, Sample, Task};
use crate::enrichment::SchemeId;
use crate::neuralcore::{AttentionMode, HyperParams, ModelDims};
use crate::tensorio::CohortManifest;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvConfig {
    pub task: Task,
    pub mode: AttentionMode,
    pub folds: usize,
    pub seed: u64,
    pub hyper: HyperParams,
    pub dims: ModelDims,
}

impl CvConfig {
    pub fn new(task: Task, mode: AttentionMode, folds: usize, seed: u64) -> Self {
        CvConfig { task, mode, folds, seed, hyper: HyperParams::default(), dims: ModelDims::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportConfig {
    #[serde(flatten)]
    pub cv: CvConfig,
    pub negative_label: String,
    pub positive_label: String,
    pub scheme: Option<SchemeId>,
    pub include_disfluencies: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub seed: u64,
    pub test_subjects: Vec<String>,
    pub holdout_subjects: Vec<String>,
    pub auc: f64,
    pub roc: Vec<(f64, f64)>,
    pub class_weights: [f64; 2],
    pub train_loss: Vec<f64>,
    pub holdout_loss: Vec<f64>,
    pub stopping_epoch: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub config: ReportConfig,
    pub subjects: usize,
    pub class_counts: [usize; 2],
    pub folds: Vec<FoldReport>,
    pub mean_auc: f64,
}

impl CvReport {
    pub fn fold_aucs(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.auc).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }
}

/// Seed for fold `fold`, decorrelated from neighbouring base seeds.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Cross-validate on already-loaded samples.
pub fn run_cv_samples(
    config: &CvConfig,
    samples: &[Sample],
    scheme: Option<SchemeId>,
    include_disfluencies: bool,
) -> Result<CvReport, ExperimentError> {
    let subjects: Vec<(String, usize)> = samples.iter().map(|s| (s.subject_id.clone(), s.class)).collect();
    let plan = stratified_kfold(&subjects, config.folds, config.seed)?;
    let by_id: HashMap<&str, &Sample> = samples.iter().map(|s| (s.subject_id.as_str(), s)).collect();

    let folds: Vec<FoldReport> = (0..config.folds)
        .into_par_iter()
        .map(|fold| -> Result<FoldReport, ExperimentError> {
            let train: Vec<&Sample> = plan.train_ids(fold, &subjects).iter().map(|id| by_id[id]).collect();
            let test: Vec<&Sample> = plan.test_sets[fold].iter().map(|id| by_id[id.as_str()]).collect();
            let seed = fold_seed(config.seed, fold);
            let tc = TrainConfig {
                task: config.task,
                mode: config.mode,
                seed,
                hyper: config.hyper.clone(),
                dims: config.dims,
            };
            let run = train_model(&tc, &train)?;
            let scores = score(&run.params, &test, config.mode)?;
            let labels: Vec<bool> = test.iter().map(|s| s.class == 1).collect();
            let roc = roc_curve(&scores, &labels)?;
            Ok(FoldReport {
                fold,
                seed,
                test_subjects: plan.test_sets[fold].clone(),
                holdout_subjects: run.holdout_subjects,
                auc: trapezoid(&roc),
                roc,
                class_weights: run.class_weights,
                train_loss: run.train_loss,
                holdout_loss: run.holdout_loss,
                stopping_epoch: run.stopping_epoch,
                best_epoch: run.best_epoch,
            })
        })
        .collect::<Result<_, _>>()?;

    let mean_auc = folds.iter().map(|f| f.auc).sum::<f64>() / folds.len() as f64;
    let mut class_counts = [0usize; 2];
    for s in samples {
        class_counts[s.class] += 1;
    }
    let (neg, pos) = config.task.labels();
    Ok(CvReport {
        config: ReportConfig {
            cv: config.clone(),
            negative_label: neg.to_string(),
            positive_label: pos.to_string(),
            scheme,
            include_disfluencies,
        },
        subjects: samples.len(),
        class_counts,
        folds,
        mean_auc,
    })
}

/// Load the task's records from `manifest` and cross-validate.
pub fn run_cv(config: &CvConfig, manifest: &CohortManifest) -> Result<CvReport, ExperimentError> {
    let samples = load_samples(manifest, config.task, config.mode)?;
    run_cv_samples(config, &samples, manifest.scheme, manifest.include_disfluencies)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerResult {
    pub layer: u32,
    pub fold_aucs: Vec<f64>,
    pub mean_auc: f64,
}

/// Results of one cross-validation per audio layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSweep {
    pub layers: Vec<LayerResult>,
    pub best_layer: u32,
    /// The best layer is picked on the same test folds it is reported on,
    /// so its mean AUC is an optimistic estimate.
    pub best_selected_on_test_folds: bool,
}

/// Run [`run_cv`] once per layer-tagged manifest and flag the best mean AUC
/// (earliest layer on ties).
pub fn sweep_layers(config: &CvConfig, manifests: &[(u32, CohortManifest)]) -> Result<LayerSweep, ExperimentError> {
    if manifests.is_empty() {
        return Err(ExperimentError::InvalidConfig("layer sweep needs at least one manifest".into()));
    }
    let mut layers = Vec::with_capacity(manifests.len());
    for (layer, m) in manifests {
        let r = run_cv(config, m)?;
        layers.push(LayerResult { layer: *layer, fold_aucs: r.fold_aucs(), mean_auc: r.mean_auc });
    }
    let best = layers
        .iter()
        .fold(&layers[0], |b, l| if l.mean_auc > b.mean_auc { l } else { b })
        .layer;
    Ok(LayerSweep { layers, best_layer: best, best_selected_on_test_folds: true })
}
