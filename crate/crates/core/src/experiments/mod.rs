//! Cross-validated evaluation of the binary diagnostic tasks.

mod auc;
mod batching;
mod cv;
mod folds;
mod train;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use auc::{roc_auc, roc_curve, trapezoid, AucError};
pub use batching::stratified_batches;
pub use cv::{
    fold_seed, run_cv, run_cv_samples, sweep_layers, CvConfig, CvReport, FoldReport, LayerResult, LayerSweep,
    ReportConfig,
};
pub use folds::{stratified_kfold, FoldPlan};
pub use train::{infer_logits, make_batch, score, train_model, TrainConfig, TrainRun};

use crate::neuralcore::{AttentionMode, ModelError};
use crate::tensorio::{read_matrix, CohortManifest, Label, ManifestError, MatrixError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Matrix { path: String, source: MatrixError },
    #[error("subject {subject} has no {modality} matrix")]
    MissingModality { subject: String, modality: &'static str },
    #[error("{count} subjects cannot fill {folds} folds")]
    TooFewSubjects { count: usize, folds: usize },
    #[error("training data holds a single class")]
    DegenerateTrainingSet,
    #[error("task {task} needs both {neg} and {pos} subjects")]
    MissingTaskLabel { task: Task, neg: Label, pos: Label },
    #[error(transparent)]
    Auc(#[from] AucError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl ExperimentError {
    /// Errors caused by the input manifest rather than by the cohort's content.
    pub fn is_manifest_error(&self) -> bool {
        matches!(
            self,
            ExperimentError::Manifest(_) | ExperimentError::Matrix { .. } | ExperimentError::MissingModality { .. }
        )
    }

    /// Errors caused by too little or single-class data.
    pub fn is_degenerate_data(&self) -> bool {
        matches!(
            self,
            ExperimentError::TooFewSubjects { .. }
                | ExperimentError::DegenerateTrainingSet
                | ExperimentError::MissingTaskLabel { .. }
                | ExperimentError::Auc(AucError::SingleClass)
        )
    }
}

/// Binary discrimination task. The second label of each pair is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    /// NC vs MCI
    #[serde(rename = "nc-mci")]
    Onset,
    /// MCI vs AD
    #[serde(rename = "mci-ad")]
    Monitoring,
    /// NC vs AD
    #[serde(rename = "nc-ad")]
    Exclusion,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Onset, Task::Monitoring, Task::Exclusion];

    /// `(negative, positive)` labels.
    pub fn labels(self) -> (Label, Label) {
        match self {
            Task::Onset => (Label::Nc, Label::Mci),
            Task::Monitoring => (Label::Mci, Label::Ad),
            Task::Exclusion => (Label::Nc, Label::Ad),
        }
    }

    pub fn positive_label(self) -> Label {
        self.labels().1
    }

    /// Class index of `label` within this task, if it takes part.
    pub fn class_of(self, label: Label) -> Option<usize> {
        let (neg, pos) = self.labels();
        if label == neg {
            Some(0)
        } else if label == pos {
            Some(1)
        } else {
            None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Onset => "nc-mci",
            Task::Monitoring => "mci-ad",
            Task::Exclusion => "nc-ad",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown task {s:?} (expected nc-mci, mci-ad or nc-ad)"))
    }
}

/// One subject's embeddings, upcast to 64-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub subject_id: String,
    /// 0 = negative, 1 = positive class of the task.
    pub class: usize,
    pub text: Option<Array2<f64>>,
    pub audio: Option<Array2<f64>>,
}

/// Load the matrices a `mode` needs for the records taking part in `task`.
pub fn load_samples(manifest: &CohortManifest, task: Task, mode: AttentionMode) -> Result<Vec<Sample>, ExperimentError> {
    let load = |p: &std::path::Path| {
        read_matrix(p)
            .map(|m| m.to_array())
            .map_err(|source| ExperimentError::Matrix { path: p.display().to_string(), source })
    };
    let mut samples = Vec::new();
    for r in &manifest.records {
        let Some(class) = task.class_of(r.label) else { continue };
        let text = match mode {
            AttentionMode::SelfAudio => None,
            _ => Some(load(&r.text_matrix_path)?),
        };
        let audio = if mode.needs_audio() {
            let path = r.audio_matrix_path.as_ref().ok_or_else(|| ExperimentError::MissingModality {
                subject: r.subject_id.clone(),
                modality: "audio",
            })?;
            Some(load(path)?)
        } else {
            None
        };
        samples.push(Sample { subject_id: r.subject_id.clone(), class, text, audio });
    }
    let (neg, pos) = task.labels();
    for c in 0..2 {
        if !samples.iter().any(|s| s.class == c) {
            return Err(ExperimentError::MissingTaskLabel { task, neg, pos });
        }
    }
    Ok(samples)
}
