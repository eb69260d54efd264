use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::tensorio::EMBED_DIM;

pub const NUM_CLASSES: usize = 2;
pub const DEFAULT_HIDDEN: usize = 512;

pub const MODEL_MAGIC: [u8; 4] = *b"PEMM";
pub const MODEL_VERSION: u32 = 1;

/// Widths of the classifier. Production models use 768/512; tests use tiny ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_model: usize,
    pub hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims { d_model: EMBED_DIM, hidden: DEFAULT_HIDDEN }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub dropout_rate: f64,
    pub activation: Activation,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Per-class loss weights; derived from class frequencies when absent.
    pub class_weights: Option<[f64; NUM_CLASSES]>,
    /// Fraction of each training split held out for early stopping.
    pub holdout_fraction: f64,
    /// Epochs without held-out improvement before training stops.
    pub patience: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            learning_rate: 5e-5,
            batch_size: 8,
            max_epochs: 20,
            dropout_rate: 0.1,
            activation: Activation::Relu,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            class_weights: None,
            holdout_fraction: 0.1,
            patience: 3,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let in_unit = |x: f64| x > 0.0 && x < 1.0;
        let ok = in_unit(self.learning_rate)
            && (0.0..1.0).contains(&self.dropout_rate)
            && in_unit(self.adam_beta1)
            && in_unit(self.adam_beta2)
            && self.adam_eps > 0.0
            && self.batch_size > 0
            && self.max_epochs > 0
            && (0.0..1.0).contains(&self.holdout_fraction)
            && self
                .class_weights
                .is_none_or(|w| w.iter().all(|&x| x > 0.0 && x.is_finite()));
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidHyperParams(format!("{self:?}")))
        }
    }
}

/// All trainable tensors. Weight matrices are stored `in × out` and applied
/// to row vectors (`x · W + b`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln_gain: Array1<f64>,
    pub ln_bias: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Serialisation and optimiser order of the parameter tensors.
pub const TENSOR_NAMES: [&str; 14] = [
    "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln_gain", "ln_bias", "w1", "b1", "w2", "b2",
];

fn xavier<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-a..a))
}

impl ModelParams {
    /// Zero-valued parameters (layer-norm gain included).
    pub fn zeros(dims: ModelDims) -> Self {
        let (d, h) = (dims.d_model, dims.hidden);
        ModelParams {
            wq: Array2::zeros((d, d)),
            bq: Array1::zeros(d),
            wk: Array2::zeros((d, d)),
            bk: Array1::zeros(d),
            wv: Array2::zeros((d, d)),
            bv: Array1::zeros(d),
            wo: Array2::zeros((d, d)),
            bo: Array1::zeros(d),
            ln_gain: Array1::zeros(d),
            ln_bias: Array1::zeros(d),
            w1: Array2::zeros((d, h)),
            b1: Array1::zeros(h),
            w2: Array2::zeros((h, NUM_CLASSES)),
            b2: Array1::zeros(NUM_CLASSES),
        }
    }

    /// Uniform Glorot weights, zero biases, unit layer-norm gain.
    pub fn init<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Self {
        let (d, h) = (dims.d_model, dims.hidden);
        let mut p = Self::zeros(dims);
        p.wq = xavier(rng, d, d);
        p.wk = xavier(rng, d, d);
        p.wv = xavier(rng, d, d);
        p.wo = xavier(rng, d, d);
        p.w1 = xavier(rng, d, h);
        p.w2 = xavier(rng, h, NUM_CLASSES);
        p.ln_gain.fill(1.0);
        p
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims { d_model: self.wq.nrows(), hidden: self.w1.ncols() }
    }

    pub fn tensors(&self) -> [&[f64]; 14] {
        fn s(a: Option<&[f64]>) -> &[f64] {
            a.expect("parameter tensors are contiguous")
        }
        [
            s(self.wq.as_slice()),
            s(self.bq.as_slice()),
            s(self.wk.as_slice()),
            s(self.bk.as_slice()),
            s(self.wv.as_slice()),
            s(self.bv.as_slice()),
            s(self.wo.as_slice()),
            s(self.bo.as_slice()),
            s(self.ln_gain.as_slice()),
            s(self.ln_bias.as_slice()),
            s(self.w1.as_slice()),
            s(self.b1.as_slice()),
            s(self.w2.as_slice()),
            s(self.b2.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 14] {
        fn s(a: Option<&mut [f64]>) -> &mut [f64] {
            a.expect("parameter tensors are contiguous")
        }
        [
            s(self.wq.as_slice_mut()),
            s(self.bq.as_slice_mut()),
            s(self.wk.as_slice_mut()),
            s(self.bk.as_slice_mut()),
            s(self.wv.as_slice_mut()),
            s(self.bv.as_slice_mut()),
            s(self.wo.as_slice_mut()),
            s(self.bo.as_slice_mut()),
            s(self.ln_gain.as_slice_mut()),
            s(self.ln_bias.as_slice_mut()),
            s(self.w1.as_slice_mut()),
            s(self.b1.as_slice_mut()),
            s(self.w2.as_slice_mut()),
            s(self.b2.as_slice_mut()),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Write a trained model: `PEMM`, version, d_model, hidden, classes and
/// metadata length (all u32 LE), the hyper-parameters as UTF-8 JSON, then
/// every tensor in [`TENSOR_NAMES`] order as f64 LE, row-major.
pub fn write_model_to<W: Write>(params: &ModelParams, hp: &HyperParams, mut w: W) -> io::Result<()> {
    let dims = params.dims();
    let meta = serde_json::to_vec(hp).map_err(io::Error::other)?;
    w.write_all(&MODEL_MAGIC)?;
    for v in [
        MODEL_VERSION,
        dims.d_model as u32,
        dims.hidden as u32,
        NUM_CLASSES as u32,
        meta.len() as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&meta)?;
    for t in params.tensors() {
        for v in t {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn write_model(params: &ModelParams, hp: &HyperParams, path: impl AsRef<Path>) -> io::Result<()> {
    write_model_to(params, hp, BufWriter::new(File::create(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelHeader {
    pub version: u32,
    pub dims: ModelDims,
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ModelError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| ModelError::BadModelFile("truncated header".into()))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_model_from<R: Read>(mut r: R) -> Result<(ModelHeader, ModelParams, HyperParams), ModelError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| ModelError::BadModelFile("truncated header".into()))?;
    if magic != MODEL_MAGIC {
        return Err(ModelError::BadModelFile("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != MODEL_VERSION {
        return Err(ModelError::BadModelFile(format!("unsupported version {version}")));
    }
    let d_model = read_u32(&mut r)? as usize;
    let hidden = read_u32(&mut r)? as usize;
    let classes = read_u32(&mut r)? as usize;
    if classes != NUM_CLASSES || d_model == 0 || hidden == 0 {
        return Err(ModelError::BadModelFile(format!(
            "unsupported shape d_model={d_model} hidden={hidden} classes={classes}"
        )));
    }
    let meta_len = read_u32(&mut r)? as u64;
    let mut meta = Vec::new();
    (&mut r).take(meta_len).read_to_end(&mut meta)?;
    if meta.len() as u64 != meta_len {
        return Err(ModelError::BadModelFile("truncated metadata".into()));
    }
    let hp: HyperParams = serde_json::from_slice(&meta)
        .map_err(|e| ModelError::BadModelFile(format!("metadata: {e}")))?;
    let dims = ModelDims { d_model, hidden };
    let mut params = ModelParams::zeros(dims);
    let mut buf = [0u8; 8];
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            r.read_exact(&mut buf)
                .map_err(|_| ModelError::BadModelFile("truncated tensor payload".into()))?;
            *v = f64::from_le_bytes(buf);
        }
    }
    Ok((ModelHeader { version, dims }, params, hp))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<(ModelHeader, ModelParams, HyperParams), ModelError> {
    read_model_from(BufReader::new(File::open(path)?))
}
