//! Synthetic cohorts with class-conditional pauses and embeddings.
//!
//! Each subject gets a word-timed transcript whose inter-word pauses are
//! log-normal, an enriched transcript under the cohort's pause scheme, a text
//! matrix with one row per enriched item, and an audio matrix with one row per
//! fixed-length window. Rows are Gaussian around a centre that depends on the
//! token kind (word, each pause token, disfluency) and, scaled by the
//! separation `δ`, on the subject's class. With `δ = 0` all classes share one
//! distribution.

use std::path::{Path, PathBuf};

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enrichment::{
    enrich, special_tokens, EnrichedDocument, EnrichedItem, EnrichedTranscript, Segment, SchemeId, TestKind, TimedTranscript,
    WordToken,
};
use crate::experiments::{Sample, Task};
use crate::tensorio::{
    write_manifest, write_matrix, CohortManifest, EmbeddingMatrix, Label, MatrixError, SampleRecord, EMBED_DIM,
    MANIFEST_SCHEMA_VERSION,
};

/// Gaps longer than this start a new VAD segment.
const SEGMENT_GAP_S: f64 = 1.0;
/// A trailing partial audio window is kept when at least this long.
const MIN_WINDOW_S: f64 = 1.0;

const VFT_WORDS: &[&str] = &[
    "Hund", "Katze", "Maus", "Pferd", "Kuh", "Schwein", "Löwe", "Tiger", "Elefant", "Giraffe", "Affe", "Bär",
    "Wolf", "Fuchs", "Hase", "Igel", "Adler", "Ente", "Gans", "Huhn", "Schaf", "Ziege", "Esel", "Zebra",
];
const PDT_WORDS: &[&str] = &[
    "da", "ist", "ein", "Berg", "und", "der", "Himmel", "die", "Sonne", "Wolken", "Baum", "ein", "Haus", "See",
    "Weg", "Wanderer", "oben", "unten", "grün", "auch", "äh", "also", "noch", "Hütte",
];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),
    #[error("I/O failure at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerClass<T> {
    pub nc: T,
    pub mci: T,
    pub ad: T,
}

impl<T: Copy> PerClass<T> {
    pub fn get(&self, label: Label) -> T {
        match label {
            Label::Nc => self.nc,
            Label::Mci => self.mci,
            Label::Ad => self.ad,
        }
    }
}

/// Shared pause and transcript-length model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PauseModel {
    /// Log-space mean of pause durations (seconds) for a severity-0 subject.
    pub mu: f64,
    /// Log-space standard deviation.
    pub sigma: f64,
    /// Poisson mean of words per subject.
    pub mean_words: f64,
    /// Probability that a word is flagged disfluent.
    pub disfluency_rate: f64,
    /// Shift of `mu` per unit of `separation × severity`.
    pub mu_shift: f64,
}

impl Default for PauseModel {
    fn default() -> Self {
        PauseModel { mu: (0.35f64).ln(), sigma: 0.7, mean_words: 16.0, disfluency_rate: 0.05, mu_shift: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingModel {
    /// Per-dimension standard deviation of rows around their centre.
    pub spread: f64,
    /// Per-dimension standard deviation of the token-kind centres.
    pub center_scale: f64,
    /// Audio window length in seconds.
    pub audio_window_s: f64,
}

impl Default for EmbeddingModel {
    fn default() -> Self {
        EmbeddingModel { spread: 1.0, center_scale: 1.0, audio_window_s: 2.0 }
    }
}

/// Everything that determines a generated cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortSpec {
    pub counts: PerClass<usize>,
    pub test: TestKind,
    /// Pause scheme for the text matrices; `None` leaves pauses out.
    pub scheme: Option<SchemeId>,
    pub include_disfluencies: bool,
    pub pause: PauseModel,
    pub embedding: EmbeddingModel,
    /// Class position on the separation axis.
    pub severity: PerClass<f64>,
    /// Class separation `δ ≥ 0`.
    pub separation: f64,
    /// Whether `δ` shifts pause durations.
    pub separate_pauses: bool,
    /// Whether `δ` shifts embedding centres.
    pub separate_embeddings: bool,
    pub with_audio: bool,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            counts: PerClass { nc: 82, mci: 58, ad: 65 },
            test: TestKind::Vft,
            scheme: Some(SchemeId::P3),
            include_disfluencies: false,
            pause: PauseModel::default(),
            embedding: EmbeddingModel::default(),
            severity: PerClass { nc: 0.0, mci: 1.0, ad: 2.0 },
            separation: 1.0,
            separate_pauses: true,
            separate_embeddings: true,
            with_audio: true,
            seed: 0,
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        for l in Label::ALL {
            let n = self.counts.get(l);
            if n != 0 && n < 5 {
                return bad(format!("{l} count {n} is below 5"));
            }
        }
        if Label::ALL.iter().filter(|&&l| self.counts.get(l) > 0).count() < 2 {
            return bad("at least two classes need subjects".into());
        }
        if !(self.pause.sigma > 0.0 && self.pause.sigma.is_finite()) {
            return bad(format!("pause sigma must be positive, got {}", self.pause.sigma));
        }
        if !self.pause.mu.is_finite() || !self.pause.mu_shift.is_finite() {
            return bad("pause mu and mu_shift must be finite".into());
        }
        if !(self.pause.mean_words >= 2.0 && self.pause.mean_words.is_finite()) {
            return bad("mean_words must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.pause.disfluency_rate) {
            return bad("disfluency_rate must lie in [0, 1]".into());
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return bad(format!("separation must be non-negative, got {}", self.separation));
        }
        let e = &self.embedding;
        if !(e.spread > 0.0 && e.center_scale >= 0.0 && e.audio_window_s >= MIN_WINDOW_S) {
            return bad("embedding spread must be positive and audio_window_s at least 1 s".into());
        }
        Ok(())
    }

    /// Log-normal pause parameters of `label`.
    pub fn pause_params(&self, label: Label) -> PauseParams {
        let shift = if self.separate_pauses { self.separation * self.severity.get(label) * self.pause.mu_shift } else { 0.0 };
        PauseParams { mu: self.pause.mu + shift, sigma: self.pause.sigma }
    }

    fn embedding_offset(&self, label: Label) -> f64 {
        if self.separate_embeddings {
            self.separation * self.severity.get(label)
        } else {
            0.0
        }
    }

    pub fn total(&self) -> usize {
        Label::ALL.iter().map(|&l| self.counts.get(l)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauseParams {
    pub mu: f64,
    pub sigma: f64,
}

/// `word_count − 1` log-normal pause durations.
pub fn sample_pause_durations<R: Rng + ?Sized>(params: PauseParams, word_count: usize, rng: &mut R) -> Vec<f64> {
    let dist = LogNormal::new(params.mu, params.sigma).expect("sigma > 0");
    (1..word_count).map(|_| dist.sample(rng)).collect()
}

/// Token-kind centres and class directions shared by all subjects.
struct Geometry {
    word: Array1<f64>,
    special: Vec<(&'static str, Array1<f64>)>,
    speech: Array1<f64>,
    silence: Array1<f64>,
    text_dir: Array1<f64>,
    audio_dir: Array1<f64>,
}

fn gaussian_vec<R: Rng>(rng: &mut R, scale: f64) -> Array1<f64> {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    Array1::from_shape_simple_fn(EMBED_DIM, || scale * n.sample(rng))
}

fn unit_vec<R: Rng>(rng: &mut R) -> Array1<f64> {
    let v = gaussian_vec(rng, 1.0);
    let norm = v.dot(&v).sqrt();
    v / norm
}

impl Geometry {
    fn new(spec: &CohortSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(0);
        let s = spec.embedding.center_scale;
        let word = gaussian_vec(&mut rng, s);
        let special = special_tokens().into_iter().map(|t| (t, gaussian_vec(&mut rng, s))).collect();
        let speech = gaussian_vec(&mut rng, s);
        let silence = gaussian_vec(&mut rng, s);
        let text_dir = unit_vec(&mut rng);
        let audio_dir = unit_vec(&mut rng);
        Geometry { word, special, speech, silence, text_dir, audio_dir }
    }

    fn center(&self, item: &EnrichedItem) -> &Array1<f64> {
        match item {
            EnrichedItem::Word(_) => &self.word,
            other => {
                let tok = other.as_str();
                &self.special.iter().find(|(t, _)| *t == tok).expect("known special token").1
            }
        }
    }
}

/// One generated subject, in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSubject {
    pub subject_id: String,
    pub label: Label,
    pub transcript: TimedTranscript,
    pub enriched: Option<EnrichedTranscript>,
    pub text: EmbeddingMatrix,
    pub audio: Option<EmbeddingMatrix>,
}

/// Class and within-class index of every subject ordinal.
fn roster(spec: &CohortSpec) -> Vec<(Label, usize)> {
    Label::ALL
        .iter()
        .flat_map(|&l| (0..spec.counts.get(l)).map(move |i| (l, i)))
        .collect()
}

fn timed_transcript<R: Rng>(spec: &CohortSpec, subject_id: &str, label: Label, rng: &mut R) -> TimedTranscript {
    let vocab = match spec.test {
        TestKind::Vft => VFT_WORDS,
        TestKind::Pdt => PDT_WORDS,
    };
    let poisson = Poisson::new(spec.pause.mean_words).expect("positive mean");
    let n_words = (poisson.sample(rng) as usize).max(2);
    let pauses = sample_pause_durations(spec.pause_params(label), n_words, rng);

    // times on a 10 ms grid, like recogniser output
    let mut t_cs: u64 = rng.random_range(10..50);
    let mut segments: Vec<Segment> = Vec::new();
    let mut current: Vec<WordToken> = Vec::new();
    for i in 0..n_words {
        let dur_cs: u64 = rng.random_range(25..=60);
        current.push(WordToken {
            text: vocab[rng.random_range(0..vocab.len())].to_owned(),
            start_s: t_cs as f64 / 100.0,
            end_s: (t_cs + dur_cs) as f64 / 100.0,
            disfluent: rng.random::<f64>() < spec.pause.disfluency_rate,
        });
        t_cs += dur_cs;
        if let Some(&p) = pauses.get(i) {
            let gap_cs = (p * 100.0).round().min(6000.0) as u64;
            if gap_cs as f64 / 100.0 > SEGMENT_GAP_S {
                segments.push(Segment { words: std::mem::take(&mut current) });
            }
            t_cs += gap_cs;
        }
    }
    segments.push(Segment { words: current });
    TimedTranscript { subject_id: subject_id.to_owned(), test: spec.test, segments }
}

fn plain_items(t: &TimedTranscript, with_disfl: bool) -> Vec<EnrichedItem> {
    let mut items = Vec::new();
    for w in t.words() {
        items.push(EnrichedItem::Word(w.text.clone()));
        if with_disfl && w.disfluent {
            items.push(EnrichedItem::Disfl);
        }
    }
    items
}

fn noisy_row<R: Rng>(center: &Array1<f64>, offset: &Array1<f64>, spread: f64, rng: &mut R, out: &mut Vec<f32>) {
    let n = Normal::new(0.0, spread).expect("spread > 0");
    for (c, o) in center.iter().zip(offset) {
        out.push((c + o + n.sample(rng)) as f32);
    }
}

/// Fraction of `[lo, hi)` not covered by any word.
fn silence_fraction(t: &TimedTranscript, lo: f64, hi: f64) -> f64 {
    let speech: f64 = t
        .words()
        .map(|w| (w.end_s.min(hi) - w.start_s.max(lo)).max(0.0))
        .sum();
    (1.0 - speech / (hi - lo)).clamp(0.0, 1.0)
}

fn generate_subject(spec: &CohortSpec, geo: &Geometry, ordinal: usize, label: Label, index: usize) -> GeneratedSubject {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(ordinal as u64 + 1);
    let subject_id = format!("{}-{:03}", label.as_str(), index + 1);
    let transcript = timed_transcript(spec, &subject_id, label, &mut rng);

    let enriched = spec.scheme.map(|id| enrich(&transcript, &id.scheme(), spec.include_disfluencies));
    let items = match &enriched {
        Some(e) => e.items.clone(),
        None => plain_items(&transcript, spec.include_disfluencies),
    };

    let spread = spec.embedding.spread;
    let text_offset = &geo.text_dir * spec.embedding_offset(label);
    let mut data = Vec::with_capacity(items.len() * EMBED_DIM);
    for item in &items {
        noisy_row(geo.center(item), &text_offset, spread, &mut rng, &mut data);
    }
    let text = EmbeddingMatrix::new(items.len(), EMBED_DIM, data).expect("finite rows");

    let audio = spec.with_audio.then(|| {
        let end = transcript.words().last().map_or(0.0, |w| w.end_s);
        let win = spec.embedding.audio_window_s;
        let mut bounds = Vec::new();
        let mut lo = 0.0;
        while lo < end {
            let hi = (lo + win).min(end);
            if hi - lo >= MIN_WINDOW_S || bounds.is_empty() {
                bounds.push((lo, hi.max(lo + MIN_WINDOW_S)));
            }
            lo += win;
        }
        let audio_offset = &geo.audio_dir * spec.embedding_offset(label);
        let mut data = Vec::with_capacity(bounds.len() * EMBED_DIM);
        for &(lo, hi) in &bounds {
            let f = silence_fraction(&transcript, lo, hi);
            let center = &geo.speech * (1.0 - f) + &geo.silence * f;
            noisy_row(&center, &audio_offset, spread, &mut rng, &mut data);
        }
        EmbeddingMatrix::new(bounds.len(), EMBED_DIM, data).expect("finite rows")
    });

    GeneratedSubject { subject_id, label, transcript, enriched, text, audio }
}

/// Generate all subjects in memory. Each subject draws from its own stream of
/// the seeded generator, so the result does not depend on scheduling.
pub fn generate_subjects(spec: &CohortSpec) -> Result<Vec<GeneratedSubject>, SynthError> {
    spec.validate()?;
    let geo = Geometry::new(spec);
    Ok(roster(spec)
        .into_par_iter()
        .enumerate()
        .map(|(ordinal, (label, index))| generate_subject(spec, &geo, ordinal, label, index))
        .collect())
}

/// Upcast generated subjects into training samples for `task`.
pub fn to_samples(subjects: &[GeneratedSubject], task: Task) -> Vec<Sample> {
    subjects
        .iter()
        .filter_map(|s| {
            task.class_of(s.label).map(|class| Sample {
                subject_id: s.subject_id.clone(),
                class,
                text: Some(s.text.to_array()),
                audio: s.audio.as_ref().map(EmbeddingMatrix::to_array),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GeneratedCohort {
    pub manifest_path: PathBuf,
    pub manifest: CohortManifest,
    pub subjects: Vec<GeneratedSubject>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io { path: path.to_path_buf(), source }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), SynthError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| io_err(path)(std::io::Error::other(e)))?;
    s.push('\n');
    std::fs::write(path, s).map_err(io_err(path))
}

/// Generate a cohort and write it under `out_dir`:
/// `manifest.json`, `transcripts/`, `enriched/`, `text/` and `audio/`.
/// Manifest paths are relative to `out_dir`.
pub fn generate_cohort(spec: &CohortSpec, out_dir: &Path) -> Result<GeneratedCohort, SynthError> {
    let subjects = generate_subjects(spec)?;
    for sub in ["transcripts", "enriched", "text", "audio"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let mut records = Vec::with_capacity(subjects.len());
    for s in &subjects {
        let id = &s.subject_id;
        let tpath = out_dir.join("transcripts").join(format!("{id}.json"));
        write_json(&s.transcript.to_document(), &tpath)?;

        let enriched_rel = match &s.enriched {
            Some(e) => {
                let rel = PathBuf::from("enriched").join(format!("{id}.json"));
                write_json(&EnrichedDocument::new(e, spec.include_disfluencies), &out_dir.join(&rel))?;
                Some(rel)
            }
            None => None,
        };

        let text_rel = PathBuf::from("text").join(format!("{id}.pemb"));
        write_matrix(&s.text, out_dir.join(&text_rel))?;
        let audio_rel = match &s.audio {
            Some(a) => {
                let rel = PathBuf::from("audio").join(format!("{id}.pemb"));
                write_matrix(a, out_dir.join(&rel))?;
                Some(rel)
            }
            None => None,
        };
        records.push(SampleRecord {
            subject_id: id.clone(),
            label: s.label,
            test: spec.test,
            text_matrix_path: text_rel,
            audio_matrix_path: audio_rel,
            enriched_transcript_path: enriched_rel,
        });
    }
    let manifest = CohortManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        scheme: spec.scheme,
        include_disfluencies: spec.include_disfluencies,
        records,
    };
    let manifest_path = out_dir.join("manifest.json");
    write_manifest(&manifest, &manifest_path).map_err(io_err(&manifest_path))?;
    Ok(GeneratedCohort { manifest_path, manifest, subjects })
}

/// Per-subject mean pause duration (seconds), over all word gaps.
pub fn mean_pause(t: &TimedTranscript) -> f64 {
    let p = crate::enrichment::extract_pauses(t);
    if p.is_empty() {
        0.0
    } else {
        p.iter().map(|e| e.duration_s).sum::<f64>() / p.len() as f64
    }
}
