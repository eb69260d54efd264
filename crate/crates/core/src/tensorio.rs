//! `.pemb` embedding matrices and cohort manifests.
//!
//! Matrix layout (all integers little-endian):
//!
//! | offset | size | content                         |
//! |--------|------|---------------------------------|
//! | 0      | 4    | magic `PEMB`                    |
//! | 4      | 4    | version, u32 = 1                |
//! | 8      | 4    | rows, u32                       |
//! | 12     | 4    | cols, u32 (= 768)               |
//! | 16     | 4·rows·cols | f32 payload, row-major   |

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enrichment::{SchemeId, TestKind};

pub const MATRIX_MAGIC: [u8; 4] = *b"PEMB";
pub const MATRIX_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;
/// Feature width of every text and audio embedding.
pub const EMBED_DIM: usize = 768;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("I/O failure: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}, expected \"PEMB\"")]
    BadMagic([u8; 4]),
    #[error("unsupported matrix version {0}")]
    UnsupportedVersion(u32),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },
    #[error("trailing bytes after payload")]
    TrailingData,
    #[error("matrix has {0} columns, expected 768")]
    DimensionMismatch(usize),
    #[error("matrix has no rows")]
    Empty,
    #[error("non-finite value at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },
    #[error("data length {len} does not match {rows}x{cols}")]
    Shape { rows: usize, cols: usize, len: usize },
}

/// A validated `rows × 768` matrix of finite 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, MatrixError> {
        if cols != EMBED_DIM {
            return Err(MatrixError::DimensionMismatch(cols));
        }
        if rows == 0 {
            return Err(MatrixError::Empty);
        }
        if data.len() != rows * cols {
            return Err(MatrixError::Shape { rows, cols, len: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite { row: i / cols, col: i % cols });
        }
        Ok(EmbeddingMatrix { rows, data })
    }

    pub fn zeros(rows: usize) -> Result<Self, MatrixError> {
        Self::new(rows, EMBED_DIM, vec![0.0; rows * EMBED_DIM])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        EMBED_DIM
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * EMBED_DIM..(r + 1) * EMBED_DIM]
    }

    /// Upcast to a 64-bit `rows × 768` array.
    pub fn to_array(&self) -> ndarray::Array2<f64> {
        ndarray::Array2::from_shape_fn((self.rows, EMBED_DIM), |(r, c)| {
            f64::from(self.data[r * EMBED_DIM + c])
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixHeader {
    pub version: u32,
    pub rows: usize,
    pub cols: usize,
}

fn encode_header(rows: usize, cols: usize) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(&MATRIX_MAGIC);
    h[4..8].copy_from_slice(&MATRIX_VERSION.to_le_bytes());
    h[8..12].copy_from_slice(&(rows as u32).to_le_bytes());
    h[12..16].copy_from_slice(&(cols as u32).to_le_bytes());
    h
}

pub fn encode_matrix(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.data.len() * 4);
    out.extend_from_slice(&encode_header(m.rows, EMBED_DIM));
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_matrix_to<W: Write>(m: &EmbeddingMatrix, mut w: W) -> Result<(), MatrixError> {
    w.write_all(&encode_matrix(m))?;
    w.flush()?;
    Ok(())
}

pub fn write_matrix(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<(), MatrixError> {
    let file = File::create(path)?;
    write_matrix_to(m, BufWriter::new(file))
}

fn read_header_from<R: Read>(r: &mut R) -> Result<MatrixHeader, MatrixError> {
    let mut h = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        let n = r.read(&mut h[got..])?;
        if n == 0 {
            break;
        }
        got += n;
    }
    if got < 4 || h[0..4] != MATRIX_MAGIC {
        let mut magic = [0u8; 4];
        magic[..got.min(4)].copy_from_slice(&h[..got.min(4)]);
        return Err(MatrixError::BadMagic(magic));
    }
    if got < HEADER_LEN {
        return Err(MatrixError::TruncatedPayload {
            expected: HEADER_LEN as u64,
            found: got as u64,
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes([h[o], h[o + 1], h[o + 2], h[o + 3]]);
    let version = u32_at(4);
    if version != MATRIX_VERSION {
        return Err(MatrixError::UnsupportedVersion(version));
    }
    let rows = u32_at(8) as usize;
    let cols = u32_at(12) as usize;
    if cols != EMBED_DIM {
        return Err(MatrixError::DimensionMismatch(cols));
    }
    if rows == 0 {
        return Err(MatrixError::Empty);
    }
    Ok(MatrixHeader { version, rows, cols })
}

/// Read and validate a matrix. The payload buffer grows only as bytes
/// actually arrive, so an inflated row count cannot trigger a large allocation.
pub fn read_matrix_from<R: Read>(mut r: R) -> Result<EmbeddingMatrix, MatrixError> {
    let header = read_header_from(&mut r)?;
    let expected = (header.rows as u64) * (header.cols as u64) * 4;
    let mut payload = Vec::new();
    (&mut r).take(expected).read_to_end(&mut payload)?;
    if (payload.len() as u64) < expected {
        return Err(MatrixError::TruncatedPayload {
            expected,
            found: payload.len() as u64,
        });
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(MatrixError::TrailingData);
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingMatrix::new(header.rows, header.cols, data)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, MatrixError> {
    read_matrix_from(BufReader::new(File::open(path)?))
}

/// Validate header and file length without loading the payload.
pub fn read_matrix_header(path: impl AsRef<Path>) -> Result<MatrixHeader, MatrixError> {
    let mut f = File::open(&path)?;
    let header = read_header_from(&mut f)?;
    let len = f.metadata()?.len();
    let expected = (header.rows as u64) * (header.cols as u64) * 4;
    let found = len.saturating_sub(HEADER_LEN as u64);
    if found < expected {
        return Err(MatrixError::TruncatedPayload { expected, found });
    }
    if found > expected {
        return Err(MatrixError::TrailingData);
    }
    Ok(header)
}

/// Diagnostic group of a subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "NC")]
    Nc,
    #[serde(rename = "MCI")]
    Mci,
    #[serde(rename = "AD")]
    Ad,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Nc, Label::Mci, Label::Ad];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Nc => "NC",
            Label::Mci => "MCI",
            Label::Ad => "AD",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub subject_id: String,
    pub label: Label,
    pub test: TestKind,
    pub text_matrix_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_matrix_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enriched_transcript_path: Option<PathBuf>,
}

/// A set of subject records. Relative paths in the on-disk document are
/// resolved against the manifest's directory when loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortManifest {
    pub schema_version: u32,
    /// Pause scheme used to build the text matrices; `None` for plain transcripts.
    pub scheme: Option<SchemeId>,
    #[serde(default)]
    pub include_disfluencies: bool,
    pub records: Vec<SampleRecord>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("record {subject_id}: referenced file {path} does not exist")]
    DanglingPath { subject_id: String, path: PathBuf },
    #[error("record {subject_id}: invalid matrix {path}: {source}")]
    InvalidMatrix {
        subject_id: String,
        path: PathBuf,
        source: MatrixError,
    },
    #[error("subject {0} appears more than once")]
    DuplicateSubject(String),
}

impl CohortManifest {
    pub fn labels(&self) -> Vec<Label> {
        let mut l: Vec<Label> = self.records.iter().map(|r| r.label).collect();
        l.sort();
        l.dedup();
        l
    }

    pub fn has_audio(&self) -> bool {
        self.records.iter().all(|r| r.audio_matrix_path.is_some())
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Load and validate a manifest. Every referenced matrix must exist and carry
/// a valid header; returned records carry resolved paths.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<CohortManifest, ManifestError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&bytes, base)
}

pub fn parse_manifest(bytes: &[u8], base: &Path) -> Result<CohortManifest, ManifestError> {
    let mut m: CohortManifest =
        serde_json::from_slice(bytes).map_err(|e| ManifestError::MalformedManifest(e.to_string()))?;
    if m.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(ManifestError::MalformedManifest(format!(
            "unsupported schema_version {}",
            m.schema_version
        )));
    }
    if m.records.is_empty() {
        return Err(ManifestError::MalformedManifest("no records".into()));
    }
    let mut seen = HashSet::new();
    for r in &mut m.records {
        if r.subject_id.is_empty() {
            return Err(ManifestError::MalformedManifest("empty subject_id".into()));
        }
        if !seen.insert(r.subject_id.clone()) {
            return Err(ManifestError::DuplicateSubject(r.subject_id.clone()));
        }
        r.text_matrix_path = resolve(base, &r.text_matrix_path);
        check_matrix(&r.subject_id, &r.text_matrix_path)?;
        if let Some(a) = r.audio_matrix_path.take() {
            let a = resolve(base, &a);
            check_matrix(&r.subject_id, &a)?;
            r.audio_matrix_path = Some(a);
        }
        if let Some(e) = r.enriched_transcript_path.take() {
            let e = resolve(base, &e);
            if !e.exists() {
                return Err(ManifestError::DanglingPath {
                    subject_id: r.subject_id.clone(),
                    path: e,
                });
            }
            r.enriched_transcript_path = Some(e);
        }
    }
    Ok(m)
}

fn check_matrix(subject_id: &str, path: &Path) -> Result<(), ManifestError> {
    if !path.exists() {
        return Err(ManifestError::DanglingPath {
            subject_id: subject_id.to_owned(),
            path: path.to_path_buf(),
        });
    }
    read_matrix_header(path).map_err(|source| ManifestError::InvalidMatrix {
        subject_id: subject_id.to_owned(),
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

pub fn write_manifest(m: &CohortManifest, path: impl AsRef<Path>) -> io::Result<()> {
    let mut s = serde_json::to_string_pretty(m).map_err(io::Error::other)?;
    s.push('\n');
    std::fs::write(path, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(rows: usize) -> EmbeddingMatrix {
        let data = (0..rows * EMBED_DIM).map(|i| i as f32 * 0.25 - 7.0).collect();
        EmbeddingMatrix::new(rows, EMBED_DIM, data).unwrap()
    }

    #[test]
    fn zero_matrix_size() {
        let bytes = encode_matrix(&EmbeddingMatrix::zeros(1).unwrap());
        assert_eq!(bytes.len(), 16 + 3072);
        assert_eq!(&bytes[0..4], b"PEMB");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[0, 3, 0, 0]);
    }

    #[test]
    fn round_trip() {
        let m = ramp(2);
        let back = read_matrix_from(&encode_matrix(&m)[..]).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_non_finite() {
        let mut data = vec![0.0f32; EMBED_DIM];
        data[5] = f32::NAN;
        assert!(matches!(
            EmbeddingMatrix::new(1, EMBED_DIM, data),
            Err(MatrixError::NonFinite { row: 0, col: 5 })
        ));
    }

    #[test]
    fn read_errors() {
        let mut bytes = encode_matrix(&ramp(2));
        bytes[0] = b'X';
        assert!(matches!(read_matrix_from(&bytes[..]), Err(MatrixError::BadMagic(_))));

        let mut bytes = encode_matrix(&ramp(2));
        bytes[4] = 2;
        assert!(matches!(
            read_matrix_from(&bytes[..]),
            Err(MatrixError::UnsupportedVersion(2))
        ));

        let mut bytes = encode_matrix(&ramp(2));
        bytes[8] = 3;
        assert!(matches!(
            read_matrix_from(&bytes[..]),
            Err(MatrixError::TruncatedPayload { expected: 9216, found: 6144 })
        ));

        let mut bytes = encode_matrix(&ramp(1));
        bytes[12..16].copy_from_slice(&512u32.to_le_bytes());
        assert!(matches!(
            read_matrix_from(&bytes[..]),
            Err(MatrixError::DimensionMismatch(512))
        ));

        let mut bytes = encode_matrix(&ramp(1));
        bytes.push(0);
        assert!(matches!(read_matrix_from(&bytes[..]), Err(MatrixError::TrailingData)));

        assert!(matches!(read_matrix_from(&b"PE"[..]), Err(MatrixError::BadMagic(_))));
    }

    #[test]
    fn valid_five_rows() {
        let m = read_matrix_from(&encode_matrix(&ramp(5))[..]).unwrap();
        assert_eq!(m.rows(), 5);
        assert_eq!(m.cols(), 768);
    }

    #[test]
    fn inflated_row_count_fails_cleanly() {
        let mut bytes = encode_matrix(&ramp(1));
        bytes[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            read_matrix_from(&bytes[..]),
            Err(MatrixError::TruncatedPayload { .. })
        ));
    }
}
