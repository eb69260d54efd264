//! C bindings for pausebench.
//!
//! Every fallible function returns a [`PbStatus`]; on failure a message is
//! available from [`pb_last_error`] on the same thread. Objects are handed out
//! as opaque pointers and released with their `_free` function. Strings
//! returned through `char **` out-parameters are owned by the caller and
//! released with [`pb_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::OnceLock;

use pausebench::enrichment::{
    bin_pause, enrich, extract_pauses, parse_timed_transcript, render, special_tokens, SchemeId, TimedTranscript,
    TranscriptError,
};
use pausebench::experiments::{roc_auc, AucError};
use pausebench::neuralcore::grad_check;
use pausebench::tensorio::{read_matrix, write_matrix, EmbeddingMatrix, MatrixError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidTiming = 4,
    EmptyTranscript = 5,
    IoError = 6,
    FormatError = 7,
    InvalidArgument = 8,
    SingleClass = 9,
    VerificationFailed = 10,
    Panic = 11,
}

/// Word-timed transcript.
pub struct PbTranscript {
    inner: TimedTranscript,
}

/// Embedding matrix of 32-bit floats, row-major.
pub struct PbMatrix {
    inner: EmbeddingMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: PbStatus, msg: impl Into<String>) -> PbStatus {
    set_error(msg);
    status
}

/// Run `f`, turning a panic into [`PbStatus::Panic`].
fn guard(f: impl FnOnce() -> PbStatus) -> PbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(PbStatus::Panic, "internal panic"),
    }
}

fn transcript_status(e: &TranscriptError) -> PbStatus {
    match e {
        TranscriptError::MalformedDocument(_) => PbStatus::ParseError,
        TranscriptError::InvalidTiming(_) => PbStatus::InvalidTiming,
        TranscriptError::EmptyTranscript => PbStatus::EmptyTranscript,
    }
}

fn matrix_status(e: &MatrixError) -> PbStatus {
    match e {
        MatrixError::Io(_) => PbStatus::IoError,
        _ => PbStatus::FormatError,
    }
}

unsafe fn str_arg<'a>(s: *const c_char) -> Result<&'a str, PbStatus> {
    if s.is_null() {
        return Err(fail(PbStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(PbStatus::InvalidUtf8, "argument is not valid UTF-8"))
}

fn scheme_arg(s: &str) -> Result<SchemeId, PbStatus> {
    s.parse().map_err(|e: String| fail(PbStatus::InvalidArgument, e))
}

fn nul_terminated(token: &str) -> *const c_char {
    static TABLE: OnceLock<Vec<(&'static str, CString)>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        special_tokens().into_iter().map(|t| (t, CString::new(t).expect("no interior NUL"))).collect()
    });
    table.iter().find(|(t, _)| *t == token).map_or(ptr::null(), |(_, c)| c.as_ptr())
}

/// Message describing the last failure on this thread. Valid until the next
/// call into this library from the same thread.
#[no_mangle]
pub extern "C" fn pb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a transcript JSON document of `len` bytes.
///
/// # Safety
/// `json` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_transcript_parse(json: *const u8, len: usize, out: *mut *mut PbTranscript) -> PbStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(PbStatus::NullPointer, "null argument");
        }
        let bytes = std::slice::from_raw_parts(json, len);
        match parse_timed_transcript(bytes) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(PbTranscript { inner: t }));
                PbStatus::Ok
            }
            Err(e) => fail(transcript_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `t` must be null or a live transcript handle.
#[no_mangle]
pub unsafe extern "C" fn pb_transcript_free(t: *mut PbTranscript) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of words; 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live transcript handle.
#[no_mangle]
pub unsafe extern "C" fn pb_transcript_word_count(t: *const PbTranscript) -> usize {
    t.as_ref().map_or(0, |t| t.inner.word_count())
}

/// Number of gaps between consecutive words; 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live transcript handle.
#[no_mangle]
pub unsafe extern "C" fn pb_transcript_pause_count(t: *const PbTranscript) -> usize {
    t.as_ref().map_or(0, |t| extract_pauses(&t.inner).len())
}

/// Enrich with `scheme` ("p1" … "p4", "p3-disfl") and return the rendered
/// token string in `*out_text`.
///
/// # Safety
/// `t` must be a live handle, `scheme` a NUL-terminated string, `out_text` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_transcript_enrich(
    t: *const PbTranscript,
    scheme: *const c_char,
    include_disfluencies: bool,
    out_text: *mut *mut c_char,
) -> PbStatus {
    guard(|| {
        let Some(t) = t.as_ref() else { return fail(PbStatus::NullPointer, "null transcript") };
        if out_text.is_null() {
            return fail(PbStatus::NullPointer, "null output pointer");
        }
        let id = match str_arg(scheme).and_then(scheme_arg) {
            Ok(id) => id,
            Err(s) => return s,
        };
        let text = render(&enrich(&t.inner, &id.scheme(), include_disfluencies));
        match CString::new(text) {
            Ok(c) => {
                *out_text = c.into_raw();
                PbStatus::Ok
            }
            Err(_) => fail(PbStatus::FormatError, "transcript contains a NUL byte"),
        }
    })
}

/// Token for a pause of `duration_s` seconds under `scheme`. `*out_token` is
/// set to a static string, or to null when the pause is below the scheme
/// minimum.
///
/// # Safety
/// `scheme` must be a NUL-terminated string and `out_token` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_bin_pause(scheme: *const c_char, duration_s: f64, out_token: *mut *const c_char) -> PbStatus {
    guard(|| {
        if out_token.is_null() {
            return fail(PbStatus::NullPointer, "null output pointer");
        }
        let id = match str_arg(scheme).and_then(scheme_arg) {
            Ok(id) => id,
            Err(s) => return s,
        };
        if !duration_s.is_finite() || duration_s < 0.0 {
            return fail(PbStatus::InvalidArgument, format!("invalid duration {duration_s}"));
        }
        *out_token = bin_pause(&id.scheme(), duration_s).map_or(ptr::null(), nul_terminated);
        PbStatus::Ok
    })
}

/// Read a `.pemb` file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_matrix_read(path: *const c_char, out: *mut *mut PbMatrix) -> PbStatus {
    guard(|| {
        if out.is_null() {
            return fail(PbStatus::NullPointer, "null output pointer");
        }
        let path = match str_arg(path) {
            Ok(p) => PathBuf::from(p),
            Err(s) => return s,
        };
        match read_matrix(&path) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(PbMatrix { inner: m }));
                PbStatus::Ok
            }
            Err(e) => fail(matrix_status(&e), format!("{}: {e}", path.display())),
        }
    })
}

/// Copy `rows × cols` floats into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` readable floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_matrix_new(rows: usize, cols: usize, data: *const f32, out: *mut *mut PbMatrix) -> PbStatus {
    guard(|| {
        if data.is_null() || out.is_null() {
            return fail(PbStatus::NullPointer, "null argument");
        }
        let Some(n) = rows.checked_mul(cols) else { return fail(PbStatus::InvalidArgument, "size overflow") };
        let values = std::slice::from_raw_parts(data, n).to_vec();
        match EmbeddingMatrix::new(rows, cols, values) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(PbMatrix { inner: m }));
                PbStatus::Ok
            }
            Err(e) => fail(PbStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Write `m` to `path` as a `.pemb` file.
///
/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pb_matrix_write(m: *const PbMatrix, path: *const c_char) -> PbStatus {
    guard(|| {
        let Some(m) = m.as_ref() else { return fail(PbStatus::NullPointer, "null matrix") };
        let path = match str_arg(path) {
            Ok(p) => PathBuf::from(p),
            Err(s) => return s,
        };
        match write_matrix(&m.inner, &path) {
            Ok(()) => PbStatus::Ok,
            Err(e) => fail(matrix_status(&e), format!("{}: {e}", path.display())),
        }
    })
}

/// # Safety
/// `m` must be null or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn pb_matrix_rows(m: *const PbMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.rows())
}

/// # Safety
/// `m` must be null or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn pb_matrix_cols(m: *const PbMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.cols())
}

/// Row-major payload, valid while `m` lives. Null for a null handle.
///
/// # Safety
/// `m` must be null or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn pb_matrix_data(m: *const PbMatrix) -> *const f32 {
    m.as_ref().map_or(ptr::null(), |m| m.inner.data().as_ptr())
}

/// # Safety
/// `m` must be null or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn pb_matrix_free(m: *mut PbMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// ROC AUC of `scores` against binary `labels` (non-zero = positive).
///
/// # Safety
/// `scores` and `labels` must each point to `n` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_roc_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> PbStatus {
    guard(|| {
        if scores.is_null() || labels.is_null() || out.is_null() {
            return fail(PbStatus::NullPointer, "null argument");
        }
        let scores = std::slice::from_raw_parts(scores, n);
        let labels: Vec<bool> = std::slice::from_raw_parts(labels, n).iter().map(|&l| l != 0).collect();
        match roc_auc(scores, &labels) {
            Ok(a) => {
                *out = a;
                PbStatus::Ok
            }
            Err(e @ AucError::SingleClass) => fail(PbStatus::SingleClass, e.to_string()),
            Err(e) => fail(PbStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Finite-difference gradient check of all attention modes on tiny models.
/// Returns [`PbStatus::VerificationFailed`] when the tolerance is exceeded.
///
/// # Safety
/// `max_rel_error` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn pb_grad_check(seed: u64, max_rel_error: *mut f64) -> PbStatus {
    guard(|| {
        let report = grad_check(seed);
        if let Some(out) = max_rel_error.as_mut() {
            *out = report.max_rel_error;
        }
        if report.passed() {
            PbStatus::Ok
        } else {
            fail(
                PbStatus::VerificationFailed,
                format!("max relative error {:.3e} exceeds {:.0e}", report.max_rel_error, report.tolerance),
            )
        }
    })
}
