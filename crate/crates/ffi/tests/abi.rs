use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use pausebench_ffi::*;

const DOC: &str = r#"{"subject_id":"s1","test":"VFT","segments":[
  {"words":[{"text":"Hund","start":0.0,"end":0.4},{"text":"Katze","start":1.2,"end":1.6,"disfluent":true}]},
  {"words":[{"text":"Maus","start":3.5,"end":3.9}]}]}"#;

fn last_error() -> String {
    unsafe { CStr::from_ptr(pb_last_error()) }.to_string_lossy().into_owned()
}

fn parse(doc: &str) -> (PbStatus, *mut PbTranscript) {
    let mut t = ptr::null_mut();
    let s = unsafe { pb_transcript_parse(doc.as_ptr(), doc.len(), &mut t) };
    (s, t)
}

#[test]
fn transcript_round_trip() {
    let (s, t) = parse(DOC);
    assert_eq!(s, PbStatus::Ok);
    unsafe {
        assert_eq!(pb_transcript_word_count(t), 3);
        assert_eq!(pb_transcript_pause_count(t), 2);
        let scheme = CString::new("p3-disfl").unwrap();
        let mut text = ptr::null_mut();
        assert_eq!(pb_transcript_enrich(t, scheme.as_ptr(), false, &mut text), PbStatus::Ok);
        assert_eq!(CStr::from_ptr(text).to_str().unwrap(), "Hund [P3.2] Katze [*] [P3.3] Maus");
        pb_string_free(text);
        pb_transcript_free(t);
    }
}

#[test]
fn transcript_errors() {
    assert_eq!(parse("{").0, PbStatus::ParseError);
    assert!(!last_error().is_empty());
    let overlap = r#"{"subject_id":"s","test":"PDT","segments":[{"words":[
        {"text":"a","start":0.0,"end":1.0},{"text":"b","start":0.5,"end":1.5}]}]}"#;
    assert_eq!(parse(overlap).0, PbStatus::InvalidTiming);
    let empty = r#"{"subject_id":"s","test":"PDT","segments":[]}"#;
    assert_eq!(parse(empty).0, PbStatus::EmptyTranscript);
    unsafe {
        assert_eq!(pb_transcript_parse(ptr::null(), 0, ptr::null_mut()), PbStatus::NullPointer);
        assert_eq!(pb_transcript_word_count(ptr::null()), 0);
    }
}

#[test]
fn bin_pause_tokens() {
    let p3 = CString::new("p3").unwrap();
    let mut tok = ptr::null();
    unsafe {
        assert_eq!(pb_bin_pause(p3.as_ptr(), 1.5, &mut tok), PbStatus::Ok);
        assert_eq!(CStr::from_ptr(tok).to_str().unwrap(), "[P3.3]");
        assert_eq!(pb_bin_pause(p3.as_ptr(), 0.1, &mut tok), PbStatus::Ok);
        assert!(tok.is_null());
        let bad = CString::new("p9").unwrap();
        assert_eq!(pb_bin_pause(bad.as_ptr(), 1.0, &mut tok), PbStatus::InvalidArgument);
        assert_eq!(pb_bin_pause(p3.as_ptr(), f64::NAN, &mut tok), PbStatus::InvalidArgument);
    }
}

#[test]
fn matrix_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.pemb").to_str().unwrap()).unwrap();
    let data: Vec<f32> = (0..2 * 768).map(|i| i as f32 * 0.5).collect();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(pb_matrix_new(2, 768, data.as_ptr(), &mut m), PbStatus::Ok);
        assert_eq!(pb_matrix_write(m, path.as_ptr()), PbStatus::Ok);
        pb_matrix_free(m);

        let mut back = ptr::null_mut();
        assert_eq!(pb_matrix_read(path.as_ptr(), &mut back), PbStatus::Ok);
        assert_eq!((pb_matrix_rows(back), pb_matrix_cols(back)), (2, 768));
        assert_eq!(std::slice::from_raw_parts(pb_matrix_data(back), 2 * 768), &data[..]);
        pb_matrix_free(back);

        let missing = CString::new(dir.path().join("nope.pemb").to_str().unwrap()).unwrap();
        assert_eq!(pb_matrix_read(missing.as_ptr(), &mut back), PbStatus::IoError);
        std::fs::write(dir.path().join("bad.pemb"), b"PEMX").unwrap();
        let bad = CString::new(dir.path().join("bad.pemb").to_str().unwrap()).unwrap();
        assert_eq!(pb_matrix_read(bad.as_ptr(), &mut back), PbStatus::FormatError);
        assert_eq!(pb_matrix_new(1, 3, data.as_ptr(), &mut back), PbStatus::InvalidArgument);
    }
}

#[test]
fn auc_and_grad_check() {
    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0u8, 0, 1, 1];
    let mut auc = 0.0;
    unsafe {
        assert_eq!(pb_roc_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut auc), PbStatus::Ok);
        assert_eq!(auc, 0.75);
        let ones = [1u8; 4];
        assert_eq!(pb_roc_auc(scores.as_ptr(), ones.as_ptr(), 4, &mut auc), PbStatus::SingleClass);
        let mut err = f64::NAN;
        assert_eq!(pb_grad_check(0, &mut err), PbStatus::Ok);
        assert!(err < 1e-4);
    }
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(pb_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/pausebench.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["pb_transcript_parse", "pb_matrix_read", "pb_bin_pause", "pb_roc_auc", "pb_grad_check", "PB_STATUS_OK"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"pausebench.h\"\nint main(void) { PbMatrix *m = 0; return pb_matrix_read(\"x\", &m) == PB_STATUS_OK; }\n",
    )
    .unwrap();
    let Ok(status) = Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
    else {
        eprintln!("no C compiler found; skipping compile check");
        return;
    };
    assert!(status.success());
}
