use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pausebench::cli::{run, EXIT_DEGENERATE, EXIT_MANIFEST, EXIT_OK, EXIT_PARSE, EXIT_VERIFICATION};
use pausebench::synthcohort::{CohortSpec, PerClass};
use tempfile::TempDir;

fn pb(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("pausebench").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn transcript(id: &str, disfluent: bool) -> String {
    format!(
        r#"{{"subject_id":"{id}","test":"VFT","segments":[{{"words":[
            {{"text":"Hund","start":0.0,"end":0.4}},
            {{"text":"Katze","start":0.9,"end":1.3,"disfluent":{disfluent}}},
            {{"text":"Maus","start":3.0,"end":3.4}}]}}]}}"#
    )
}

fn mkdir(p: PathBuf) -> PathBuf {
    fs::create_dir_all(&p).unwrap();
    p
}

fn small_cohort(dir: &Path, with_audio: bool) -> PathBuf {
    let mut spec = CohortSpec {
        counts: PerClass { nc: 8, mci: 8, ad: 0 },
        separation: 3.0,
        with_audio,
        seed: 5,
        ..CohortSpec::default()
    };
    spec.pause.mean_words = 6.0;
    let spec_path = dir.join("spec.json");
    fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();
    let out = dir.join("cohort");
    let (code, stdout, stderr) = pb(&["synth", "--spec", s(&spec_path), "--out", s(&out)]);
    assert_eq!(code, EXIT_OK, "{stderr}");
    assert!(stdout.contains("NC=8 MCI=8"), "{stdout}");
    out.join("manifest.json")
}

#[test]
fn enrich_writes_one_file_per_transcript() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    for i in 0..3 {
        fs::write(input.join(format!("s{i}.json")), transcript(&format!("s{i}"), i == 1)).unwrap();
    }
    let out = dir.path().join("out");
    let (code, stdout, _) = pb(&["enrich", "--in", s(&input), "--scheme", "p3", "--out", s(&out)]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(fs::read_dir(&out).unwrap().count(), 3);
    assert!(stdout.contains("enrich config:"));
    assert!(stdout.contains("[P3.3]   3"), "{stdout}");
    let doc = fs::read_to_string(out.join("s1.enriched.json")).unwrap();
    assert!(doc.contains("\"text\": \"Hund [P3.1] Katze [P3.3] Maus\""), "{doc}");

    let out2 = dir.path().join("out2");
    let (code, _, _) = pb(&["enrich", "--in", s(&input), "--scheme", "p3-disfl", "--out", s(&out2)]);
    assert_eq!(code, EXIT_OK);
    let doc = fs::read_to_string(out2.join("s1.enriched.json")).unwrap();
    assert!(doc.contains("Katze [*] [P3.3] Maus"), "{doc}");
}

#[test]
fn enrich_fails_fast_on_malformed_input() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    fs::write(input.join("a.json"), transcript("a", false)).unwrap();
    fs::write(input.join("b.json"), "{ not json").unwrap();
    fs::write(input.join("c.json"), transcript("c", false)).unwrap();
    let out = dir.path().join("out");
    let (code, _, stderr) = pb(&["enrich", "--in", s(&input), "--scheme", "p1", "--out", s(&out)]);
    assert_eq!(code, EXIT_PARSE);
    assert!(stderr.contains("b.json"), "{stderr}");
    assert!(!out.exists());
}

#[test]
fn argument_errors() {
    assert_eq!(pb(&["cv", "--bogus"]).0, EXIT_PARSE);
    assert_eq!(pb(&["enrich", "--in", "x", "--scheme", "p7", "--out", "y"]).0, EXIT_PARSE);
    assert_eq!(pb(&[]).0, EXIT_PARSE);
    assert_eq!(pb(&["--help"]).0, EXIT_OK);
}

#[test]
fn grad_check_exit_codes() {
    let (code, first, _) = pb(&["grad-check", "--seed", "3"]);
    assert_eq!(code, EXIT_OK);
    assert!(first.contains("PASS"));
    assert_eq!(pb(&["grad-check", "--seed", "3"]).1, first);
    let (code, out, _) = pb(&["grad-check", "--seed", "3", "--corrupt-gradient"]);
    assert_eq!(code, EXIT_VERIFICATION);
    assert!(out.contains("FAIL"));
}

#[test]
fn synth_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = small_cohort(&mkdir(dir.path().join("a")), true);
    let b = small_cohort(&mkdir(dir.path().join("b")), true);
    for rel in ["manifest.json", "text/NC-001.pemb", "audio/MCI-008.pemb", "enriched/NC-003.json", "transcripts/MCI-002.json"] {
        let pa = a.parent().unwrap().join(rel);
        let pb_ = b.parent().unwrap().join(rel);
        assert_eq!(fs::read(pa).unwrap(), fs::read(pb_).unwrap(), "{rel}");
    }
}

#[test]
fn inspect_describes_files() {
    let dir = TempDir::new().unwrap();
    let manifest = small_cohort(dir.path(), true);
    let (code, out, _) = pb(&["inspect", s(&manifest)]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("16 records"), "{out}");
    let pemb = manifest.parent().unwrap().join("text/NC-001.pemb");
    let (code, out, _) = pb(&["inspect", s(&pemb)]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("x 768 cols"), "{out}");
    let bogus = dir.path().join("bogus.txt");
    fs::write(&bogus, "hello").unwrap();
    assert_eq!(pb(&["inspect", s(&bogus)]).0, EXIT_MANIFEST);
}

#[test]
fn train_writes_a_model() {
    let dir = TempDir::new().unwrap();
    let manifest = small_cohort(dir.path(), true);
    let model = dir.path().join("m.pemm");
    let (code, out, err) = pb(&[
        "train", "--manifest", s(&manifest), "--task", "nc-mci", "--mode", "self-audio", "--seed", "1", "--out", s(&model),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("\"seed\":1"));
    let (code, out, _) = pb(&["inspect", s(&model)]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("d_model 768 hidden 512"), "{out}");
}

#[test]
fn cv_reports_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let manifest = small_cohort(dir.path(), true);
    let r1 = dir.path().join("r1.json");
    let r2 = dir.path().join("r2.json");
    for r in [&r1, &r2] {
        let (code, out, err) = pb(&[
            "cv", "--manifest", s(&manifest), "--task", "nc-mci", "--mode", "self-text", "--folds", "4", "--seed", "7",
            "--report", s(r),
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
        assert!(out.contains("mean AUC"));
    }
    let a = fs::read(&r1).unwrap();
    assert_eq!(a, fs::read(&r2).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["folds"].as_array().unwrap().len(), 4);
    assert_eq!(report["config"]["seed"], 7);
}

#[test]
fn cv_error_codes() {
    let dir = TempDir::new().unwrap();
    let manifest = small_cohort(dir.path(), false);
    let report = dir.path().join("r.json");
    let base = ["cv", "--manifest", s(&manifest), "--report", s(&report), "--seed", "1"];
    let with = |extra: &[&'static str]| {
        let mut v: Vec<&str> = base.to_vec();
        v.extend_from_slice(extra);
        pb(&v).0
    };
    assert_eq!(with(&["--task", "nc-mci", "--mode", "cross"]), EXIT_MANIFEST);
    assert_eq!(with(&["--task", "nc-ad", "--mode", "self-text"]), EXIT_DEGENERATE);
    assert_eq!(with(&["--task", "nc-mci", "--mode", "self-text", "--folds", "40"]), EXIT_DEGENERATE);
    assert!(!report.exists());
    let missing = dir.path().join("none.json");
    assert_eq!(
        pb(&["cv", "--manifest", s(&missing), "--task", "nc-mci", "--mode", "self-text", "--report", s(&report)]).0,
        EXIT_MANIFEST
    );
}

#[test]
fn binary_takes_seed_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_pausebench"))
        .args(["grad-check"])
        .env("PAUSEBENCH_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("\"seed\":42"), "{stdout}");

    let out = Command::new(env!("CARGO_BIN_EXE_pausebench"))
        .args(["grad-check", "--corrupt-gradient"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_VERIFICATION));
}
