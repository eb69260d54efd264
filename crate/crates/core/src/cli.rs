//! `pausebench` command line.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 unparsable input or
//! arguments, 3 manifest problems, 4 degenerate task data, 5 failed
//! verification.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::enrichment::{enrich, parse_timed_transcript, token_counts, EnrichedDocument, SchemeId, TimedTranscript};
use crate::experiments::{load_samples, run_cv, train_model, CvConfig, ExperimentError, Task, TrainConfig};
use crate::neuralcore::{grad_check_with, read_model, write_model, AttentionMode, GradCheckOptions, MODEL_MAGIC};
use crate::synthcohort::{generate_cohort, CohortSpec, SynthError};
use crate::tensorio::{load_manifest, read_matrix_header, Label, MATRIX_MAGIC};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_MANIFEST: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;
pub const EXIT_VERIFICATION: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "pausebench", version, about = "Pause-enriched transcript experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Insert pause tokens into word-timed transcripts
    Enrich(EnrichArgs),
    /// Generate a synthetic cohort
    Synth(SynthArgs),
    /// Train one classifier on every record of a task
    Train(TrainArgs),
    /// Stratified k-fold cross-validation
    Cv(CvArgs),
    /// Compare analytic and finite-difference gradients
    GradCheck(GradCheckArgs),
    /// Describe a matrix, model or manifest file
    Inspect(InspectArgs),
}

#[derive(Debug, Args, Serialize)]
struct EnrichArgs {
    /// Directory of transcript JSON files
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    scheme: SchemeId,
    /// Emit a disfluency token after flagged words
    #[arg(long)]
    disfl: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    task: Task,
    #[arg(long)]
    mode: AttentionMode,
    #[arg(long, env = "PAUSEBENCH_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CvArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    task: Task,
    #[arg(long)]
    mode: AttentionMode,
    #[arg(long, env = "PAUSEBENCH_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct GradCheckArgs {
    #[arg(long, env = "PAUSEBENCH_SEED", default_value_t = 0)]
    seed: u64,
    /// Double one analytic gradient so the check must fail
    #[arg(long, hide = true)]
    corrupt_gradient: bool,
}

#[derive(Debug, Args, Serialize)]
struct InspectArgs {
    file: PathBuf,
}

/// Error carrying the exit code it maps to.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = if e.is_manifest_error() {
            EXIT_MANIFEST
        } else if e.is_degenerate_data() {
            EXIT_DEGENERATE
        } else {
            EXIT_FAILURE
        };
        Failure::new(code, e.to_string())
    }
}

type Outcome = Result<i32, Failure>;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_FAILURE, format!("{}: {e}", path.display()))
}

fn echo_config<T: Serialize>(out: &mut dyn Write, command: &str, args: &T) {
    let json = serde_json::to_string(args).expect("arguments serialise");
    let _ = writeln!(out, "{command} config: {json}");
}

/// Parse `args` (including the program name) and run the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Enrich(a) => cmd_enrich(a, out),
        Command::Synth(a) => cmd_synth(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Cv(a) => cmd_cv(a, out),
        Command::GradCheck(a) => cmd_grad_check(a, out),
        Command::Inspect(a) => cmd_inspect(a, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn cmd_enrich(a: &EnrichArgs, out: &mut dyn Write) -> Outcome {
    echo_config(out, "enrich", a);
    let entries = fs::read_dir(&a.input).map_err(|e| io_failure(&a.input, e))?;
    let mut inputs: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    inputs.sort();

    // parse everything first so a bad file leaves the output untouched
    let mut parsed: Vec<(PathBuf, TimedTranscript)> = Vec::with_capacity(inputs.len());
    for p in inputs {
        let bytes = fs::read(&p).map_err(|e| io_failure(&p, e))?;
        let t = parse_timed_transcript(&bytes)
            .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", p.display())))?;
        parsed.push((p, t));
    }

    fs::create_dir_all(&a.out).map_err(|e| io_failure(&a.out, e))?;
    let scheme = a.scheme.scheme();
    let mut totals: BTreeMap<String, usize> = BTreeMap::new();
    for (path, t) in &parsed {
        let e = enrich(t, &scheme, a.disfl);
        for (tok, n) in token_counts(&e) {
            *totals.entry(tok).or_default() += n;
        }
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let target = a.out.join(format!("{stem}.enriched.json"));
        let mut json = serde_json::to_string_pretty(&EnrichedDocument::new(&e, a.disfl)).expect("serialises");
        json.push('\n');
        fs::write(&target, json).map_err(|e| io_failure(&target, e))?;
    }

    let _ = writeln!(out, "enriched {} transcript(s) with {}", parsed.len(), a.scheme);
    for bin in scheme.bins {
        let _ = writeln!(out, "  {:<8} {}", bin.token, totals.get(bin.token).copied().unwrap_or(0));
    }
    if a.disfl || a.scheme.implies_disfluencies() {
        let tok = crate::enrichment::DISFLUENCY_TOKEN;
        let _ = writeln!(out, "  {:<8} {}", tok, totals.get(tok).copied().unwrap_or(0));
    }
    Ok(EXIT_OK)
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Outcome {
    let bytes = fs::read(&a.spec).map_err(|e| io_failure(&a.spec, e))?;
    let spec: CohortSpec = serde_json::from_slice(&bytes)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", a.spec.display())))?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        #[serde(flatten)]
        args: &'a SynthArgs,
        cohort: &'a CohortSpec,
    }
    echo_config(out, "synth", &Resolved { args: a, cohort: &spec });
    let cohort = generate_cohort(&spec, &a.out).map_err(|e| match e {
        SynthError::InvalidSpec(_) => Failure::new(EXIT_PARSE, e.to_string()),
        other => Failure::new(EXIT_FAILURE, other.to_string()),
    })?;
    let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
    for r in &cohort.manifest.records {
        *counts.entry(r.label).or_default() += 1;
    }
    let summary: Vec<String> = counts.iter().map(|(l, n)| format!("{l}={n}")).collect();
    let _ = writeln!(out, "wrote {} ({})", cohort.manifest_path.display(), summary.join(" "));
    Ok(EXIT_OK)
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Outcome {
    let config = TrainConfig::new(a.task, a.mode, a.seed);
    #[derive(Serialize)]
    struct Resolved<'a> {
        #[serde(flatten)]
        args: &'a TrainArgs,
        train: &'a TrainConfig,
    }
    echo_config(out, "train", &Resolved { args: a, train: &config });
    let manifest = load_manifest(&a.manifest).map_err(|e| Failure::from(ExperimentError::from(e)))?;
    let samples = load_samples(&manifest, a.task, a.mode)?;
    let refs: Vec<_> = samples.iter().collect();
    let run = train_model(&config, &refs)?;
    write_model(&run.params, &config.hyper, &a.out).map_err(|e| io_failure(&a.out, e))?;
    let _ = writeln!(
        out,
        "trained on {} subjects: stopped after epoch {}, kept epoch {}, final training loss {:.6}",
        samples.len(),
        run.stopping_epoch,
        run.best_epoch,
        run.train_loss.last().copied().unwrap_or(f64::NAN)
    );
    let _ = writeln!(out, "wrote {}", a.out.display());
    Ok(EXIT_OK)
}

fn cmd_cv(a: &CvArgs, out: &mut dyn Write) -> Outcome {
    if a.folds < 2 {
        return Err(Failure::new(EXIT_PARSE, "--folds must be at least 2"));
    }
    let config = CvConfig::new(a.task, a.mode, a.folds, a.seed);
    #[derive(Serialize)]
    struct Resolved<'a> {
        #[serde(flatten)]
        args: &'a CvArgs,
        cv: &'a CvConfig,
    }
    echo_config(out, "cv", &Resolved { args: a, cv: &config });
    let manifest = load_manifest(&a.manifest).map_err(|e| Failure::from(ExperimentError::from(e)))?;
    let report = run_cv(&config, &manifest)?;
    fs::write(&a.report, report.to_json()).map_err(|e| io_failure(&a.report, e))?;
    for f in &report.folds {
        let _ = writeln!(out, "fold {}: AUC {:.4}", f.fold, f.auc);
    }
    let _ = writeln!(out, "mean AUC {:.4}", report.mean_auc);
    let _ = writeln!(out, "wrote {}", a.report.display());
    Ok(EXIT_OK)
}

fn cmd_grad_check(a: &GradCheckArgs, out: &mut dyn Write) -> Outcome {
    echo_config(out, "grad-check", a);
    let opts = GradCheckOptions { corrupt_gradient: a.corrupt_gradient, ..Default::default() };
    let report = grad_check_with(a.seed, &opts);
    for e in &report.entries {
        let _ = writeln!(out, "{:<10} {:<8} {:>5} coords  max rel error {:.3e}", e.mode.as_str(), e.tensor, e.checked, e.max_rel_error);
    }
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    let _ = writeln!(out, "{verdict}: max rel error {:.3e} (tolerance {:.0e})", report.max_rel_error, report.tolerance);
    Ok(if report.passed() { EXIT_OK } else { EXIT_VERIFICATION })
}

fn cmd_inspect(a: &InspectArgs, out: &mut dyn Write) -> Outcome {
    echo_config(out, "inspect", a);
    let path = &a.file;
    let mut magic = [0u8; 4];
    {
        use std::io::Read;
        let mut f = fs::File::open(path).map_err(|e| io_failure(path, e))?;
        let n = f.read(&mut magic).map_err(|e| io_failure(path, e))?;
        if n < 4 {
            magic = [0; 4];
        }
    }
    let parse = |e: &dyn std::fmt::Display| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display()));
    if magic == MATRIX_MAGIC {
        let h = read_matrix_header(path).map_err(|e| parse(&e))?;
        let _ = writeln!(out, "embedding matrix v{}: {} rows x {} cols", h.version, h.rows, h.cols);
    } else if magic == MODEL_MAGIC {
        let (h, params, hp) = read_model(path).map_err(|e| parse(&e))?;
        let _ = writeln!(
            out,
            "model v{}: d_model {} hidden {} parameters {}",
            h.version,
            h.dims.d_model,
            h.dims.hidden,
            params.parameter_count()
        );
        let _ = writeln!(out, "hyperparameters: {}", serde_json::to_string(&hp).expect("serialises"));
    } else {
        let m = load_manifest(path).map_err(|e| Failure::new(EXIT_MANIFEST, e.to_string()))?;
        let _ = writeln!(
            out,
            "manifest v{}: {} records, scheme {}, disfluencies {}, audio {}",
            m.schema_version,
            m.records.len(),
            m.scheme.map_or("none", SchemeId::as_str),
            m.include_disfluencies,
            if m.has_audio() { "yes" } else { "no" }
        );
        for l in Label::ALL {
            let n = m.records.iter().filter(|r| r.label == l).count();
            let _ = writeln!(out, "  {l:<4} {n}");
        }
    }
    Ok(EXIT_OK)
}
