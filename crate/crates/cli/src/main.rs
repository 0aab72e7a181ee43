//! Command-line front end for the extraction pipeline: segment notes, run
//! the full pipeline against a backend, evaluate outputs against a gold
//! corpus, and render saved reports.
//!
//! Exit codes: 0 success; 1 usage or configuration; 2 I/O or data
//! validation; 3 backend infrastructure; 4 run completed but some notes
//! recorded stage errors.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use config::{BackendKind, ConfigFile, ConfigFileError, Overrides, RunConfig};
use ros_core::backend::{Backend, HttpBackend, RecordingBackend, ReplayBackend};
use ros_core::domain::{load_corpus, load_notes};
use ros_core::eval::{
    evaluate_corpus, load_model_counts, model_report_json, render_table, MetricCounts, ModelCounts,
};
use ros_core::pipeline::{
    load_outputs, run_notes, write_outputs, CLS_SYSTEM_PROMPT, NER_SYSTEM_PROMPT,
};
use ros_core::segmenter::{segment_ros, HeaderLexicon, DEFAULT_LEXICON};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_STAGE_ERRORS: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ros-extract",
    version,
    about = "Extract review-of-systems entities from clinical notes and evaluate the results"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locate the review-of-systems section in each note and print its span
    Segment(SegmentArgs),
    /// Run segmentation, extraction, and classification over a note corpus
    Run(RunArgs),
    /// Score pipeline outputs against gold annotations, or summarize saved counters
    Eval(EvalArgs),
    /// Render a saved JSON evaluation report as an aligned text table
    Report(ReportArgs),
}

#[derive(Args)]
struct SegmentArgs {
    /// Directory of plain-text notes (one .txt file per note)
    #[arg(long)]
    notes: PathBuf,
    /// Section-header lexicon file (defaults to the built-in lexicon)
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; flags below override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Backend kind: http, replay, or record
    #[arg(long)]
    backend: Option<String>,
    /// Base URL of the chat-completions server (http/record)
    #[arg(long)]
    base_url: Option<String>,
    /// Model name sent to the server
    #[arg(long)]
    model: Option<String>,
    /// Request store: read by replay, written by record
    #[arg(long)]
    store: Option<PathBuf>,
    /// Directory of plain-text notes
    #[arg(long)]
    notes: Option<PathBuf>,
    /// Output JSONL path; the run manifest lands next to it
    #[arg(long)]
    out: Option<PathBuf>,
    /// Section-header lexicon file
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Concurrent note workers
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Pipeline output JSONL to score (omit when using --counts)
    outputs: Option<PathBuf>,
    /// JSON config file supplying notes/annotations paths
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of plain-text notes
    #[arg(long)]
    notes: Option<PathBuf>,
    /// Gold annotation JSONL
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Saved counters file; repeat for a multi-row table (skips matching)
    #[arg(long)]
    counts: Vec<PathBuf>,
    /// Row label for the scored outputs
    #[arg(long, default_value = "pipeline")]
    model: String,
    /// Write the JSON report here as well as printing the table
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON report produced by `eval --out` (single object or array)
    report: PathBuf,
}

/// An error annotated with the process exit code it should produce.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }

    fn data(error: impl std::fmt::Display) -> Self {
        Self::new(EXIT_DATA, error.to_string())
    }

    fn backend(error: impl std::fmt::Display) -> Self {
        Self::new(EXIT_BACKEND, error.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Keep clap's rendered message but remap its exit code: help and
            // version are successes, everything else is a usage error.
            let _ = err.print();
            return match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };

    let result = match cli.command {
        Command::Segment(args) => cmd_segment(args),
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

/// Load a lexicon along with its source text (for checksumming).
fn load_lexicon(path: Option<&Path>) -> Result<(HeaderLexicon, String), Failure> {
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::data(format!("failed to read {}: {e}", path.display())))?;
            let lexicon = HeaderLexicon::from_text(&text)
                .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
            Ok((lexicon, text))
        }
        None => Ok((HeaderLexicon::default(), DEFAULT_LEXICON.to_string())),
    }
}

fn cmd_segment(args: SegmentArgs) -> Result<u8, Failure> {
    let (lexicon, _) = load_lexicon(args.lexicon.as_deref())?;
    let notes = load_notes(&args.notes).map_err(Failure::data)?;
    // Not finding a section is data, not a failure: exit 0 either way.
    println!("note_id\tros\tbody_span");
    for note in &notes {
        match segment_ros(&note.text, &lexicon) {
            Some(segment) => println!("{}\tfound\t{}", note.note_id, segment.body_span),
            None => println!("{}\tnot-found\t-", note.note_id),
        }
    }
    Ok(0)
}

fn load_config_file(path: Option<&Path>) -> Result<ConfigFile, Failure> {
    match path {
        Some(path) => config::load_file(path).map_err(|e| match e {
            ConfigFileError::Io(message) => Failure::new(EXIT_DATA, message),
            ConfigFileError::Parse(message) => Failure::new(EXIT_USAGE, message),
        }),
        None => Ok(ConfigFile::default()),
    }
}

fn build_backend(cfg: &RunConfig) -> Result<Box<dyn Backend>, Failure> {
    let connect = |url: &str| -> Result<HttpBackend, Failure> {
        let http = HttpBackend::from_env(url).map_err(Failure::backend)?;
        http.preflight().map_err(Failure::backend)?;
        Ok(http)
    };
    match cfg.backend {
        BackendKind::Http => {
            let url = cfg.base_url.as_deref().expect("validated by resolve_run");
            Ok(Box::new(connect(url)?))
        }
        BackendKind::Replay => {
            let store = cfg.store.as_deref().expect("validated by resolve_run");
            Ok(Box::new(ReplayBackend::load(store).map_err(Failure::backend)?))
        }
        BackendKind::Record => {
            let url = cfg.base_url.as_deref().expect("validated by resolve_run");
            let store = cfg.store.as_deref().expect("validated by resolve_run");
            let inner = Box::new(connect(url)?);
            Ok(Box::new(
                RecordingBackend::create(inner, store).map_err(Failure::backend)?,
            ))
        }
    }
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// The manifest lands next to the output file: `out.jsonl` gains a sibling
/// `out.manifest.json`.
fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn cmd_run(args: RunArgs) -> Result<u8, Failure> {
    let file = load_config_file(args.config.as_deref())?;
    let flags = Overrides {
        backend: args.backend,
        base_url: args.base_url,
        model: args.model,
        lexicon: args.lexicon,
        workers: args.workers,
        notes: args.notes,
        out: args.out,
        store: args.store,
    };
    let cfg = config::resolve_run(file, flags).map_err(Failure::usage)?;

    let (lexicon, lexicon_text) = load_lexicon(cfg.lexicon.as_deref())?;
    let notes = load_notes(&cfg.notes).map_err(Failure::data)?;
    // Fail fast on an unreachable backend rather than per note.
    let backend = build_backend(&cfg)?;
    let generation = cfg.generation();

    let started = Instant::now();
    let outputs = run_notes(&notes, &lexicon, backend.as_ref(), &generation, cfg.workers);
    let duration = started.elapsed();

    write_outputs(&outputs, &cfg.out).map_err(Failure::data)?;

    let notes_with_errors = outputs
        .iter()
        .filter(|o| !o.stage_errors.is_empty())
        .count();
    let manifest = serde_json::json!({
        "config": cfg,
        "prompt_sha256": {
            "ner_system": sha256_hex(NER_SYSTEM_PROMPT),
            "classification_system": sha256_hex(CLS_SYSTEM_PROMPT),
        },
        "lexicon_sha256": sha256_hex(&lexicon_text),
        "backend_kind": backend.kind(),
        "notes_processed": notes.len(),
        "notes_with_stage_errors": notes_with_errors,
        "duration_ms": duration.as_millis() as u64,
    });
    let manifest_file = manifest_path(&cfg.out);
    std::fs::write(
        &manifest_file,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )
    .map_err(|e| Failure::data(format!("failed to write {}: {e}", manifest_file.display())))?;

    eprintln!(
        "processed {} notes in {} ms -> {} ({} with stage errors)",
        notes.len(),
        duration.as_millis(),
        cfg.out.display(),
        notes_with_errors,
    );
    Ok(if notes_with_errors > 0 {
        EXIT_STAGE_ERRORS
    } else {
        0
    })
}

fn cmd_eval(args: EvalArgs) -> Result<u8, Failure> {
    match (&args.outputs, args.counts.is_empty()) {
        (Some(_), false) => Err(Failure::usage(
            "pass either an outputs file or --counts, not both",
        )),
        (None, true) => Err(Failure::usage(
            "nothing to evaluate: pass an outputs file or at least one --counts",
        )),
        (None, false) => eval_counts(&args),
        (Some(outputs), true) => eval_outputs(outputs.clone(), &args),
    }
}

/// Bare-counters mode: no matching, just derived metrics over saved rows.
fn eval_counts(args: &EvalArgs) -> Result<u8, Failure> {
    let mut rows = Vec::new();
    for path in &args.counts {
        rows.push(load_model_counts(path).map_err(Failure::data)?);
    }
    print!("{}", render_table(&rows));
    if let Some(out) = &args.out {
        let report: Vec<serde_json::Value> = rows.iter().map(model_report_json).collect();
        write_json(out, &serde_json::Value::Array(report))?;
    }
    Ok(0)
}

fn eval_outputs(outputs_path: PathBuf, args: &EvalArgs) -> Result<u8, Failure> {
    let file = load_config_file(args.config.as_deref())?;
    let notes = args
        .notes
        .clone()
        .or(file.notes)
        .ok_or_else(|| Failure::usage("no notes directory (pass --notes or set it in the config)"))?;
    let annotations = args.annotations.clone().or(file.annotations).ok_or_else(|| {
        Failure::usage("no annotations file (pass --annotations or set it in the config)")
    })?;

    let corpus = load_corpus(&notes, &annotations).map_err(Failure::data)?;
    let outputs = load_outputs(&outputs_path).map_err(Failure::data)?;
    let evaluation = evaluate_corpus(&corpus, &outputs).map_err(Failure::data)?;

    let per_note = serde_json::to_value(&evaluation.per_note).expect("per-note rows serialize");
    let row = evaluation.into_model_counts(args.model.clone());
    print!("{}", render_table(std::slice::from_ref(&row)));
    if let Some(out) = args.out.clone().or(file.report) {
        let mut report = model_report_json(&row);
        report["per_note"] = per_note;
        write_json(&out, &report)?;
    }
    Ok(0)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    std::fs::write(path, text)
        .map_err(|e| Failure::data(format!("failed to write {}: {e}", path.display())))
}

/// The slice of a report entry that the table renderer needs; `derived` and
/// `per_note` are recomputed or ignored.
#[derive(serde::Deserialize)]
struct ReportEntry {
    model: String,
    total_spans: u32,
    counts: MetricCounts,
}

impl From<ReportEntry> for ModelCounts {
    fn from(entry: ReportEntry) -> Self {
        ModelCounts {
            model: entry.model,
            total_spans: entry.total_spans,
            counts: entry.counts,
        }
    }
}

fn cmd_report(args: ReportArgs) -> Result<u8, Failure> {
    let raw = std::fs::read_to_string(&args.report)
        .map_err(|e| Failure::data(format!("failed to read {}: {e}", args.report.display())))?;
    let parsed: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| Failure::data(format!("invalid report {}: {e}", args.report.display())))?;
    let entries: Vec<ReportEntry> = match parsed {
        serde_json::Value::Array(_) => serde_json::from_str(&raw),
        _ => serde_json::from_str::<ReportEntry>(&raw).map(|entry| vec![entry]),
    }
    .map_err(|e| Failure::data(format!("invalid report {}: {e}", args.report.display())))?;

    let rows: Vec<ModelCounts> = entries.into_iter().map(Into::into).collect();
    let mut out = String::new();
    write!(out, "{}", render_table(&rows)).expect("string write");
    print!("{out}");
    Ok(0)
}
