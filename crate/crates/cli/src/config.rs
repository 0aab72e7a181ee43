//! Run configuration: a flat JSON config file merged with command-line
//! overrides, flags winning. One precedence rule, applied uniformly.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use ros_core::GenerationConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Replay,
    Record,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http" => Ok(Self::Http),
            "replay" => Ok(Self::Replay),
            "record" => Ok(Self::Record),
            other => Err(format!(
                "unknown backend kind {other:?} (expected http, replay, or record)"
            )),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Http => "http",
            Self::Replay => "replay",
            Self::Record => "record",
        })
    }
}

/// The config file as written on disk. Every key is optional so the file
/// can hold just the stable parts of a setup while flags supply the rest.
/// Unknown keys are rejected rather than silently ignored.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub backend: Option<String>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
    pub top_k: Option<u32>,
    pub top_p: Option<f64>,
    pub timeout_secs: Option<u64>,
    pub max_retries: Option<u32>,
    pub lexicon: Option<PathBuf>,
    pub workers: Option<usize>,
    pub notes: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub store: Option<PathBuf>,
}

/// What a config file key can also be set by on the command line.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub backend: Option<String>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub lexicon: Option<PathBuf>,
    pub workers: Option<usize>,
    pub notes: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub store: Option<PathBuf>,
}

/// A fully resolved run: everything `run` needs, nothing optional left
/// except fields genuinely unused by some backend kinds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub backend: BackendKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub seed: u64,
    pub top_k: u32,
    pub top_p: f64,
    pub timeout_secs: u64,
    pub max_retries: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    pub workers: usize,
    pub notes: PathBuf,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub store: Option<PathBuf>,
}

impl RunConfig {
    pub fn generation(&self) -> GenerationConfig {
        let mut gen = GenerationConfig::new(self.model.clone());
        gen.temperature = self.temperature;
        gen.seed = self.seed;
        gen.top_k = self.top_k;
        gen.top_p = self.top_p;
        gen.timeout = Duration::from_secs(self.timeout_secs);
        gen.max_retries = self.max_retries;
        gen
    }
}

/// Merge file values and flag overrides (flags win) and validate the
/// result. Errors are usage problems, phrased for the command line.
pub fn resolve_run(file: ConfigFile, flags: Overrides) -> Result<RunConfig, String> {
    let backend_raw = flags
        .backend
        .or(file.backend)
        .ok_or("no backend configured (set \"backend\" in the config file or pass --backend)")?;
    let backend: BackendKind = backend_raw.parse()?;

    let base_url = flags.base_url.or(file.base_url);
    let store = flags.store.or(file.store);
    match backend {
        BackendKind::Http | BackendKind::Record if base_url.is_none() => {
            return Err(format!("backend {backend} requires --base-url"));
        }
        BackendKind::Replay | BackendKind::Record if store.is_none() => {
            return Err(format!("backend {backend} requires --store"));
        }
        _ => {}
    }

    let model = match flags.model.or(file.model) {
        Some(model) => model,
        // Replay answers by request digest; the model name is only a label.
        None if backend == BackendKind::Replay => "replay".to_string(),
        None => return Err(format!("backend {backend} requires --model")),
    };

    let defaults = GenerationConfig::new("");
    let temperature = file.temperature.unwrap_or(defaults.temperature);
    let top_k = file.top_k.unwrap_or(defaults.top_k);
    let top_p = file.top_p.unwrap_or(defaults.top_p);
    if temperature < 0.0 {
        return Err(format!("temperature must be >= 0, got {temperature}"));
    }
    if top_k < 1 {
        return Err("top_k must be >= 1".to_string());
    }
    if !(0.0..=1.0).contains(&top_p) {
        return Err(format!("top_p must be in [0, 1], got {top_p}"));
    }

    let workers = flags.workers.or(file.workers).unwrap_or(4);
    if workers < 1 {
        return Err("workers must be >= 1".to_string());
    }

    let notes = flags
        .notes
        .or(file.notes)
        .ok_or("no notes directory configured (set \"notes\" or pass --notes)")?;
    let out = flags
        .out
        .or(file.out)
        .ok_or("no output path configured (set \"out\" or pass --out)")?;

    Ok(RunConfig {
        backend,
        base_url,
        model,
        temperature,
        seed: file.seed.unwrap_or(defaults.seed),
        top_k,
        top_p,
        timeout_secs: file.timeout_secs.unwrap_or(defaults.timeout.as_secs()),
        max_retries: file.max_retries.unwrap_or(defaults.max_retries),
        lexicon: flags.lexicon.or(file.lexicon),
        workers,
        notes,
        out,
        store,
    })
}

/// Read and parse a config file. I/O and parse failures are reported
/// separately so the caller can map them to different exit codes.
pub enum ConfigFileError {
    Io(String),
    Parse(String),
}

pub fn load_file(path: &Path) -> Result<ConfigFile, ConfigFileError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| ConfigFileError::Io(format!("failed to read {}: {e}", path.display())))?;
    serde_json::from_str(&raw)
        .map_err(|e| ConfigFileError::Parse(format!("invalid config {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file_with(json: &str) -> ConfigFile {
        serde_json::from_str(json).expect("test config parses")
    }

    #[test]
    fn flags_override_file_values() {
        let file = file_with(r#"{"backend":"http","base_url":"http://a","model":"m1","notes":"n","out":"o"}"#);
        let flags = Overrides {
            model: Some("m2".to_string()),
            workers: Some(8),
            ..Overrides::default()
        };
        let cfg = resolve_run(file, flags).expect("resolves");
        assert_eq!(cfg.model, "m2");
        assert_eq!(cfg.workers, 8);
        assert_eq!(cfg.base_url.as_deref(), Some("http://a"));
    }

    #[test]
    fn sampling_defaults_match_generation_config() {
        let file = file_with(r#"{"backend":"replay","store":"s.jsonl","notes":"n","out":"o"}"#);
        let cfg = resolve_run(file, Overrides::default()).expect("resolves");
        assert_eq!(cfg.temperature, 1.0);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.top_k, 10);
        assert_eq!(cfg.top_p, 0.5);
        assert_eq!(cfg.timeout_secs, 120);
        assert_eq!(cfg.max_retries, 2);
        let gen = cfg.generation();
        assert_eq!(gen.model, "replay");
        assert_eq!(gen.seed, 42);
    }

    #[test]
    fn http_requires_base_url_and_model() {
        let file = file_with(r#"{"backend":"http","notes":"n","out":"o"}"#);
        let err = resolve_run(file, Overrides::default()).unwrap_err();
        assert!(err.contains("--base-url"), "{err}");

        let file = file_with(r#"{"backend":"http","base_url":"http://a","notes":"n","out":"o"}"#);
        let err = resolve_run(file, Overrides::default()).unwrap_err();
        assert!(err.contains("--model"), "{err}");
    }

    #[test]
    fn replay_requires_store_but_not_model() {
        let file = file_with(r#"{"backend":"replay","notes":"n","out":"o"}"#);
        let err = resolve_run(file, Overrides::default()).unwrap_err();
        assert!(err.contains("--store"), "{err}");
    }

    #[test]
    fn record_requires_both_url_and_store() {
        let file = file_with(r#"{"backend":"record","base_url":"http://a","model":"m","notes":"n","out":"o"}"#);
        let err = resolve_run(file, Overrides::default()).unwrap_err();
        assert!(err.contains("--store"), "{err}");
    }

    #[test]
    fn bad_values_are_rejected() {
        let cases = [
            (r#"{"backend":"grpc","store":"s","notes":"n","out":"o"}"#, "backend kind"),
            (r#"{"backend":"replay","store":"s","notes":"n","out":"o","workers":0}"#, "workers"),
            (r#"{"backend":"replay","store":"s","notes":"n","out":"o","top_p":1.5}"#, "top_p"),
            (r#"{"backend":"replay","store":"s","notes":"n","out":"o","top_k":0}"#, "top_k"),
            (r#"{"backend":"replay","store":"s","notes":"n","out":"o","temperature":-0.1}"#, "temperature"),
        ];
        for (json, needle) in cases {
            let err = resolve_run(file_with(json), Overrides::default()).unwrap_err();
            assert!(err.contains(needle), "{json} -> {err}");
        }
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = serde_json::from_str::<ConfigFile>(r#"{"backned":"http"}"#).unwrap_err();
        assert!(err.to_string().contains("backned"));
    }
}
