//! Serializable run configuration shared by every subcommand.
//!
//! Each subcommand accepts the same `--config file.json` option; flags given
//! on the command line override the file's values. The effective
//! configuration is a single flat [`RunConfig`] so any invocation can be
//! reproduced from a config file alone — `validate` reports what a given
//! subcommand is missing before anything starts.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Mock engine selection for `mock serve`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MockMode {
    /// Tiered record/replay over captured traces.
    Replay,
    /// Mined rules and entity lifecycles.
    Pattern,
    /// Contract-document interpreter.
    Ir,
    /// Model-backed online simulator.
    Online,
}

impl MockMode {
    pub fn parse(s: &str) -> Option<MockMode> {
        match s {
            "replay" => Some(MockMode::Replay),
            "pattern" => Some(MockMode::Pattern),
            "ir" => Some(MockMode::Ir),
            "online" => Some(MockMode::Online),
            _ => None,
        }
    }
}

/// Which model client backs online mode (and `ir generate`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    /// Deterministic scripted replies from a file — fully offline.
    Scripted,
    /// A chat-completions HTTP endpoint.
    Remote,
}

impl Provider {
    pub fn parse(s: &str) -> Option<Provider> {
        match s {
            "scripted" => Some(Provider::Scripted),
            "remote" => Some(Provider::Remote),
            _ => None,
        }
    }
}

/// The flat union of every subcommand's settings. Unused fields are simply
/// ignored by subcommands that do not read them; `validate` knows which ones
/// each subcommand requires.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Which subcommand this file reproduces (informational; the CLI
    /// overwrites it with the subcommand actually invoked).
    pub subcommand: String,

    // mock serve
    pub mode: Option<MockMode>,
    pub port: Option<u16>,
    pub traces: Option<PathBuf>,
    /// Extra id-segment regexes for path normalization (whole-segment match,
    /// e.g. `item-[0-9]+`); all-digit and UUID segments are always folded.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub id_patterns: Vec<String>,
    pub ir: Option<PathBuf>,
    /// Signal mode label: wb | bb | dep | caller | traces
    /// (`-only` suffixes are accepted and stripped).
    pub signals: Option<String>,
    pub dep_src: Option<PathBuf>,
    pub caller_src: Option<PathBuf>,
    pub provider: Option<Provider>,
    pub script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the provider's API key.
    pub api_key_env: Option<String>,

    // trace record
    pub upstream: Option<String>,
    pub service: Option<String>,
    pub out: Option<PathBuf>,

    // demo serve / workload / capture
    pub inventory_port: Option<u16>,
    pub payment_port: Option<u16>,
    pub shipping_port: Option<u16>,
    pub order_port: Option<u16>,
    pub rounds: Option<u32>,
    pub seed: Option<u64>,

    // eval run
    pub suite: Option<PathBuf>,
    pub live: Option<String>,
    pub sim: Option<String>,
    pub inject_context: Option<bool>,
    pub price_table: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,

    // ir generate
    pub version: Option<String>,
}

/// A problem that makes the configuration unusable.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid JSON: {0}")]
    Parse(String),
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ConfigError> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// The signal label with any `-only` suffix stripped, ready for
    /// `SignalMode::parse`.
    pub fn signals_label(&self) -> Option<String> {
        self.signals
            .as_deref()
            .map(|s| s.strip_suffix("-only").unwrap_or(s).to_string())
    }

    /// Checks that everything the named subcommand needs is present. Returns
    /// the full list of problems so a user can fix them in one pass.
    pub fn validate(&self, subcommand: &str) -> Vec<String> {
        let mut problems = Vec::new();
        let need = |problems: &mut Vec<String>, present: bool, what: &str| {
            if !present {
                problems.push(format!("{subcommand}: {what} is required"));
            }
        };
        match subcommand {
            "mock serve" => match self.mode {
                None => problems.push("mock serve: --mode is required (replay | pattern | ir | online)".to_string()),
                Some(MockMode::Replay) | Some(MockMode::Pattern) => {
                    need(&mut problems, self.traces.is_some(), "--traces");
                }
                Some(MockMode::Ir) => need(&mut problems, self.ir.is_some(), "--ir"),
                Some(MockMode::Online) => {
                    match self
                        .signals_label()
                        .as_deref()
                        .map(crate::sim::prompt::SignalMode::parse)
                    {
                        None => problems.push(
                            "mock serve: --signals is required (wb | bb | dep | caller | traces)"
                                .to_string(),
                        ),
                        Some(None) => problems.push(format!(
                            "mock serve: unknown signal mode {:?}",
                            self.signals.as_deref().unwrap_or_default()
                        )),
                        Some(Some(mode)) => {
                            use crate::sim::prompt::SignalMode::*;
                            let (dep, caller, traces) = match mode {
                                WhiteBox => (true, true, true),
                                BlackBox => (false, true, true),
                                DepOnly => (true, false, false),
                                CallerOnly => (false, true, false),
                                TracesOnly => (false, false, true),
                            };
                            if dep {
                                need(&mut problems, self.dep_src.is_some(), "--dep-src");
                            }
                            if caller {
                                need(&mut problems, self.caller_src.is_some(), "--caller-src");
                            }
                            if traces {
                                need(&mut problems, self.traces.is_some(), "--traces");
                            }
                        }
                    }
                    match self.provider {
                        None => problems.push(
                            "mock serve: --provider is required (scripted | remote)".to_string(),
                        ),
                        Some(Provider::Scripted) => {
                            need(&mut problems, self.script.is_some(), "--script")
                        }
                        Some(Provider::Remote) => {
                            need(&mut problems, self.endpoint.is_some(), "--endpoint");
                            need(&mut problems, self.model.is_some(), "--model");
                        }
                    }
                }
            },
            "trace record" => {
                need(&mut problems, self.upstream.is_some(), "--upstream");
                need(&mut problems, self.out.is_some(), "--out");
            }
            "demo serve" | "demo workload" => {}
            "demo capture" => need(&mut problems, self.out_dir.is_some(), "--out-dir"),
            "eval run" => {
                need(&mut problems, self.suite.is_some(), "--suite");
                need(&mut problems, self.live.is_some(), "--live");
                need(&mut problems, self.sim.is_some(), "--sim");
            }
            "ir validate" => need(&mut problems, self.ir.is_some(), "--ir"),
            "ir generate" => {
                need(&mut problems, self.out.is_some(), "--out");
                match self.version.as_deref() {
                    None | Some("v1") | Some("v2") => {}
                    Some(other) => {
                        problems.push(format!("ir generate: unknown version {other:?} (v1 | v2)"))
                    }
                }
                match self.provider {
                    None => problems.push(
                        "ir generate: --provider is required (scripted | remote)".to_string(),
                    ),
                    Some(Provider::Scripted) => {
                        need(&mut problems, self.script.is_some(), "--script")
                    }
                    Some(Provider::Remote) => {
                        need(&mut problems, self.endpoint.is_some(), "--endpoint");
                        need(&mut problems, self.model.is_some(), "--model");
                    }
                }
            }
            other => problems.push(format!("unknown subcommand {other:?}")),
        }
        problems
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trips() {
        let cfg = RunConfig {
            subcommand: "mock serve".to_string(),
            mode: Some(MockMode::Online),
            port: Some(9_101),
            traces: Some(PathBuf::from("t.jsonl")),
            id_patterns: vec!["item-[0-9]+".to_string()],
            signals: Some("wb".to_string()),
            dep_src: Some(PathBuf::from("./inventory")),
            caller_src: Some(PathBuf::from("./order")),
            provider: Some(Provider::Scripted),
            script: Some(PathBuf::from("s.json")),
            inject_context: Some(false),
            ..RunConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        cfg.save(&path).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap(), cfg);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"mode": "replay", "trace": "typo.jsonl"}"#).unwrap();
        let err = RunConfig::load(&path).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
        assert!(err.to_string().contains("trace"), "{err}");
    }

    #[test]
    fn validation_tracks_mode_requirements() {
        let mut cfg = RunConfig {
            mode: Some(MockMode::Ir),
            ..RunConfig::default()
        };
        assert_eq!(cfg.validate("mock serve"), vec!["mock serve: --ir is required"]);
        cfg.ir = Some(PathBuf::from("doc.json"));
        assert!(cfg.validate("mock serve").is_empty());

        cfg.mode = Some(MockMode::Online);
        cfg.signals = Some("wb".to_string());
        cfg.provider = Some(Provider::Remote);
        let problems = cfg.validate("mock serve");
        for missing in ["--dep-src", "--caller-src", "--traces", "--endpoint", "--model"] {
            assert!(
                problems.iter().any(|p| p.contains(missing)),
                "expected {missing} in {problems:?}"
            );
        }
    }

    #[test]
    fn only_suffix_is_stripped_from_signal_labels() {
        let cfg = RunConfig {
            signals: Some("caller-only".to_string()),
            ..RunConfig::default()
        };
        assert_eq!(cfg.signals_label().as_deref(), Some("caller"));
    }
}
