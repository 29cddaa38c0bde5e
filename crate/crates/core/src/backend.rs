//! Pluggable text-generation backends.
//!
//! Every call is identified by a five-tuple key (bug, pipeline stage,
//! tree, node depth, per-stage call index). The scripted backend serves
//! canned responses keyed by that tuple, so concurrent trees cannot
//! reorder its answers; the HTTP backend is a minimal chat-completion
//! client with the credential read from a named environment variable.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pipeline stage a backend call belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    HypGen,
    HypSelect,
    PatchGen,
    PatchSelect,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::HypGen => "hyp_gen",
            Stage::HypSelect => "hyp_select",
            Stage::PatchGen => "patch_gen",
            Stage::PatchSelect => "patch_select",
        };
        f.write_str(s)
    }
}

/// Identity of one backend call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallKey {
    pub bug_id: String,
    pub stage: Stage,
    pub tree_id: u32,
    pub node_depth: u32,
    /// Index of the call within (bug, stage, tree, depth), counted per
    /// node; retries keep counting so fixtures can script them.
    pub call_index: u32,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("no scripted response for {bug_id}/{stage}/tree {tree_id}/depth {node_depth}/call {call_index}")]
    NoScriptedResponse {
        bug_id: String,
        stage: Stage,
        tree_id: u32,
        node_depth: u32,
        call_index: u32,
    },
    #[error("credential environment variable {0} is not set")]
    MissingCredential(String),
    #[error("http request failed: {0}")]
    Http(String),
    #[error("unexpected response shape: {0}")]
    BadResponse(String),
    #[error("failed to load fixture {path}: {detail}")]
    Fixture { path: String, detail: String },
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

/// A text-generation backend; must tolerate concurrent calls.
pub trait TextBackend: Send + Sync {
    fn complete(&self, key: &CallKey, prompt: &str, temperature: f64) -> Result<String, BackendError>;
    fn name(&self) -> &str;
}

/// Backend selection and sampling parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Chat-completions endpoint URL (http backend).
    #[serde(default)]
    pub endpoint: String,
    /// Model name (http backend).
    #[serde(default)]
    pub model: String,
    /// Name of the environment variable holding the API credential.
    #[serde(default)]
    pub credential_env: String,
    /// Fixture path (scripted backend).
    #[serde(default)]
    pub fixture: String,
    /// Temperature for hypothesis/patch generation.
    #[serde(default = "default_gen_temperature")]
    pub gen_temperature: f64,
    /// Temperature for selection and other steps.
    #[serde(default = "default_select_temperature")]
    pub select_temperature: f64,
    /// Retries per call on failure or unparseable output.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Hypotheses with fenced code blocks longer than this get a
    /// warning (soft check only).
    #[serde(default = "default_code_block_warn_lines")]
    pub code_block_warn_lines: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
}

fn default_gen_temperature() -> f64 {
    0.8
}
fn default_select_temperature() -> f64 {
    0.2
}
fn default_max_retries() -> u32 {
    2
}
fn default_code_block_warn_lines() -> usize {
    20
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            endpoint: String::new(),
            model: String::new(),
            credential_env: String::new(),
            fixture: String::new(),
            gen_temperature: default_gen_temperature(),
            select_temperature: default_select_temperature(),
            max_retries: default_max_retries(),
            code_block_warn_lines: default_code_block_warn_lines(),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        for t in [self.gen_temperature, self.select_temperature] {
            if !(0.0..=2.0).contains(&t) {
                return Err(BackendError::InvalidConfig(format!(
                    "temperature {t} outside [0, 2]"
                )));
            }
        }
        Ok(())
    }

    /// Builds the configured backend. Relative fixture paths resolve
    /// against `base`.
    pub fn build(&self, base: &Path) -> Result<Box<dyn TextBackend>, BackendError> {
        self.validate()?;
        match self.kind {
            BackendKind::Scripted => {
                let path = if Path::new(&self.fixture).is_absolute() {
                    Path::new(&self.fixture).to_path_buf()
                } else {
                    base.join(&self.fixture)
                };
                Ok(Box::new(ScriptedBackend::load(&path)?))
            }
            BackendKind::Http => Ok(Box::new(HttpBackend::new(
                self.endpoint.clone(),
                self.model.clone(),
                self.credential_env.clone(),
            )?)),
        }
    }
}

/// One scripted rule: omitted key fields match any value; the rule
/// with the most concrete fields wins, ties broken by file order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FixtureMatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call_index: Option<u32>,
}

impl FixtureMatch {
    fn matches(&self, key: &CallKey) -> bool {
        self.bug_id.as_ref().is_none_or(|v| *v == key.bug_id)
            && self.stage.is_none_or(|v| v == key.stage)
            && self.tree_id.is_none_or(|v| v == key.tree_id)
            && self.node_depth.is_none_or(|v| v == key.node_depth)
            && self.call_index.is_none_or(|v| v == key.call_index)
    }

    fn specificity(&self) -> usize {
        [
            self.bug_id.is_some(),
            self.stage.is_some(),
            self.tree_id.is_some(),
            self.node_depth.is_some(),
            self.call_index.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureRule {
    #[serde(default, rename = "match")]
    pub key: FixtureMatch,
    pub response: String,
}

/// Scripted-backend fixture file: `{"responses": [{"match": {...},
/// "response": "..."}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedFixture {
    pub responses: Vec<FixtureRule>,
}

pub struct ScriptedBackend {
    rules: Vec<FixtureRule>,
}

impl ScriptedBackend {
    pub fn new(fixture: ScriptedFixture) -> Self {
        ScriptedBackend {
            rules: fixture.responses,
        }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path).map_err(|e| BackendError::Fixture {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let fixture: ScriptedFixture =
            serde_json::from_str(&text).map_err(|e| BackendError::Fixture {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
        Ok(Self::new(fixture))
    }
}

impl TextBackend for ScriptedBackend {
    fn complete(&self, key: &CallKey, _prompt: &str, _temperature: f64) -> Result<String, BackendError> {
        let mut best: Option<&FixtureRule> = None;
        for rule in &self.rules {
            if !rule.key.matches(key) {
                continue;
            }
            match best {
                Some(b) if b.key.specificity() >= rule.key.specificity() => {}
                _ => best = Some(rule),
            }
        }
        match best {
            Some(rule) => Ok(rule.response.clone()),
            None => Err(BackendError::NoScriptedResponse {
                bug_id: key.bug_id.clone(),
                stage: key.stage,
                tree_id: key.tree_id,
                node_depth: key.node_depth,
                call_index: key.call_index,
            }),
        }
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

/// Minimal chat-completion-style HTTP backend: endpoint, model name,
/// temperature, a single user message.
pub struct HttpBackend {
    endpoint: String,
    model: String,
    credential_env: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(endpoint: String, model: String, credential_env: String) -> Result<Self, BackendError> {
        if endpoint.is_empty() {
            return Err(BackendError::InvalidConfig("http backend needs an endpoint".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(300))
            .build()
            .map_err(|e| BackendError::Http(e.to_string()))?;
        Ok(HttpBackend {
            endpoint,
            model,
            credential_env,
            client,
        })
    }
}

impl TextBackend for HttpBackend {
    fn complete(&self, _key: &CallKey, prompt: &str, temperature: f64) -> Result<String, BackendError> {
        let credential = std::env::var(&self.credential_env)
            .map_err(|_| BackendError::MissingCredential(self.credential_env.clone()))?;
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        });
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(credential)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Http(e.to_string()))?;
        let status = resp.status();
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Http(format!("status {status}: {value}")));
        }
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::BadResponse("missing choices[0].message.content".into()))
    }

    fn name(&self) -> &str {
        "http"
    }
}

/// Per-run call accounting: calls made, prompt and response characters.
#[derive(Debug, Default)]
pub struct CallMeter {
    calls: AtomicU64,
    prompt_chars: AtomicU64,
    response_chars: AtomicU64,
}

/// A snapshot of [`CallMeter`] totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub calls: u64,
    pub prompt_chars: u64,
    pub response_chars: u64,
}

impl CallMeter {
    pub fn record(&self, prompt: &str, response: &str) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.prompt_chars
            .fetch_add(prompt.chars().count() as u64, Ordering::Relaxed);
        self.response_chars
            .fetch_add(response.chars().count() as u64, Ordering::Relaxed);
    }

    /// Failed calls still count toward `calls` and prompt volume.
    pub fn record_failure(&self, prompt: &str) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.prompt_chars
            .fetch_add(prompt.chars().count() as u64, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> CallCounts {
        CallCounts {
            calls: self.calls.load(Ordering::Relaxed),
            prompt_chars: self.prompt_chars.load(Ordering::Relaxed),
            response_chars: self.response_chars.load(Ordering::Relaxed),
        }
    }
}

impl CallCounts {
    pub fn add(&mut self, other: CallCounts) {
        self.calls += other.calls;
        self.prompt_chars += other.prompt_chars;
        self.response_chars += other.response_chars;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(stage: Stage, tree: u32, depth: u32, call: u32) -> CallKey {
        CallKey {
            bug_id: "bug".into(),
            stage,
            tree_id: tree,
            node_depth: depth,
            call_index: call,
        }
    }

    #[test]
    fn most_specific_rule_wins() {
        let backend = ScriptedBackend::new(ScriptedFixture {
            responses: vec![
                FixtureRule {
                    key: FixtureMatch {
                        stage: Some(Stage::HypGen),
                        ..Default::default()
                    },
                    response: "generic".into(),
                },
                FixtureRule {
                    key: FixtureMatch {
                        stage: Some(Stage::HypGen),
                        node_depth: Some(2),
                        ..Default::default()
                    },
                    response: "depth2".into(),
                },
            ],
        });
        assert_eq!(
            backend.complete(&key(Stage::HypGen, 1, 1, 0), "", 0.8).unwrap(),
            "generic"
        );
        assert_eq!(
            backend.complete(&key(Stage::HypGen, 1, 2, 0), "", 0.8).unwrap(),
            "depth2"
        );
    }

    #[test]
    fn missing_rule_is_error() {
        let backend = ScriptedBackend::new(ScriptedFixture { responses: vec![] });
        assert!(backend.complete(&key(Stage::HypGen, 1, 1, 0), "", 0.8).is_err());
    }

    #[test]
    fn first_rule_wins_ties() {
        let backend = ScriptedBackend::new(ScriptedFixture {
            responses: vec![
                FixtureRule {
                    key: FixtureMatch {
                        tree_id: Some(1),
                        ..Default::default()
                    },
                    response: "first".into(),
                },
                FixtureRule {
                    key: FixtureMatch {
                        node_depth: Some(1),
                        ..Default::default()
                    },
                    response: "second".into(),
                },
            ],
        });
        assert_eq!(
            backend.complete(&key(Stage::PatchGen, 1, 1, 0), "", 0.8).unwrap(),
            "first"
        );
    }

    #[test]
    fn meter_accumulates() {
        let meter = CallMeter::default();
        meter.record("abc", "de");
        meter.record_failure("xy");
        let snap = meter.snapshot();
        assert_eq!(snap.calls, 2);
        assert_eq!(snap.prompt_chars, 5);
        assert_eq!(snap.response_chars, 2);
    }

    #[test]
    fn temperature_validation() {
        let cfg = BackendConfig {
            gen_temperature: 2.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
