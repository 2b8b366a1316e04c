//! Uniform chat-completion interface over LLM backends, the prompt-template
//! registry, response-format parsers, and token accounting.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub mod live;
pub mod parse;
pub mod templates;
pub mod testing;

pub use live::LiveProvider;
pub use parse::{parse_bracketed_list, parse_claim_list, parse_object, serialize_bracketed_list, ParseError};
pub use templates::{placeholders, render, TemplateId, CORRECTIVE_NOTE_KEY};

use crate::model::estimate_tokens;

#[derive(Debug, Clone, Error)]
#[error("template {template}: {message}")]
pub struct TemplateError {
    pub template: TemplateId,
    pub message: String,
}

impl TemplateError {
    pub fn new(template: TemplateId, message: String) -> Self {
        Self { template, message }
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    /// Network or backend failure; retryable.
    #[error("transport error: {0}")]
    Transport(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    /// Scripted or replay backend has no entry for this request.
    #[error("no scripted response for template {template} fingerprint {fingerprint}")]
    ScriptMiss {
        template: TemplateId,
        fingerprint: String,
    },
    #[error("cache I/O at {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

/// One chat-completion request: a template plus its variable bindings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub template_id: TemplateId,
    pub variables: BTreeMap<String, String>,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn new(template_id: TemplateId, variables: BTreeMap<String, String>, temperature: f64) -> Self {
        Self {
            template_id,
            variables,
            temperature,
            max_tokens: None,
        }
    }

    /// Rendered prompt; fails when a placeholder lacks a binding.
    pub fn render(&self) -> Result<String, TemplateError> {
        templates::render(self.template_id, &self.variables)
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(self.template_id, &self.variables)
    }
}

/// Stable fingerprint of (template, variables); prompt-wording edits do not
/// change it, so recorded fixtures survive template tweaks.
pub fn fingerprint(template: TemplateId, variables: &BTreeMap<String, String>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(template.name().as_bytes());
    hasher.update([0u8]);
    for (key, value) in variables {
        hasher.update(key.as_bytes());
        hasher.update([0x1fu8]);
        hasher.update(value.as_bytes());
        hasher.update([0x1eu8]);
    }
    let digest = hasher.finalize();
    hex_lower(&digest[..8])
}

pub(crate) fn hex_lower(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A completion plus token usage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub model_id: String,
}

/// Any chat-completion backend: live, scripted, or cached. Implementations
/// must be safe for concurrent calls.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ProviderResponse, ProviderError>;
}

/// Append-only log of provider calls for cost accounting.
#[derive(Debug, Default)]
pub struct CallLedger {
    entries: Mutex<Vec<CallRecord>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub tag: Option<String>,
    pub template: TemplateId,
    pub fingerprint: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTotals {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl CallLedger {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn record(&self, record: CallRecord) {
        self.entries.lock().expect("ledger lock").push(record);
    }

    pub fn entries(&self) -> Vec<CallRecord> {
        self.entries.lock().expect("ledger lock").clone()
    }

    pub fn totals(&self) -> TokenTotals {
        self.totals_for(None)
    }

    /// Totals for one tag, or across all entries when `tag` is `None`.
    pub fn totals_for(&self, tag: Option<&str>) -> TokenTotals {
        let entries = self.entries.lock().expect("ledger lock");
        let mut totals = TokenTotals::default();
        for e in entries.iter() {
            if tag.is_none() || e.tag.as_deref() == tag {
                totals.prompt_tokens += e.prompt_tokens;
                totals.completion_tokens += e.completion_tokens;
            }
        }
        totals
    }

    pub fn calls_for(&self, tag: &str) -> Vec<CallRecord> {
        self.entries
            .lock()
            .expect("ledger lock")
            .iter()
            .filter(|e| e.tag.as_deref() == Some(tag))
            .cloned()
            .collect()
    }
}

/// A provider plus the shared ledger and an optional tag (claim id) stamped
/// onto every recorded call.
#[derive(Clone)]
pub struct LlmHandle {
    provider: Arc<dyn ChatProvider>,
    ledger: Arc<CallLedger>,
    tag: Option<String>,
    pub temperature: f64,
}

impl LlmHandle {
    pub fn new(provider: Arc<dyn ChatProvider>, ledger: Arc<CallLedger>, temperature: f64) -> Self {
        Self {
            provider,
            ledger,
            tag: None,
            temperature,
        }
    }

    pub fn tagged(&self, tag: impl Into<String>) -> Self {
        Self {
            provider: Arc::clone(&self.provider),
            ledger: Arc::clone(&self.ledger),
            tag: Some(tag.into()),
            temperature: self.temperature,
        }
    }

    pub fn ledger(&self) -> &Arc<CallLedger> {
        &self.ledger
    }

    pub fn tag(&self) -> Option<&str> {
        self.tag.as_deref()
    }

    /// Token totals recorded under this handle's tag.
    pub fn tag_totals(&self) -> TokenTotals {
        match &self.tag {
            Some(tag) => self.ledger.totals_for(Some(tag)),
            None => self.ledger.totals(),
        }
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ProviderResponse, ProviderError> {
        let response = self.provider.complete(request)?;
        self.ledger.record(CallRecord {
            tag: self.tag.clone(),
            template: request.template_id,
            fingerprint: request.fingerprint(),
            prompt_tokens: response.prompt_tokens,
            completion_tokens: response.completion_tokens,
        });
        Ok(response)
    }

    pub fn complete_template(
        &self,
        template: TemplateId,
        variables: BTreeMap<String, String>,
    ) -> Result<ProviderResponse, ProviderError> {
        self.complete(&ChatRequest::new(template, variables, self.temperature))
    }
}

const CORRECTIVE_NOTE: &str = "Your previous response could not be parsed. Respond with EXACTLY the demanded format and nothing else.";

fn with_corrective_note(mut variables: BTreeMap<String, String>) -> BTreeMap<String, String> {
    variables.insert(CORRECTIVE_NOTE_KEY.to_string(), CORRECTIVE_NOTE.to_string());
    variables
}

/// Completes and parses a bracketed-list response, retrying once with a
/// corrective suffix on a parse failure.
pub fn complete_list(
    llm: &LlmHandle,
    template: TemplateId,
    variables: BTreeMap<String, String>,
) -> Result<Vec<String>, ProviderError> {
    let response = llm.complete_template(template, variables.clone())?;
    match parse_bracketed_list(&response.text) {
        Ok(items) => Ok(items),
        Err(first) => {
            tracing::warn!(template = %template, error = %first, "list parse failed, retrying once");
            let retry = llm.complete_template(template, with_corrective_note(variables))?;
            parse_bracketed_list(&retry.text).map_err(ProviderError::Parse)
        }
    }
}

/// Completes and parses an object response, retrying once with a corrective
/// suffix on a parse failure.
pub fn complete_object(
    llm: &LlmHandle,
    template: TemplateId,
    variables: BTreeMap<String, String>,
    required_keys: &[&str],
) -> Result<serde_json::Map<String, serde_json::Value>, ProviderError> {
    let response = llm.complete_template(template, variables.clone())?;
    match parse_object(&response.text, required_keys) {
        Ok(map) => Ok(map),
        Err(first) => {
            tracing::warn!(template = %template, error = %first, "object parse failed, retrying once");
            let retry = llm.complete_template(template, with_corrective_note(variables))?;
            parse_object(&retry.text, required_keys).map_err(ProviderError::Parse)
        }
    }
}

/// In-memory scripted backend keyed by (template, variable fingerprint).
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    responses: std::collections::HashMap<(TemplateId, String), String>,
    model_id: String,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self {
            responses: Default::default(),
            model_id: "scripted".to_string(),
        }
    }

    pub fn with_response(
        mut self,
        template: TemplateId,
        variables: &BTreeMap<String, String>,
        text: impl Into<String>,
    ) -> Self {
        self.insert(template, variables, text);
        self
    }

    pub fn insert(
        &mut self,
        template: TemplateId,
        variables: &BTreeMap<String, String>,
        text: impl Into<String>,
    ) {
        self.responses
            .insert((template, fingerprint(template, variables)), text.into());
    }

    pub fn insert_by_fingerprint(&mut self, template: TemplateId, fp: String, text: String) {
        self.responses.insert((template, fp), text);
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ProviderResponse, ProviderError> {
        let prompt = request.render()?;
        let fp = request.fingerprint();
        let text = self
            .responses
            .get(&(request.template_id, fp.clone()))
            .ok_or(ProviderError::ScriptMiss {
                template: request.template_id,
                fingerprint: fp,
            })?;
        Ok(ProviderResponse {
            text: text.clone(),
            prompt_tokens: estimate_tokens(&prompt) as u64,
            completion_tokens: estimate_tokens(text) as u64,
            model_id: self.model_id.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheMode {
    Off,
    Record,
    Replay,
}

impl std::str::FromStr for CacheMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(CacheMode::Off),
            "record" => Ok(CacheMode::Record),
            "replay" => Ok(CacheMode::Replay),
            other => Err(format!("unknown cache mode {other:?} (off|record|replay)")),
        }
    }
}

/// One cache file per request fingerprint, holding request and response.
#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    template: TemplateId,
    fingerprint: String,
    variables: BTreeMap<String, String>,
    response: ProviderResponse,
}

/// File-backed record/replay layer.
///
/// Record mode answers from disk when the entry exists, otherwise calls the
/// inner provider and persists the response (atomic write-temp-then-rename).
/// Replay mode never touches the network.
pub struct CachedProvider {
    inner: Option<Arc<dyn ChatProvider>>,
    dir: PathBuf,
    mode: CacheMode,
}

impl CachedProvider {
    pub fn record(inner: Arc<dyn ChatProvider>, dir: impl Into<PathBuf>) -> Self {
        Self {
            inner: Some(inner),
            dir: dir.into(),
            mode: CacheMode::Record,
        }
    }

    pub fn replay(dir: impl Into<PathBuf>) -> Self {
        Self {
            inner: None,
            dir: dir.into(),
            mode: CacheMode::Replay,
        }
    }

    fn entry_path(&self, template: TemplateId, fp: &str) -> PathBuf {
        self.dir.join("llm").join(format!("{}-{fp}.json", template.name()))
    }

    fn read_entry(&self, path: &Path) -> Result<Option<ProviderResponse>, ProviderError> {
        if !path.exists() {
            return Ok(None);
        }
        let data = std::fs::read_to_string(path).map_err(|e| ProviderError::Cache {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let entry: CacheEntry = serde_json::from_str(&data).map_err(|e| ProviderError::Cache {
            path: path.to_path_buf(),
            message: format!("corrupt cache entry: {e}"),
        })?;
        Ok(Some(entry.response))
    }
}

impl ChatProvider for CachedProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ProviderResponse, ProviderError> {
        // Render up front so template errors surface identically in all modes.
        request.render()?;
        let fp = request.fingerprint();
        let path = self.entry_path(request.template_id, &fp);
        if let Some(hit) = self.read_entry(&path)? {
            return Ok(hit);
        }
        match self.mode {
            CacheMode::Replay => Err(ProviderError::ScriptMiss {
                template: request.template_id,
                fingerprint: fp,
            }),
            CacheMode::Record | CacheMode::Off => {
                let inner = self.inner.as_ref().ok_or_else(|| ProviderError::Cache {
                    path: path.clone(),
                    message: "record mode requires an inner provider".to_string(),
                })?;
                let response = inner.complete(request)?;
                if self.mode == CacheMode::Record {
                    let entry = CacheEntry {
                        template: request.template_id,
                        fingerprint: fp,
                        variables: request.variables.clone(),
                        response: response.clone(),
                    };
                    write_atomic(&path, &serde_json::to_vec_pretty(&entry).expect("serializable"))
                        .map_err(|e| ProviderError::Cache {
                            path: path.clone(),
                            message: e.to_string(),
                        })?;
                }
                Ok(response)
            }
        }
    }
}

/// Atomic file write: temp file in the same directory, then rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".tmp-{}-{}",
        std::process::id(),
        path.file_name().and_then(|n| n.to_str()).unwrap_or("entry")
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::testing::SequenceProvider;

    fn ground_vars() -> BTreeMap<String, String> {
        [
            ("prompt", "p"),
            ("response", "r"),
            ("claim", "Universal Studios Singapore has six themed zones."),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
    }

    #[test]
    fn scripted_provider_returns_canned_text() {
        let vars = ground_vars();
        let provider =
            ScriptedProvider::new().with_response(TemplateId::Ground, &vars, "{\"time\": \"Now\"}");
        let req = ChatRequest::new(TemplateId::Ground, vars, 0.01);
        let resp = provider.complete(&req).unwrap();
        assert_eq!(resp.text, "{\"time\": \"Now\"}");
        assert!(resp.prompt_tokens > 0);

        let mut other = ground_vars();
        other.insert("claim".into(), "different".into());
        let miss = provider.complete(&ChatRequest::new(TemplateId::Ground, other, 0.01));
        assert!(matches!(miss, Err(ProviderError::ScriptMiss { .. })));
    }

    #[test]
    fn scripted_provider_still_validates_placeholders() {
        let empty = BTreeMap::new();
        let provider = ScriptedProvider::new().with_response(TemplateId::Ground, &empty, "x");
        let err = provider
            .complete(&ChatRequest::new(TemplateId::Ground, empty, 0.01))
            .unwrap_err();
        assert!(matches!(err, ProviderError::Template(_)));
    }

    #[test]
    fn cache_records_once_and_replays_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let seq = SequenceProvider::new();
        seq.push(TemplateId::Xle, "['German']");
        seq.push(TemplateId::Xle, "SHOULD NEVER BE SERVED");
        let counted = Arc::new(seq);
        let cache = CachedProvider::record(counted.clone(), dir.path());
        let vars: BTreeMap<String, String> = [("input".to_string(), "claim".to_string())].into();
        let req = ChatRequest::new(TemplateId::Xle, vars, 0.01);

        let first = cache.complete(&req).unwrap();
        // Second identical call must be served from disk, not the sequence.
        let second = cache.complete(&req).unwrap();
        assert_eq!(first.text, "['German']");
        assert_eq!(first, second);
        assert_eq!(counted.remaining(TemplateId::Xle), 1);

        // Replay from a fresh handle without any inner provider.
        let replay = CachedProvider::replay(dir.path());
        let third = replay.complete(&req).unwrap();
        assert_eq!(third, first);

        let mut other_vars = BTreeMap::new();
        other_vars.insert("input".to_string(), "unseen".to_string());
        let miss = replay.complete(&ChatRequest::new(TemplateId::Xle, other_vars, 0.01));
        assert!(matches!(miss, Err(ProviderError::ScriptMiss { .. })));
    }

    #[test]
    fn ledger_totals_are_monotone_and_partition_by_tag() {
        let ledger = CallLedger::new();
        let vars = ground_vars();
        let provider: Arc<dyn ChatProvider> = Arc::new(
            ScriptedProvider::new().with_response(TemplateId::Ground, &vars, "{\"a\": 1}"),
        );
        let handle = LlmHandle::new(provider, Arc::clone(&ledger), 0.01);
        let c1 = handle.tagged("c1");
        let c2 = handle.tagged("c2");

        let mut last_total = 0;
        for handle in [&c1, &c2, &c1] {
            handle
                .complete(&ChatRequest::new(TemplateId::Ground, vars.clone(), 0.01))
                .unwrap();
            let t = ledger.totals();
            let now = t.prompt_tokens + t.completion_tokens;
            assert!(now > last_total, "token accounting must be monotone");
            last_total = now;
        }
        assert_eq!(ledger.calls_for("c1").len(), 2);
        assert_eq!(ledger.calls_for("c2").len(), 1);
        let sum = ledger.totals_for(Some("c1")).prompt_tokens
            + ledger.totals_for(Some("c2")).prompt_tokens;
        assert_eq!(sum, ledger.totals().prompt_tokens);
    }

    #[test]
    fn complete_list_retries_once_with_corrective_note() {
        let vars: BTreeMap<String, String> = [("input".to_string(), "c".to_string())].into();
        let retry_vars = with_corrective_note(vars.clone());
        let provider: Arc<dyn ChatProvider> = Arc::new(
            ScriptedProvider::new()
                .with_response(TemplateId::Xle, &vars, "gibberish without a list")
                .with_response(TemplateId::Xle, &retry_vars, "['German']"),
        );
        let handle = LlmHandle::new(provider, CallLedger::new(), 0.01);
        let got = complete_list(&handle, TemplateId::Xle, vars).unwrap();
        assert_eq!(got, vec!["German"]);
    }

    #[test]
    fn complete_object_fails_after_two_bad_attempts() {
        let vars: BTreeMap<String, String> = [("input".to_string(), "c".to_string())].into();
        let retry_vars = with_corrective_note(vars.clone());
        let provider: Arc<dyn ChatProvider> = Arc::new(
            ScriptedProvider::new()
                .with_response(TemplateId::Xle, &vars, "junk")
                .with_response(TemplateId::Xle, &retry_vars, "still junk"),
        );
        let handle = LlmHandle::new(provider, CallLedger::new(), 0.01);
        let err = complete_object(&handle, TemplateId::Xle, vars, &[]).unwrap_err();
        assert!(matches!(err, ProviderError::Parse(_)));
        assert_eq!(handle.ledger().entries().len(), 2);
    }
}
