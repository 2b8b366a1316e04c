//! Search backends: live serper-style HTTP, in-memory scripted pages, and a
//! file-backed record/replay cache layer.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{SearchError, SearchQuery};
use crate::provider::CacheMode;

/// Environment variable holding the search API key.
pub const SEARCH_API_KEY_VAR: &str = "SEARCH_API_KEY";

/// Default serper-style endpoint.
pub const DEFAULT_SEARCH_ENDPOINT: &str = "https://google.serper.dev/search";

/// Raw-page fetcher; the client parses and filters on top of this.
pub trait SearchBackend: Send + Sync {
    fn fetch(&self, query: &SearchQuery) -> Result<Value, SearchError>;

    /// Endpoint identity folded into cache keys.
    fn endpoint(&self) -> &str;
}

/// Cache key over (endpoint, query_string, language, num_results).
pub fn cache_key(endpoint: &str, query: &SearchQuery) -> String {
    let mut hasher = Sha256::new();
    hasher.update(endpoint.as_bytes());
    hasher.update([0u8]);
    hasher.update(query.query_string.as_bytes());
    hasher.update([0x1fu8]);
    hasher.update(query.language.as_bytes());
    hasher.update([0x1fu8]);
    hasher.update(query.num_results.to_le_bytes());
    let digest = hasher.finalize();
    crate::provider::hex_lower(&digest[..16])
}

/// Live serper-style backend: POST `{"q", "hl", "num"}` with the API key
/// header.
pub struct HttpSearchBackend {
    endpoint: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpSearchBackend {
    /// Reads the API key from `SEARCH_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>) -> Result<Self, String> {
        let api_key = std::env::var(SEARCH_API_KEY_VAR)
            .map_err(|_| format!("{SEARCH_API_KEY_VAR} is not set"))?;
        Ok(Self {
            endpoint: endpoint.into(),
            api_key,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(30))
                .build()
                .expect("reqwest client"),
        })
    }
}

impl SearchBackend for HttpSearchBackend {
    fn fetch(&self, query: &SearchQuery) -> Result<Value, SearchError> {
        let body = serde_json::json!({
            "q": query.query_string,
            "hl": query.language,
            "num": query.num_results,
        });
        let response = self
            .client
            .post(&self.endpoint)
            .header("X-API-KEY", &self.api_key)
            .json(&body)
            .send()
            .map_err(|e| SearchError::Transport(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 || status.as_u16() == 402 {
            return Err(SearchError::Quota(format!(
                "search API returned HTTP {status}; check the plan limits for the key in {SEARCH_API_KEY_VAR}"
            )));
        }
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(SearchError::Transport(format!(
                "HTTP {status}: {}",
                text.chars().take(300).collect::<String>()
            )));
        }
        response
            .json()
            .map_err(|e| SearchError::Transport(format!("malformed search body: {e}")))
    }

    fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

/// In-memory scripted backend keyed by (query_string, language).
#[derive(Debug, Default)]
pub struct ScriptedSearch {
    pages: HashMap<(String, String), Value>,
    endpoint: String,
}

impl ScriptedSearch {
    pub fn new() -> Self {
        Self {
            pages: HashMap::new(),
            endpoint: DEFAULT_SEARCH_ENDPOINT.to_string(),
        }
    }

    pub fn with_page(
        mut self,
        query_string: impl Into<String>,
        language: impl Into<String>,
        page: Value,
    ) -> Self {
        self.insert(query_string, language, page);
        self
    }

    pub fn insert(
        &mut self,
        query_string: impl Into<String>,
        language: impl Into<String>,
        page: Value,
    ) {
        self.pages
            .insert((query_string.into(), language.into()), page);
    }
}

impl SearchBackend for ScriptedSearch {
    fn fetch(&self, query: &SearchQuery) -> Result<Value, SearchError> {
        self.pages
            .get(&(query.query_string.clone(), query.language.clone()))
            .cloned()
            .ok_or_else(|| SearchError::ScriptMiss {
                query: query.query_string.clone(),
                language: query.language.clone(),
            })
    }

    fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SearchCacheEntry {
    request: CachedRequest,
    response: Value,
    fetched_at: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CachedRequest {
    endpoint: String,
    q: String,
    hl: String,
    num: usize,
}

/// Record/replay cache: `<dir>/search/<first-2-hex>/<hash>.json` holding
/// request, response, and fetch time. Writes are atomic.
pub struct CachedSearch {
    inner: Option<Arc<dyn SearchBackend>>,
    dir: PathBuf,
    mode: CacheMode,
    endpoint: String,
}

impl CachedSearch {
    pub fn record(inner: Arc<dyn SearchBackend>, dir: impl Into<PathBuf>) -> Self {
        let endpoint = inner.endpoint().to_string();
        Self {
            inner: Some(inner),
            dir: dir.into(),
            mode: CacheMode::Record,
            endpoint,
        }
    }

    /// Replay against a recorded directory; `endpoint` must match the one
    /// used at record time.
    pub fn replay(dir: impl Into<PathBuf>, endpoint: impl Into<String>) -> Self {
        Self {
            inner: None,
            dir: dir.into(),
            mode: CacheMode::Replay,
            endpoint: endpoint.into(),
        }
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join("search").join(&key[..2]).join(format!("{key}.json"))
    }

    fn read_entry(&self, path: &Path) -> Result<Option<Value>, SearchError> {
        if !path.exists() {
            return Ok(None);
        }
        let data = std::fs::read_to_string(path).map_err(|e| SearchError::Cache {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let entry: SearchCacheEntry =
            serde_json::from_str(&data).map_err(|e| SearchError::Cache {
                path: path.to_path_buf(),
                message: format!("corrupt cache entry: {e}"),
            })?;
        Ok(Some(entry.response))
    }
}

impl SearchBackend for CachedSearch {
    fn fetch(&self, query: &SearchQuery) -> Result<Value, SearchError> {
        let key = cache_key(&self.endpoint, query);
        let path = self.entry_path(&key);
        if let Some(hit) = self.read_entry(&path)? {
            return Ok(hit);
        }
        match self.mode {
            CacheMode::Replay => Err(SearchError::CacheMiss {
                query: query.query_string.clone(),
                language: query.language.clone(),
                path,
            }),
            CacheMode::Record | CacheMode::Off => {
                let inner = self.inner.as_ref().ok_or_else(|| SearchError::Cache {
                    path: path.clone(),
                    message: "record mode requires an inner backend".to_string(),
                })?;
                let response = inner.fetch(query)?;
                if self.mode == CacheMode::Record {
                    let entry = SearchCacheEntry {
                        request: CachedRequest {
                            endpoint: self.endpoint.clone(),
                            q: query.query_string.clone(),
                            hl: query.language.clone(),
                            num: query.num_results,
                        },
                        response: response.clone(),
                        fetched_at: chrono::Utc::now().to_rfc3339(),
                    };
                    crate::provider::write_atomic(
                        &path,
                        &serde_json::to_vec_pretty(&entry).expect("serializable"),
                    )
                    .map_err(|e| SearchError::Cache {
                        path: path.clone(),
                        message: e.to_string(),
                    })?;
                }
                Ok(response)
            }
        }
    }

    fn endpoint(&self) -> &str {
        &self.endpoint
    }
}
