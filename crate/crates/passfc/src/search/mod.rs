//! Web-search execution: top-k organic-result parsing, leakage guards
//! (blocked/denied domains, cutoff dates), URL-normalized deduplication, and
//! a per-host politeness gate.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use chrono::NaiveDate;
use serde_json::Value;
use thiserror::Error;

pub mod backend;
pub mod testing;

pub use backend::{
    cache_key, CachedSearch, HttpSearchBackend, ScriptedSearch, SearchBackend,
    DEFAULT_SEARCH_ENDPOINT, SEARCH_API_KEY_VAR,
};

use crate::model::{EvidenceItem, ModelError};
use crate::query::DomainPolicy;

/// Engine page cap.
pub const MAX_PAGE_SIZE: usize = 20;

const TRANSPORT_RETRIES: usize = 3;

/// In-flight request cap per endpoint host.
const HOST_POLITENESS_LIMIT: usize = 4;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("search transport error: {0}")]
    Transport(String),
    /// Exhausted quota; aborts the run with an actionable message.
    #[error("search quota exhausted: {0}")]
    Quota(String),
    #[error("invalid search query: {0}")]
    InvalidQuery(#[from] ModelError),
    #[error("no scripted page for query {query:?} [{language}]")]
    ScriptMiss { query: String, language: String },
    #[error("replay cache miss for query {query:?} [{language}] at {path}")]
    CacheMiss {
        query: String,
        language: String,
        path: PathBuf,
    },
    #[error("search cache I/O at {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

/// One executable engine request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchQuery {
    pub query_string: String,
    pub language: String,
    pub num_results: usize,
    pub cutoff: Option<NaiveDate>,
}

impl SearchQuery {
    pub fn new(
        query_string: impl Into<String>,
        language: impl Into<String>,
        num_results: usize,
        cutoff: Option<NaiveDate>,
    ) -> Result<Self, ModelError> {
        let query_string = query_string.into();
        if query_string.trim().is_empty() {
            return Err(ModelError::Invalid {
                field: "query_string",
                reason: "must be non-empty".to_string(),
            });
        }
        if num_results == 0 || num_results > MAX_PAGE_SIZE {
            return Err(ModelError::Invalid {
                field: "num_results",
                reason: format!("must be in 1..={MAX_PAGE_SIZE}, got {num_results}"),
            });
        }
        Ok(Self {
            query_string,
            language: language.into(),
            num_results,
            cutoff,
        })
    }
}

/// Parsed results of one engine call, with the raw payload retained for the
/// cache.
#[derive(Debug, Clone)]
pub struct SearchPage {
    pub items: Vec<EvidenceItem>,
    pub raw: Value,
}

/// Suffix match on registrable domain labels: `news.bbc.co.uk` matches
/// `bbc.co.uk` but `notbbc.co.uk` does not.
pub fn host_matches(host: &str, suffix: &str) -> bool {
    let host = host.trim_matches('.').to_ascii_lowercase();
    let suffix = suffix.trim_matches('.').to_ascii_lowercase();
    if suffix.is_empty() {
        return false;
    }
    host == suffix || host.ends_with(&format!(".{suffix}"))
}

fn blocked_by(host: &str, policy: &DomainPolicy, blocked: &[String]) -> bool {
    policy.deny.iter().any(|d| host_matches(host, d))
        || blocked.iter().any(|d| host_matches(host, d))
}

/// Best-effort parse of engine-reported publish dates.
pub fn parse_publish_date(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    for format in ["%Y-%m-%d", "%b %d, %Y", "%B %d, %Y", "%d %b %Y", "%d %B %Y"] {
        if let Ok(date) = NaiveDate::parse_from_str(raw, format) {
            return Some(date);
        }
    }
    None
}

struct HostGate {
    counts: Mutex<HashMap<String, usize>>,
    available: Condvar,
}

impl HostGate {
    fn new() -> Self {
        Self {
            counts: Mutex::new(HashMap::new()),
            available: Condvar::new(),
        }
    }

    fn acquire(&self, host: &str) {
        let mut counts = self.counts.lock().expect("gate lock");
        while counts.get(host).copied().unwrap_or(0) >= HOST_POLITENESS_LIMIT {
            counts = self.available.wait(counts).expect("gate wait");
        }
        *counts.entry(host.to_string()).or_insert(0) += 1;
    }

    fn release(&self, host: &str) {
        let mut counts = self.counts.lock().expect("gate lock");
        if let Some(count) = counts.get_mut(host) {
            *count = count.saturating_sub(1);
        }
        self.available.notify_all();
    }
}

/// Executes queries against a backend and turns organic results into
/// leakage-guarded evidence. Safe for concurrent use.
pub struct SearchClient {
    backend: Arc<dyn SearchBackend>,
    calls: AtomicU64,
    gate: HostGate,
    /// Sleep between transport retries; zeroed in tests.
    retry_base_delay: Duration,
}

impl SearchClient {
    pub fn new(backend: Arc<dyn SearchBackend>) -> Self {
        Self {
            backend,
            calls: AtomicU64::new(0),
            gate: HostGate::new(),
            retry_base_delay: Duration::from_millis(200),
        }
    }

    pub fn without_retry_delay(mut self) -> Self {
        self.retry_base_delay = Duration::ZERO;
        self
    }

    /// Engine calls made so far (cache hits included).
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn endpoint_host(&self) -> String {
        url::Url::parse(self.backend.endpoint())
            .ok()
            .and_then(|u| u.host_str().map(str::to_string))
            .unwrap_or_else(|| self.backend.endpoint().to_string())
    }

    fn fetch_with_retry(&self, query: &SearchQuery) -> Result<Value, SearchError> {
        let host = self.endpoint_host();
        self.gate.acquire(&host);
        let result = (|| {
            let mut delay = self.retry_base_delay;
            let mut last = None;
            for attempt in 0..TRANSPORT_RETRIES {
                self.calls.fetch_add(1, Ordering::Relaxed);
                match self.backend.fetch(query) {
                    Ok(value) => return Ok(value),
                    Err(SearchError::Transport(message)) => {
                        tracing::warn!(attempt, %message, "search transport error");
                        last = Some(SearchError::Transport(message));
                        if !delay.is_zero() {
                            std::thread::sleep(delay);
                            delay *= 2;
                        }
                    }
                    Err(other) => return Err(other),
                }
            }
            Err(last.expect("at least one attempt"))
        })();
        self.gate.release(&host);
        result
    }

    /// Runs one query and applies the guards: blocked and denied hosts are
    /// removed post-hoc as defense in depth, items dated after the cutoff are
    /// removed (undated items are kept; the query-level `before:` clause is
    /// the primary enforcement), engine order is preserved.
    pub fn search(
        &self,
        query: &SearchQuery,
        policy: &DomainPolicy,
        blocked: &[String],
        query_origin: &str,
    ) -> Result<SearchPage, SearchError> {
        let raw = self.fetch_with_retry(query)?;
        let mut items = Vec::new();
        let organic = raw.get("organic").and_then(Value::as_array);
        for entry in organic.into_iter().flatten() {
            if items.len() >= query.num_results {
                break;
            }
            let title = entry.get("title").and_then(Value::as_str).unwrap_or("");
            let snippet = entry.get("snippet").and_then(Value::as_str).unwrap_or("");
            let Some(link) = entry.get("link").and_then(Value::as_str) else {
                continue;
            };
            let mut item =
                match EvidenceItem::new(title, snippet, link, &query.language, query_origin) {
                    Ok(item) => item,
                    Err(e) => {
                        tracing::debug!(link, error = %e, "dropping result with unusable URL");
                        continue;
                    }
                };
            if let Some(date) = entry
                .get("date")
                .and_then(Value::as_str)
                .and_then(parse_publish_date)
            {
                item = item.with_published(date);
            }
            let Some(host) = item.host() else { continue };
            if blocked_by(&host, policy, blocked) {
                tracing::debug!(%host, "dropping result from blocked/denied domain");
                continue;
            }
            if let (Some(cutoff), Some(published)) = (query.cutoff, item.published) {
                if published > cutoff {
                    tracing::debug!(%host, %published, "dropping post-cutoff result");
                    continue;
                }
            }
            items.push(item);
        }
        Ok(SearchPage { items, raw })
    }
}

/// Tracking query parameters dropped during URL normalization.
const TRACKING_PARAMS: [&str; 3] = ["fbclid", "gclid", "msclkid"];

/// Normalized dedup key: lowercase host, no fragment, no tracking params.
pub fn normalize_url(raw: &str) -> Option<String> {
    let mut url = url::Url::parse(raw).ok()?;
    url.host_str()?;
    url.set_fragment(None);
    let kept: Vec<(String, String)> = url
        .query_pairs()
        .filter(|(k, _)| {
            let k = k.to_ascii_lowercase();
            !k.starts_with("utm_") && !TRACKING_PARAMS.contains(&k.as_str())
        })
        .map(|(k, v)| (k.into_owned(), v.into_owned()))
        .collect();
    if kept.is_empty() {
        url.set_query(None);
    } else {
        url.query_pairs_mut().clear().extend_pairs(kept);
    }
    Some(url.to_string())
}

/// Union of pages with URL-normalized deduplication; first occurrence wins
/// and page order (source-language pages first, engine rank within a page)
/// is preserved.
pub fn dedupe(pages: &[SearchPage]) -> Vec<EvidenceItem> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for page in pages {
        for item in &page.items {
            let key = normalize_url(&item.url).unwrap_or_else(|| item.url.clone());
            if seen.insert(key) {
                out.push(item.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::date;
    use serde_json::json;

    fn page_json(entries: &[(&str, &str, &str, Option<&str>)]) -> Value {
        json!({
            "organic": entries
                .iter()
                .map(|(title, snippet, link, date)| {
                    let mut entry = json!({"title": title, "snippet": snippet, "link": link});
                    if let Some(d) = date {
                        entry["date"] = json!(d);
                    }
                    entry
                })
                .collect::<Vec<_>>()
        })
    }

    fn client_with(query: &str, language: &str, page: Value) -> SearchClient {
        SearchClient::new(Arc::new(
            ScriptedSearch::new().with_page(query, language, page),
        ))
        .without_retry_delay()
    }

    fn q(text: &str, k: usize, cutoff: Option<NaiveDate>) -> SearchQuery {
        SearchQuery::new(text, "en", k, cutoff).unwrap()
    }

    #[test]
    fn query_validation() {
        assert!(SearchQuery::new("", "en", 10, None).is_err());
        assert!(SearchQuery::new("x", "en", 0, None).is_err());
        assert!(SearchQuery::new("x", "en", 21, None).is_err());
        assert!(SearchQuery::new("x", "en", 20, None).is_ok());
    }

    #[test]
    fn search_respects_k_and_order() {
        let entries: Vec<(String, String, String, Option<&str>)> = (0..15)
            .map(|i| {
                (
                    format!("t{i}"),
                    format!("s{i}"),
                    format!("https://site{i}.example.com/a"),
                    None,
                )
            })
            .collect();
        let borrowed: Vec<(&str, &str, &str, Option<&str>)> = entries
            .iter()
            .map(|(a, b, c, d)| (a.as_str(), b.as_str(), c.as_str(), *d))
            .collect();
        let client = client_with("query", "en", page_json(&borrowed));
        let page = client
            .search(&q("query", 10, None), &DomainPolicy::default(), &[], "p1")
            .unwrap();
        assert_eq!(page.items.len(), 10);
        assert_eq!(page.items[0].title, "t0");
        assert_eq!(page.items[9].title, "t9");
    }

    #[test]
    fn blocked_domains_are_filtered() {
        let page = page_json(&[
            ("keep", "s", "https://example.com/a", None),
            ("drop", "s", "https://www.snopes.com/fact-check/x", None),
            ("drop2", "s", "https://sub.denied.test/y", None),
        ]);
        let client = client_with("query", "en", page);
        let policy = DomainPolicy::new(Vec::<String>::new(), ["denied.test"]);
        let got = client
            .search(
                &q("query", 10, None),
                &policy,
                &["snopes.com".to_string()],
                "p1",
            )
            .unwrap();
        assert_eq!(got.items.len(), 1);
        assert_eq!(got.items[0].title, "keep");
    }

    #[test]
    fn cutoff_drops_dated_late_items_keeps_undated() {
        let page = page_json(&[
            ("old", "s", "https://a.example.com/", Some("Oct 28, 2020")),
            ("late", "s", "https://b.example.com/", Some("2020-11-02")),
            ("undated", "s", "https://c.example.com/", None),
        ]);
        let client = client_with("query", "en", page);
        let got = client
            .search(
                &q("query", 10, Some(date(2020, 10, 30))),
                &DomainPolicy::default(),
                &[],
                "p1",
            )
            .unwrap();
        let titles: Vec<&str> = got.items.iter().map(|i| i.title.as_str()).collect();
        assert_eq!(titles, vec!["old", "undated"]);
        assert_eq!(got.items[0].published, Some(date(2020, 10, 28)));
    }

    #[test]
    fn host_suffix_matching() {
        assert!(host_matches("news.bbc.co.uk", "bbc.co.uk"));
        assert!(host_matches("bbc.co.uk", "bbc.co.uk"));
        assert!(!host_matches("notbbc.co.uk", "bbc.co.uk"));
        assert!(!host_matches("bbc.co.uk.evil.com", "bbc.co.uk"));
    }

    #[test]
    fn url_normalization_and_dedupe() {
        assert_eq!(
            normalize_url("https://Example.com/a#section"),
            Some("https://example.com/a".to_string())
        );
        assert_eq!(
            normalize_url("https://example.com/a?utm_source=x&id=3&fbclid=y"),
            Some("https://example.com/a?id=3".to_string())
        );

        let item = |url: &str| EvidenceItem::new("t", "s", url, "en", "p1").unwrap();
        let pages = vec![
            SearchPage {
                items: vec![item("https://example.com/a#one"), item("https://example.com/b")],
                raw: json!({}),
            },
            SearchPage {
                items: vec![item("https://example.com/a"), item("https://example.com/c")],
                raw: json!({}),
            },
        ];
        let deduped = dedupe(&pages);
        let urls: Vec<&str> = deduped.iter().map(|i| i.url.as_str()).collect();
        assert_eq!(
            urls,
            vec![
                "https://example.com/a#one",
                "https://example.com/b",
                "https://example.com/c"
            ]
        );
    }

    #[test]
    fn dedupe_matches_bruteforce_union() {
        // Brute-force oracle: set union on normalized URLs, first offset wins.
        let item = |url: &str| EvidenceItem::new("t", "s", url, "en", "p1").unwrap();
        let urls = [
            "https://a.com/1",
            "https://a.com/1#frag",
            "https://b.com/2?utm_campaign=x",
            "https://b.com/2",
            "https://c.com/3",
            "https://a.com/1?utm_source=z",
        ];
        let pages: Vec<SearchPage> = urls
            .chunks(2)
            .map(|chunk| SearchPage {
                items: chunk.iter().map(|u| item(u)).collect(),
                raw: json!({}),
            })
            .collect();
        let got = dedupe(&pages);

        let mut oracle_seen = std::collections::HashSet::new();
        let mut oracle = Vec::new();
        for url in urls {
            let key = normalize_url(url).unwrap();
            if oracle_seen.insert(key) {
                oracle.push(url.to_string());
            }
        }
        let got_urls: Vec<String> = got.iter().map(|i| i.url.clone()).collect();
        assert_eq!(got_urls, oracle);
    }

    #[test]
    fn quota_error_aborts() {
        struct QuotaBackend;
        impl SearchBackend for QuotaBackend {
            fn fetch(&self, _query: &SearchQuery) -> Result<Value, SearchError> {
                Err(SearchError::Quota("out of credits".into()))
            }
            fn endpoint(&self) -> &str {
                "https://google.serper.dev/search"
            }
        }
        let client = SearchClient::new(Arc::new(QuotaBackend)).without_retry_delay();
        let err = client
            .search(&q("query", 10, None), &DomainPolicy::default(), &[], "p1")
            .unwrap_err();
        assert!(matches!(err, SearchError::Quota(_)));
        assert_eq!(client.calls(), 1);
    }

    #[test]
    fn transport_errors_retry_three_times() {
        struct FlakyBackend;
        impl SearchBackend for FlakyBackend {
            fn fetch(&self, _query: &SearchQuery) -> Result<Value, SearchError> {
                Err(SearchError::Transport("connection reset".into()))
            }
            fn endpoint(&self) -> &str {
                "https://google.serper.dev/search"
            }
        }
        let client = SearchClient::new(Arc::new(FlakyBackend)).without_retry_delay();
        let err = client
            .search(&q("query", 10, None), &DomainPolicy::default(), &[], "p1")
            .unwrap_err();
        assert!(matches!(err, SearchError::Transport(_)));
        assert_eq!(client.calls(), 3);
    }

    #[test]
    fn politeness_gate_caps_in_flight_requests() {
        use std::sync::atomic::{AtomicUsize, Ordering};

        struct SlowBackend {
            in_flight: AtomicUsize,
            peak: AtomicUsize,
        }
        impl SearchBackend for SlowBackend {
            fn fetch(&self, _query: &SearchQuery) -> Result<Value, SearchError> {
                let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(10));
                self.in_flight.fetch_sub(1, Ordering::SeqCst);
                Ok(json!({"organic": []}))
            }
            fn endpoint(&self) -> &str {
                "https://google.serper.dev/search"
            }
        }

        let backend = Arc::new(SlowBackend {
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let client = Arc::new(SearchClient::new(backend.clone()).without_retry_delay());
        let mut handles = Vec::new();
        for i in 0..12 {
            let client = Arc::clone(&client);
            handles.push(std::thread::spawn(move || {
                client
                    .search(
                        &q(&format!("query {i}"), 10, None),
                        &DomainPolicy::default(),
                        &[],
                        "p1",
                    )
                    .unwrap();
            }));
        }
        for handle in handles {
            handle.join().unwrap();
        }
        assert!(
            backend.peak.load(Ordering::SeqCst) <= HOST_POLITENESS_LIMIT,
            "peak in-flight must respect the per-host limit"
        );
        assert_eq!(client.calls(), 12);
    }

    #[test]
    fn record_then_replay_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let page = page_json(&[("t", "s", "https://example.com/a", Some("Oct 1, 2020"))]);
        let scripted: Arc<dyn SearchBackend> =
            Arc::new(ScriptedSearch::new().with_page("query", "en", page));
        let recorder = SearchClient::new(Arc::new(CachedSearch::record(scripted, dir.path())))
            .without_retry_delay();
        let query = q("query", 10, None);
        let first = recorder
            .search(&query, &DomainPolicy::default(), &[], "p1")
            .unwrap();

        let replayer = SearchClient::new(Arc::new(CachedSearch::replay(
            dir.path(),
            DEFAULT_SEARCH_ENDPOINT,
        )))
        .without_retry_delay();
        let second = replayer
            .search(&query, &DomainPolicy::default(), &[], "p1")
            .unwrap();
        assert_eq!(first.items, second.items);
        assert_eq!(
            serde_json::to_string(&first.raw).unwrap(),
            serde_json::to_string(&second.raw).unwrap()
        );

        let miss = replayer.search(
            &q("unseen", 10, None),
            &DomainPolicy::default(),
            &[],
            "p1",
        );
        assert!(matches!(miss, Err(SearchError::CacheMiss { .. })));
    }
}
