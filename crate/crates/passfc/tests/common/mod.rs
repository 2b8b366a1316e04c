//! Shared scenario definitions for the reference-trace fixtures: the canned
//! provider responses, the record/replay wiring, and the fixture paths.
#![allow(dead_code)] // each test target uses a subset

use std::path::PathBuf;
use std::sync::Arc;

use serde_json::Value;

use passfc::model::{date, AtomicClaim, CheckRequest, PipelineConfig};
use passfc::provider::testing::SequenceProvider;
use passfc::provider::{CachedProvider, CallLedger, ChatProvider, LlmHandle, TemplateId};
use passfc::search::{
    CachedSearch, ScriptedSearch, SearchBackend, SearchClient, DEFAULT_SEARCH_ENDPOINT,
};
use passfc::verify::{check_response, ClaimResult, ClaimTrace, LoopContext};

pub struct TraceScenario {
    pub name: &'static str,
    pub claim_text: &'static str,
    pub validation_date: chrono::NaiveDate,
    pub config: PipelineConfig,
    /// Canned completions in call order (queued per template).
    pub llm_script: Vec<(TemplateId, &'static str)>,
    /// Scripted pages keyed by (executable query string, language).
    pub search_pages: Vec<(String, String, Value)>,
}

fn parse_pages(raw: &str) -> Vec<(String, String, Value)> {
    let entries: Vec<Value> = serde_json::from_str(raw).expect("valid search_pages.json");
    entries
        .into_iter()
        .map(|e| {
            (
                e["query"].as_str().expect("query").to_string(),
                e["language"].as_str().expect("language").to_string(),
                e["page"].clone(),
            )
        })
        .collect()
}

/// First reference trace: one round, contradicted.
pub fn reactors_trace() -> TraceScenario {
    let config = PipelineConfig {
        cutoff_date: Some(date(2023, 7, 26)),
        ..Default::default()
    };
    TraceScenario {
        name: "reactors_trace",
        claim_text: "The United States has 94 operating reactors",
        validation_date: date(2023, 7, 26),
        config,
        llm_script: vec![
            (
                TemplateId::Ground,
                include_str!("../fixtures/reactors_trace/responses/ground.json"),
            ),
            (
                TemplateId::Sqg,
                include_str!("../fixtures/reactors_trace/responses/sqg1.txt"),
            ),
            (
                TemplateId::Verify,
                include_str!("../fixtures/reactors_trace/responses/verify1.json"),
            ),
            (
                TemplateId::Reflect,
                include_str!("../fixtures/reactors_trace/responses/reflect1.json"),
            ),
        ],
        search_pages: parse_pages(include_str!("../fixtures/reactors_trace/responses/search_pages.json")),
    }
}

/// Second reference trace: two rounds, cross-lingual expansion, supported.
pub fn covid_trace() -> TraceScenario {
    let config = PipelineConfig {
        cutoff_date: Some(date(2020, 10, 30)),
        ..Default::default()
    };
    TraceScenario {
        name: "covid_trace",
        claim_text: "More than 225,000 people are dead due to covid-19",
        validation_date: date(2020, 10, 30),
        config,
        llm_script: vec![
            (
                TemplateId::Ground,
                include_str!("../fixtures/covid_trace/responses/ground.json"),
            ),
            (
                TemplateId::Sqg,
                include_str!("../fixtures/covid_trace/responses/sqg1.txt"),
            ),
            (
                TemplateId::Verify,
                include_str!("../fixtures/covid_trace/responses/verify1.json"),
            ),
            (
                TemplateId::Reflect,
                include_str!("../fixtures/covid_trace/responses/reflect1.json"),
            ),
            (
                TemplateId::Xle,
                include_str!("../fixtures/covid_trace/responses/xle2.txt"),
            ),
            (
                TemplateId::Sqg,
                include_str!("../fixtures/covid_trace/responses/sqg2.txt"),
            ),
            (
                TemplateId::Verify,
                include_str!("../fixtures/covid_trace/responses/verify2.json"),
            ),
        ],
        search_pages: parse_pages(include_str!("../fixtures/covid_trace/responses/search_pages.json")),
    }
}

pub fn fixture_cache_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .join("cache")
}

pub enum Mode {
    /// Run against the scripted backends and write the cache files.
    Record,
    /// Run purely from the committed cache.
    Replay,
}

/// Runs the scenario's claim end to end and returns the single result.
pub fn run_scenario(scenario: &TraceScenario, mode: Mode) -> (ClaimResult, ClaimTrace) {
    let cache_dir = fixture_cache_dir(scenario.name);
    let llm_backend: Arc<dyn ChatProvider> = match mode {
        Mode::Record => {
            let seq = SequenceProvider::new();
            for (template, text) in &scenario.llm_script {
                seq.push(*template, text.trim_end_matches('\n'));
            }
            Arc::new(CachedProvider::record(Arc::new(seq), &cache_dir))
        }
        Mode::Replay => Arc::new(CachedProvider::replay(&cache_dir)),
    };
    let search_backend: Arc<dyn SearchBackend> = match mode {
        Mode::Record => {
            let mut scripted = ScriptedSearch::new();
            for (query, language, page) in &scenario.search_pages {
                scripted.insert(query.clone(), language.clone(), page.clone());
            }
            Arc::new(CachedSearch::record(Arc::new(scripted), &cache_dir))
        }
        Mode::Replay => Arc::new(CachedSearch::replay(&cache_dir, DEFAULT_SEARCH_ENDPOINT)),
    };

    let llm = LlmHandle::new(llm_backend, CallLedger::new(), 0.01);
    let search = SearchClient::new(search_backend).without_retry_delay();
    let ctx = LoopContext {
        llm: &llm,
        search: &search,
        config: &scenario.config,
    };
    let request = CheckRequest::new("", scenario.claim_text, scenario.validation_date)
        .expect("valid request");
    let provided = vec![AtomicClaim::new("c1", scenario.claim_text).expect("valid claim")];
    let mut results = check_response(&ctx, &request, Some(provided), 1);
    assert_eq!(results.len(), 1, "scenario runs exactly one claim");
    results.pop().expect("one result")
}
