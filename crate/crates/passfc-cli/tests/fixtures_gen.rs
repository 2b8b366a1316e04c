//! Regenerates the committed record/replay cache for the 10-record eval
//! fixture:
//!
//! ```text
//! cargo test -p passfc-cli --test fixtures_gen -- --ignored --nocapture
//! ```
//!
//! Prints the metrics so the pinned values in acceptance.rs can be checked.

use std::path::PathBuf;
use std::sync::Arc;

use serde_json::json;

use passfc::eval::{load_dataset, run_eval, DatasetKind};
use passfc::model::PipelineConfig;
use passfc::provider::testing::SequenceProvider;
use passfc::provider::{CachedProvider, CallLedger, LlmHandle, TemplateId};
use passfc::search::{CachedSearch, ScriptedSearch, SearchClient};
use passfc::verify::LoopContext;

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/averitec10")
}

struct RecordScript {
    id: &'static str,
    claim: &'static str,
    /// (factuality JSON value, reasoning)
    verdicts: Vec<(&'static str, String)>,
    /// reflect responses, one per verify that triggers reflection
    reflections: Vec<String>,
    /// XLE response for round 2, when scheduled
    xle: Option<&'static str>,
}

fn reflect_stop(reason: &str) -> String {
    json!({"decision": false, "tool": [], "feedback": reason}).to_string()
}

fn reflect_go(tools: &[&str], feedback: &str) -> String {
    json!({"decision": true, "tool": tools, "feedback": feedback}).to_string()
}

fn scripts() -> Vec<RecordScript> {
    vec![
        RecordScript {
            id: "a01",
            claim: "The Alpine rail tunnel opened to traffic in 2016.",
            verdicts: vec![("\"True\"", "Official records confirm the 2016 opening.".into())],
            reflections: vec![],
            xle: None,
        },
        RecordScript {
            id: "a02",
            claim: "The summit meeting took place in Helsinki.",
            verdicts: vec![("\"True\"", "Contemporary coverage places the summit in Helsinki.".into())],
            reflections: vec![],
            xle: None,
        },
        RecordScript {
            id: "a03",
            claim: "The museum reopened after a five-year renovation.",
            verdicts: vec![(
                "\"False\"",
                "The renovation lasted three years, not five.".into(),
            )],
            reflections: vec![reflect_stop("The renovation length is well documented.")],
            xle: None,
        },
        RecordScript {
            id: "a04",
            claim: "The island nation banned single-use plastics in 2019.",
            verdicts: vec![(
                "\"False\"",
                "The ban was announced in 2019 but took effect in 2021.".into(),
            )],
            reflections: vec![reflect_stop("Multiple sources agree on the 2021 date.")],
            xle: None,
        },
        RecordScript {
            id: "a05",
            claim: "The spacecraft carried twelve experiments into orbit.",
            verdicts: vec![
                (
                    "\"False\"",
                    "The manifest lists nine experiments, below the claimed twelve.".into(),
                ),
                (
                    "\"False\"",
                    "The refined search confirms nine experiments on the manifest.".into(),
                ),
            ],
            reflections: vec![reflect_go(
                &["advanced"],
                "Cross-check the payload manifest against the agency press kit.",
            )],
            xle: None,
        },
        RecordScript {
            id: "a06",
            claim: "The port city hosted the regional climate conference.",
            verdicts: vec![
                (
                    "\"Inconclusive\"",
                    "English coverage of the host city is sparse and conflicting.".into(),
                ),
                (
                    "\"False\"",
                    "German regional press shows the conference met in the inland capital instead.".into(),
                ),
            ],
            reflections: vec![reflect_go(
                &["advanced", "multilingual"],
                "Local-language press likely covered the venue decision in detail.",
            )],
            xle: Some("['German']"),
        },
        RecordScript {
            id: "a07",
            claim: "The telecom merger was approved by regulators.",
            verdicts: vec![(
                "\"True\"",
                "A press release describes approval, which the verifier takes at face value.".into(),
            )],
            reflections: vec![],
            xle: None,
        },
        RecordScript {
            id: "a08",
            claim: "The ancient bridge survived the autumn floods.",
            verdicts: vec![(
                "\"Inconclusive\"",
                "Reports disagree and none are from after the floods.".into(),
            )],
            reflections: vec![reflect_stop("No better sources are likely to exist yet.")],
            xle: None,
        },
        RecordScript {
            id: "a09",
            claim: "The festival drew two million visitors this year.",
            verdicts: vec![(
                "\"False\"",
                "The organizers' own tally stops at 1.2 million.".into(),
            )],
            reflections: vec![reflect_stop("The official tally is decisive.")],
            xle: None,
        },
        RecordScript {
            id: "a10",
            claim: "The observatory detected the neutrino burst in June.",
            verdicts: vec![(
                "\"True\"",
                "The observatory's circular reports the June detection.".into(),
            )],
            reflections: vec![],
            xle: None,
        },
    ]
}

fn sqg_queries(id: &str, round: usize) -> (String, String) {
    (
        format!("averitec {id} round {round} primary sources"),
        format!("what is known about averitec case {id} round {round}?"),
    )
}

fn page_for(id: &str, language: &str, round: usize, flavor: &str) -> serde_json::Value {
    json!({
        "organic": [
            {
                "title": format!("Coverage of case {id} ({flavor})"),
                "snippet": format!("[{language}] round {round} {flavor} snippet for {id}."),
                "link": format!("https://news.example.org/{id}/{language}/{round}/{flavor}"),
                "date": "2020-10-20"
            },
            {
                "title": format!("Fact check of case {id}"),
                "snippet": "A fact-checking portal item that the leakage guard must drop.",
                "link": format!("https://www.snopes.com/fact-check/{id}-{language}-{round}"),
            },
            {
                "title": format!("Archive entry for {id}"),
                "snippet": format!("[{language}] archived {flavor} report about {id}."),
                "link": format!("https://archive.example.net/{id}?lang={language}&r={round}&f={flavor}"),
                "date": "2020-09-15"
            }
        ]
    })
}

#[test]
#[ignore = "writes into tests/fixtures; run on purpose to refresh the cache"]
fn regenerate_averitec10_cache() {
    let dir = fixture_dir();
    let cache_dir = dir.join("cache");
    if cache_dir.exists() {
        std::fs::remove_dir_all(&cache_dir).expect("clearing old cache");
    }

    let seq = SequenceProvider::new();
    let mut search = ScriptedSearch::new();
    let cutoff_suffix = " before:2020-10-30";
    for script in scripts() {
        seq.push(
            TemplateId::Ground,
            json!({
                "reasoning": format!("No vague references in the {} claim; no explicit time, defaulting to Now.", script.id),
                "revised_claim": script.claim,
                "time": "Now",
            })
            .to_string(),
        );
        let rounds = script.verdicts.len();
        for round in 1..=rounds {
            let (precision, recall) = sqg_queries(script.id, round);
            seq.push(
                TemplateId::Sqg,
                json!([precision, recall]).to_string(),
            );
            let mut languages = vec!["en"];
            if round == 2 && script.xle.is_some() {
                languages.push("de");
            }
            for language in languages {
                search.insert(
                    format!("{precision}{cutoff_suffix}"),
                    language,
                    page_for(script.id, language, round, "precision"),
                );
                search.insert(
                    format!("{recall}{cutoff_suffix}"),
                    language,
                    page_for(script.id, language, round, "recall"),
                );
            }
        }
        for (factuality, reasoning) in &script.verdicts {
            let factuality: serde_json::Value = serde_json::from_str(factuality).unwrap();
            seq.push(
                TemplateId::Verify,
                json!({
                    "reasoning": reasoning,
                    "error": if factuality == json!("True") { "None" } else { "See reasoning." },
                    "correction": "None",
                    "factuality": factuality,
                })
                .to_string(),
            );
        }
        for reflection in &script.reflections {
            seq.push(TemplateId::Reflect, reflection.clone());
        }
        if let Some(xle) = script.xle {
            seq.push(TemplateId::Xle, xle);
        }
    }

    let llm = LlmHandle::new(
        Arc::new(CachedProvider::record(Arc::new(seq), &cache_dir)),
        CallLedger::new(),
        0.01,
    );
    let search_client = SearchClient::new(Arc::new(CachedSearch::record(
        Arc::new(search),
        &cache_dir,
    )))
    .without_retry_delay();

    let records = load_dataset(&dir.join("dataset.jsonl"), DatasetKind::AveritecDev)
        .expect("fixture dataset loads");
    assert_eq!(records.len(), 10);
    let config = PipelineConfig::default();
    let ctx = LoopContext {
        llm: &llm,
        search: &search_client,
        config: &config,
    };
    // Sequential recording keeps the per-template queues aligned with the
    // record order; replay is keyed and order-independent.
    let output = run_eval(&ctx, &records, 1).expect("eval runs");

    println!("recorded averitec10 cache at {}", cache_dir.display());
    println!(
        "metrics to pin: n={} accuracy={} macro_f1={}",
        output.metrics.n, output.metrics.accuracy, output.metrics.macro_f1
    );
    for row in &output.rows {
        println!(
            "  {} gold={} prediction={} rounds={} languages={}",
            row.record_id, row.gold, row.prediction, row.rounds_used, row.languages_used
        );
    }
    assert_eq!(output.metrics.n, 10);
}
