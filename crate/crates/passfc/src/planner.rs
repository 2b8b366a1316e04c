//! The adaptive-search planning operations: structured query generation,
//! credible-source selection, and cross-lingual expansion.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use crate::model::{CheckRequest, ComprehensiveClaim};
use crate::provider::{complete_list, LlmHandle, TemplateId};
use crate::query::{parse_query, DomainPolicy, QueryNode};

/// Language-name to search-tag table covering exactly the languages the
/// expansion prompt offers, plus region-free aliases for the families the
/// model frequently names without a region ("Spanish", "Portuguese", ...).
pub mod languages {
    use super::OnceLock;

    const TABLE_TSV: &str = include_str!("../assets/languages.tsv");

    const ALIASES: [(&str, &str); 4] = [
        ("chinese", "zh-cn"),
        ("french", "fr"),
        ("portuguese", "pt"),
        ("spanish", "es"),
    ];

    fn table() -> &'static Vec<(String, String)> {
        static TABLE: OnceLock<Vec<(String, String)>> = OnceLock::new();
        TABLE.get_or_init(|| {
            TABLE_TSV
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    let (name, tag) = l.split_once('\t').expect("name\\ttag per line");
                    (name.trim().to_string(), tag.trim().to_string())
                })
                .collect()
        })
    }

    /// All (name, tag) pairs in prompt order.
    pub fn supported() -> Vec<(&'static str, &'static str)> {
        table()
            .iter()
            .map(|(n, t)| (n.as_str(), t.as_str()))
            .collect()
    }

    /// Search-API tag for a language name, tolerating case differences and
    /// region-free family names.
    pub fn tag_for(name: &str) -> Option<&'static str> {
        let wanted = name.trim().to_ascii_lowercase();
        if let Some((_, tag)) = table()
            .iter()
            .find(|(n, _)| n.to_ascii_lowercase() == wanted)
        {
            return Some(tag.as_str());
        }
        ALIASES
            .iter()
            .find(|(alias, _)| *alias == wanted)
            .map(|(_, tag)| *tag)
    }
}

fn site_operator_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)-?\bsite:\S+").expect("valid regex"))
}

/// Strips `site:` clauses the model emitted despite the prompt contract;
/// domain filtering is applied structurally at composition time instead.
fn strip_site_operators(query: &str) -> String {
    let stripped = site_operator_regex().replace_all(query, "");
    if stripped != query {
        tracing::warn!(query, "stripping site: operator from generated query");
    }
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Deterministic queries used when the generation prompt yields nothing
/// parseable: an exact-phrase query and a bag-of-terms query over the claim.
pub fn fallback_queries(claim: &ComprehensiveClaim) -> (QueryNode, QueryNode) {
    let text = claim.claim.text.replace(['"', '(', ')'], " ");
    let precision = QueryNode::phrase(text.split_whitespace().collect::<Vec<_>>().join(" "));
    let terms: Vec<QueryNode> = text
        .split_whitespace()
        .map(|w| w.trim_start_matches('-'))
        .filter(|w| !w.is_empty() && *w != "OR")
        .map(QueryNode::term)
        .collect();
    let recall = match terms.len() {
        0 => QueryNode::phrase("empty claim"),
        1 => terms.into_iter().next().expect("one term"),
        _ => QueryNode::and_group(terms),
    };
    (precision, recall)
}

/// Calls the query-generation prompt and parses the two returned strings
/// into operator trees: index 0 precision-oriented, index 1 recall-oriented.
/// Total by fallback; provider transport failures also degrade to the
/// fallback pair (a search with weaker queries beats no search).
pub fn generate_structured_queries(
    llm: &LlmHandle,
    claim: &ComprehensiveClaim,
    history_feedback: &str,
) -> (QueryNode, QueryNode) {
    let vars: BTreeMap<String, String> = [
        ("input".to_string(), claim.grounded_text.clone()),
        ("feedback".to_string(), feedback_or_none(history_feedback)),
    ]
    .into();
    let strings = match complete_list(llm, TemplateId::Sqg, vars) {
        Ok(items) if items.len() >= 2 => items,
        Ok(items) => {
            tracing::warn!(
                count = items.len(),
                "query generation returned too few queries, using fallback"
            );
            return fallback_queries(claim);
        }
        Err(e) => {
            tracing::warn!(error = %e, "query generation failed, using fallback");
            return fallback_queries(claim);
        }
    };
    if strings.len() > 2 {
        tracing::warn!(count = strings.len(), "query generation returned extra queries, keeping two");
    }
    let fallback = fallback_queries(claim);
    let mut parsed = strings.iter().take(2).map(|s| {
        let cleaned = strip_site_operators(s);
        parse_query(&cleaned)
            .map_err(|e| tracing::warn!(query = %s, error = %e, "unparseable generated query"))
            .ok()
    });
    let precision = parsed.next().flatten();
    let recall = parsed.next().flatten();
    match (precision, recall) {
        (Some(p), Some(r)) => (p, r),
        (Some(p), None) => (p, fallback.1),
        (None, Some(r)) => (fallback.0, r),
        (None, None) => fallback,
    }
}

fn feedback_or_none(feedback: &str) -> String {
    if feedback.trim().is_empty() {
        "None".to_string()
    } else {
        feedback.to_string()
    }
}

/// Credible-source selection: entries with a `-` prefix populate the deny
/// list, the rest the allow list; user-preferred domains merge into allow.
/// An unparseable response degrades to an unrestricted policy.
pub fn select_credible_sources(
    llm: &LlmHandle,
    claim: &ComprehensiveClaim,
    history_feedback: &str,
    user_domains: &[String],
) -> DomainPolicy {
    let vars: BTreeMap<String, String> = [
        ("input".to_string(), claim.grounded_text.clone()),
        ("feedback".to_string(), feedback_or_none(history_feedback)),
    ]
    .into();
    let mut policy = match complete_list(llm, TemplateId::Css, vars) {
        Ok(entries) => {
            let (deny, allow): (Vec<&String>, Vec<&String>) =
                entries.iter().partition(|e| e.trim_start().starts_with('-'));
            DomainPolicy::new(allow, deny)
        }
        Err(e) => {
            tracing::warn!(error = %e, "credible-source selection failed, searching unrestricted");
            DomainPolicy::default()
        }
    };
    policy.merge_user_domains(user_domains);
    policy
}

/// Cross-lingual expansion: at most two extra search languages, never the
/// source language. Unknown language names are dropped with a warning; an
/// unparseable response means no expansion.
pub fn expand_languages(
    llm: &LlmHandle,
    claim: &ComprehensiveClaim,
    request: &CheckRequest,
    source_language: &str,
) -> Vec<String> {
    let mut input = claim.grounded_text.clone();
    if !request.metadata.is_empty() {
        input.push_str("\n[Metadata]");
        for (key, value) in &request.metadata {
            input.push_str(&format!("\n{key}: {value}"));
        }
    }
    let vars: BTreeMap<String, String> = [("input".to_string(), input)].into();
    let names = match complete_list(llm, TemplateId::Xle, vars) {
        Ok(names) => names,
        Err(e) => {
            tracing::warn!(error = %e, "language expansion failed, keeping source language only");
            return Vec::new();
        }
    };
    let source = source_language.to_ascii_lowercase();
    let mut tags: Vec<String> = Vec::new();
    for name in names {
        match languages::tag_for(&name) {
            Some(tag) if tag.eq_ignore_ascii_case(&source) => {
                tracing::warn!(name, "expansion proposed the source language, dropping");
            }
            Some(tag) => {
                if !tags.iter().any(|t| t == tag) {
                    tags.push(tag.to_string());
                }
            }
            None => tracing::warn!(name, "unknown language name from expansion, dropping"),
        }
    }
    tags.truncate(2);
    tags
}
