//! The per-claim verification loop: verdicts from evidence, reflection with
//! a tool plan, history management with optional budgeted truncation, loop
//! termination, and the per-claim step trace.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::claim::{decompose_response, ground_to_comprehensive};
use crate::model::{
    estimate_tokens, AtomicClaim, CheckRequest, ComprehensiveClaim, EvidenceItem, Label,
    PipelineConfig, Verdict,
};
use crate::planner::{expand_languages, generate_structured_queries, select_credible_sources};
use crate::provider::{complete_object, LlmHandle, ProviderError, TemplateId, TokenTotals};
use crate::query::{compose_executable, DomainPolicy, QueryPlan};
use crate::search::{dedupe, SearchClient, SearchError, SearchPage, SearchQuery, MAX_PAGE_SIZE};

/// Tools reflection can schedule for the next round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolChoice {
    StructuredQuery,
    CredibleSources,
    CrossLingual,
    Reevaluate,
}

impl ToolChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            ToolChoice::StructuredQuery => "structured_query",
            ToolChoice::CredibleSources => "credible_sources",
            ToolChoice::CrossLingual => "cross_lingual",
            ToolChoice::Reevaluate => "reevaluate",
        }
    }

    /// Accepts the tool names providers actually emit.
    pub fn from_provider_name(name: &str) -> Option<ToolChoice> {
        match name.trim().to_ascii_lowercase().as_str() {
            "advanced" | "structured_query" | "sqg" | "query" => Some(ToolChoice::StructuredQuery),
            "multilingual" | "cross_lingual" | "xle" => Some(ToolChoice::CrossLingual),
            "site" | "domain" | "credible_sources" | "css" => Some(ToolChoice::CredibleSources),
            "reevaluate" | "re-evaluate" | "reeval" => Some(ToolChoice::Reevaluate),
            _ => None,
        }
    }
}

/// Outcome of the post-verdict reflection step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionDecision {
    pub should_continue: bool,
    pub tools: BTreeSet<ToolChoice>,
    pub feedback: String,
}

impl ReflectionDecision {
    pub fn stop(feedback: impl Into<String>) -> Self {
        Self {
            should_continue: false,
            tools: BTreeSet::new(),
            feedback: feedback.into(),
        }
    }

    /// Enforces the structural invariants: a stop decision carries no tools,
    /// a continue decision defaults to a new structured-query search, and
    /// `reevaluate` never coexists with the search tools.
    fn normalized(mut self) -> Self {
        if !self.should_continue {
            self.tools.clear();
            return self;
        }
        if self.tools.len() > 1 && self.tools.contains(&ToolChoice::Reevaluate) {
            tracing::warn!("reflection mixed reevaluate with search tools; keeping the search tools");
            self.tools.remove(&ToolChoice::Reevaluate);
        }
        if self.tools.is_empty() {
            self.tools.insert(ToolChoice::StructuredQuery);
        }
        self
    }
}

/// One loop round: the plan that was executed, the evidence it produced, the
/// verdict, and the reflection outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub plan: QueryPlan,
    pub evidence: Vec<EvidenceItem>,
    pub verdict: Verdict,
    pub reflection: Option<ReflectionDecision>,
}

/// Rolling state of one claim's verification.
#[derive(Debug, Clone)]
pub struct VerificationHistory {
    pub claim: ComprehensiveClaim,
    pub rounds: Vec<IterationRecord>,
    /// Present only when budgeted truncation replaced earlier rounds.
    pub summary: Option<String>,
}

impl VerificationHistory {
    pub fn new(claim: ComprehensiveClaim) -> Self {
        Self {
            claim,
            rounds: Vec::new(),
            summary: None,
        }
    }

    pub fn latest(&self) -> Option<&IterationRecord> {
        self.rounds.last()
    }

    fn render_round(round: &IterationRecord) -> String {
        let mut out = format!("Round {}:\n", round.index);
        if let Ok(precision) = round.plan.precision_query.render() {
            out.push_str(&format!("Precision query: {precision}\n"));
        }
        if let Ok(recall) = round.plan.recall_query.render() {
            out.push_str(&format!("Recall query: {recall}\n"));
        }
        if !round.plan.policy.is_empty() {
            out.push_str(&format!(
                "Domains: allow=[{}] deny=[{}]\n",
                round.plan.policy.allow.join(", "),
                round.plan.policy.deny.join(", ")
            ));
        }
        if round.plan.languages.len() > 1 {
            out.push_str(&format!("Languages: {}\n", round.plan.languages.join(", ")));
        }
        if round.evidence.is_empty() {
            out.push_str("Evidence: none\n");
        } else {
            out.push_str("Evidence:\n");
            out.push_str(&render_evidence(&round.evidence));
            out.push('\n');
        }
        out.push_str(&format!("Verdict: {}\n", round.verdict.label));
        out.push_str(&format!("Reasoning: {}\n", round.verdict.reasoning));
        if let Some(error) = &round.verdict.error_note {
            out.push_str(&format!("Error: {error}\n"));
        }
        if let Some(correction) = &round.verdict.correction {
            out.push_str(&format!("Correction: {correction}\n"));
        }
        if let Some(reflection) = &round.reflection {
            if !reflection.feedback.trim().is_empty() {
                out.push_str(&format!("Feedback: {}\n", reflection.feedback));
            }
        }
        out
    }

    fn render_full(&self) -> String {
        let mut out = format!("Claim: {}\n", self.claim.grounded_text);
        for round in &self.rounds {
            out.push('\n');
            out.push_str(&Self::render_round(round));
        }
        out
    }
}

/// Numbered evidence rendering shared by prompts and history.
pub fn render_evidence(evidence: &[EvidenceItem]) -> String {
    evidence
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let date = item
                .published
                .map(|d| format!(", published {d}"))
                .unwrap_or_default();
            format!(
                "{}. [{}] {} -- {} ({}{})",
                i + 1,
                item.language,
                item.title,
                item.snippet,
                item.url,
                date
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Renders the history as prompt context. Without a budget the full
/// chronological log is returned. With a budget, the claim and the latest
/// round stay verbatim and earlier rounds are replaced by an LLM summary
/// (re-summarized once if still over, then hard-truncated). Summarization
/// failures fall back to dropping the earliest rounds.
pub fn manage_history(
    llm: Option<&LlmHandle>,
    history: &VerificationHistory,
    budget: Option<usize>,
) -> String {
    let full = history.render_full();
    let Some(budget) = budget else {
        return full;
    };
    if estimate_tokens(&full) <= budget || history.rounds.len() <= 1 {
        return full;
    }

    let (earlier, latest) = history.rounds.split_at(history.rounds.len() - 1);
    let earlier_text = earlier
        .iter()
        .map(VerificationHistory::render_round)
        .collect::<Vec<_>>()
        .join("\n");
    let tail = format!(
        "Claim: {}\n\n{}",
        history.claim.grounded_text,
        VerificationHistory::render_round(&latest[0])
    );
    let reserve = estimate_tokens(&tail);
    let summary_budget = budget.saturating_sub(reserve).max(16);

    let summarize = |llm: &LlmHandle, target_words: usize| -> Result<String, ProviderError> {
        let vars: BTreeMap<String, String> = [
            ("history".to_string(), earlier_text.clone()),
            ("limit".to_string(), target_words.to_string()),
        ]
        .into();
        llm.complete_template(TemplateId::Summarize, vars)
            .map(|r| r.text.trim().to_string())
    };

    let mut summary = match llm {
        Some(llm) => match summarize(llm, summary_budget.saturating_mul(3) / 4) {
            Ok(summary) => summary,
            Err(e) => {
                tracing::warn!(error = %e, "summarization failed, hard-truncating earliest rounds");
                return hard_truncate(history, budget);
            }
        },
        None => return hard_truncate(history, budget),
    };
    let assemble = |summary: &str| {
        format!(
            "Claim: {}\n\nSummary of earlier rounds: {}\n\n{}",
            history.claim.grounded_text,
            summary,
            VerificationHistory::render_round(&latest[0])
        )
    };
    let mut rendered = assemble(&summary);
    if estimate_tokens(&rendered) > budget {
        if let Some(llm) = llm {
            if let Ok(shorter) = summarize(llm, summary_budget / 2) {
                summary = shorter;
                rendered = assemble(&summary);
            }
        }
    }
    if estimate_tokens(&rendered) > budget {
        // Hard-truncate the summary tail; the latest round stays verbatim.
        let overshoot = (estimate_tokens(&rendered) - budget) * 4;
        let keep = summary.chars().count().saturating_sub(overshoot);
        summary = summary.chars().take(keep).collect();
        rendered = assemble(&summary);
    }
    rendered
}

fn hard_truncate(history: &VerificationHistory, budget: usize) -> String {
    for skip in 1..history.rounds.len() {
        let mut out = format!("Claim: {}\n", history.claim.grounded_text);
        for round in &history.rounds[skip..] {
            out.push('\n');
            out.push_str(&VerificationHistory::render_round(round));
        }
        if estimate_tokens(&out) <= budget || skip == history.rounds.len() - 1 {
            return out;
        }
    }
    history.render_full()
}

fn string_field(map: &Map<String, Value>, key: &str) -> Option<String> {
    let value = map.get(key)?;
    let text = match value {
        Value::String(s) => s.trim().to_string(),
        Value::Null => return None,
        other => other.to_string(),
    };
    if text.is_empty() || text.eq_ignore_ascii_case("none") || text.eq_ignore_ascii_case("null") {
        None
    } else {
        Some(text)
    }
}

/// Maps the `factuality` field, accepting booleans and the string forms the
/// traces use interchangeably.
fn parse_factuality(value: &Value) -> Option<Label> {
    match value {
        Value::Bool(true) => Some(Label::Supported),
        Value::Bool(false) => Some(Label::Contradicted),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "supported" | "support" => Some(Label::Supported),
            "false" | "contradicted" | "refuted" => Some(Label::Contradicted),
            "inconclusive" | "unknown" | "unverifiable" | "not enough evidence" => {
                Some(Label::Inconclusive)
            }
            _ => None,
        },
        _ => None,
    }
}

/// Verdict from the claim plus the evidence set. Degrades to Inconclusive
/// with a diagnostic rationale instead of failing.
pub fn verify(
    llm: &LlmHandle,
    claim: &ComprehensiveClaim,
    evidence: &[EvidenceItem],
    history_context: &str,
) -> Verdict {
    let vars: BTreeMap<String, String> = [
        ("input".to_string(), claim.grounded_text.clone()),
        (
            "evidence".to_string(),
            if evidence.is_empty() {
                "None".to_string()
            } else {
                render_evidence(evidence)
            },
        ),
        (
            "feedback".to_string(),
            if history_context.trim().is_empty() {
                "None".to_string()
            } else {
                history_context.to_string()
            },
        ),
    ]
    .into();
    let map = match complete_object(llm, TemplateId::Verify, vars, &["reasoning", "factuality"]) {
        Ok(map) => map,
        Err(e) => {
            tracing::warn!(error = %e, "verification step failed");
            return Verdict::new(
                Label::Inconclusive,
                format!("verification step failed: {e}"),
                Some(e.to_string()),
                None,
            );
        }
    };
    let label = match map.get("factuality").and_then(parse_factuality) {
        Some(label) => label,
        None => {
            tracing::warn!(raw = ?map.get("factuality"), "unmappable factuality value");
            Label::Inconclusive
        }
    };
    let reasoning = string_field(&map, "reasoning").unwrap_or_else(|| "no reasoning returned".into());
    Verdict::new(
        label,
        reasoning,
        string_field(&map, "error"),
        string_field(&map, "correction"),
    )
}

/// Post-verdict reflection. No provider call happens when the latest verdict
/// is not a trigger or when the iteration budget is exhausted; provider
/// failures fail safe to a stop.
pub fn reflect(
    llm: &LlmHandle,
    history: &VerificationHistory,
    config: &PipelineConfig,
) -> ReflectionDecision {
    let Some(latest) = history.latest() else {
        return ReflectionDecision::stop("no rounds recorded");
    };
    if !config.reflection_triggers.contains(&latest.verdict.label) {
        return ReflectionDecision::stop("verdict label does not trigger reflection");
    }
    if history.rounds.len() >= config.max_iterations {
        return ReflectionDecision::stop("iteration budget exhausted");
    }
    let vars: BTreeMap<String, String> = [
        ("input".to_string(), history.claim.grounded_text.clone()),
        (
            "history".to_string(),
            manage_history(Some(llm), history, config.history_token_budget),
        ),
    ]
    .into();
    let map = match complete_object(llm, TemplateId::Reflect, vars, &["decision"]) {
        Ok(map) => map,
        Err(e) => {
            tracing::warn!(error = %e, "reflection failed, stopping the loop");
            return ReflectionDecision::stop(format!("reflection failed: {e}"));
        }
    };
    let should_continue = match map.get("decision") {
        Some(Value::Bool(b)) => *b,
        Some(Value::String(s)) => s.trim().eq_ignore_ascii_case("true"),
        _ => false,
    };
    let mut tools = BTreeSet::new();
    if let Some(Value::Array(names)) = map.get("tool") {
        for name in names {
            if let Some(name) = name.as_str() {
                match ToolChoice::from_provider_name(name) {
                    Some(tool) => {
                        tools.insert(tool);
                    }
                    None => tracing::warn!(name, "unknown reflection tool name, dropping"),
                }
            }
        }
    }
    let feedback = string_field(&map, "feedback").unwrap_or_default();
    ReflectionDecision {
        should_continue,
        tools,
        feedback,
    }
    .normalized()
}

/// Why a claim run degraded to Inconclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Transport,
    Quota,
    Provider,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopFailure {
    pub kind: FailureKind,
    pub message: String,
}

/// Final outcome for one claim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClaimResult {
    pub claim: ComprehensiveClaim,
    pub final_verdict: Verdict,
    pub rounds_used: usize,
    pub evidence_used: Vec<EvidenceItem>,
    pub cost: TokenTotals,
    /// Languages searched across all rounds, source language first.
    pub languages_used: Vec<String>,
    pub failure: Option<LoopFailure>,
}

/// Step records in the emitted trace schema (`step_num`, `action`,
/// payload), one JSON value per step.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClaimTrace {
    pub steps: Vec<Value>,
}

impl ClaimTrace {
    fn push(&mut self, action: &str, mut payload: Map<String, Value>) {
        let mut step = Map::new();
        step.insert("step_num".to_string(), json!(self.steps.len() + 1));
        step.insert("action".to_string(), json!(action));
        step.append(&mut payload);
        self.steps.push(Value::Object(step));
    }

    pub fn actions(&self) -> Vec<String> {
        self.steps
            .iter()
            .filter_map(|s| s.get("action").and_then(Value::as_str).map(str::to_string))
            .collect()
    }

    /// Serializes as JSON lines.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str(&serde_json::to_string(step).expect("serializable step"));
            out.push('\n');
        }
        out
    }
}

/// Everything a claim loop needs; cheap to clone per claim.
pub struct LoopContext<'a> {
    pub llm: &'a LlmHandle,
    pub search: &'a SearchClient,
    pub config: &'a PipelineConfig,
}

fn search_error_failure(e: &SearchError) -> LoopFailure {
    let kind = match e {
        SearchError::Quota(_) => FailureKind::Quota,
        SearchError::Transport(_) => FailureKind::Transport,
        _ => FailureKind::Provider,
    };
    LoopFailure {
        kind,
        message: e.to_string(),
    }
}

/// Runs the adaptive search / verify / reflect loop for one grounded claim.
///
/// Round 1 always uses structured query generation; credible-source
/// selection joins when scheduled or when user domains exist; cross-lingual
/// expansion joins when scheduled or under `force_xle`. Termination is
/// structural: at most `max_iterations` rounds regardless of provider
/// behavior.
pub fn run_claim_loop(
    ctx: &LoopContext<'_>,
    claim: &ComprehensiveClaim,
    request: &CheckRequest,
) -> (ClaimResult, ClaimTrace) {
    let llm = ctx.llm.tagged(claim.claim.id.clone());
    let config = ctx.config;
    let mut trace = ClaimTrace::default();
    let mut grounding_step = Map::new();
    grounding_step.insert("original_claim".to_string(), json!(claim.claim.text));
    grounding_step.insert("augmented_claim".to_string(), json!(claim.grounded_text));
    trace.push("contextual_grounding", grounding_step);

    let mut history = VerificationHistory::new(claim.clone());
    let mut tools: BTreeSet<ToolChoice> = [ToolChoice::StructuredQuery].into();
    if !config.user_allowed_domains.is_empty() {
        tools.insert(ToolChoice::CredibleSources);
    }
    if config.force_xle {
        tools.insert(ToolChoice::CrossLingual);
    }
    let mut failure: Option<LoopFailure> = None;

    for round in 1..=config.max_iterations {
        let history_context = manage_history(Some(&llm), &history, config.history_token_budget);
        let reevaluating = tools.contains(&ToolChoice::Reevaluate) && !history.rounds.is_empty();

        let (plan, evidence) = if reevaluating {
            let last = history.latest().expect("reevaluate needs a prior round");
            (last.plan.clone(), last.evidence.clone())
        } else {
            let feedback_view = if history.rounds.is_empty() {
                String::new()
            } else {
                history_context.clone()
            };
            let policy = if tools.contains(&ToolChoice::CredibleSources)
                || !config.user_allowed_domains.is_empty()
            {
                select_credible_sources(&llm, claim, &feedback_view, &config.user_allowed_domains)
            } else {
                DomainPolicy::default()
            };
            let mut languages = vec![config.source_language.clone()];
            if tools.contains(&ToolChoice::CrossLingual) || config.force_xle {
                languages.extend(expand_languages(&llm, claim, request, &config.source_language));
            }
            let (precision, recall) = generate_structured_queries(&llm, claim, &feedback_view);
            let plan = QueryPlan {
                id: format!("{}-r{round}", claim.claim.id),
                precision_query: precision,
                recall_query: recall,
                policy,
                languages,
                cutoff: config.cutoff_date,
            };

            let mut query_step = Map::new();
            let rendered: Vec<String> = [&plan.precision_query, &plan.recall_query]
                .iter()
                .filter_map(|n| n.render().ok())
                .collect();
            query_step.insert("result".to_string(), json!({ "advanced_query": rendered }));
            if plan.languages.len() > 1 {
                query_step.insert(
                    "multilingual_languages".to_string(),
                    json!(plan.languages[1..]),
                );
            }
            trace.push("generate_query", query_step);

            let executables = match compose_executable(&plan) {
                Ok(executables) => executables,
                Err(e) => {
                    failure = Some(LoopFailure {
                        kind: FailureKind::Provider,
                        message: e.to_string(),
                    });
                    break;
                }
            };
            let k = config.evidence_per_query.min(MAX_PAGE_SIZE);
            if config.evidence_per_query > MAX_PAGE_SIZE {
                tracing::warn!(
                    evidence_per_query = config.evidence_per_query,
                    "clamping evidence_per_query to the engine page cap"
                );
            }
            let mut pages: Vec<SearchPage> = Vec::new();
            let mut result_map = Map::new();
            let mut detail_queries = Vec::new();
            let multilingual = plan.languages.len() > 1;
            for executable in &executables {
                let query = match SearchQuery::new(
                    executable.text.clone(),
                    executable.language.clone(),
                    k,
                    config.cutoff_date,
                ) {
                    Ok(query) => query,
                    Err(e) => {
                        tracing::warn!(error = %e, "skipping invalid executable query");
                        continue;
                    }
                };
                match ctx.search.search(&query, &plan.policy, &config.blocked_domains, &plan.id) {
                    Ok(page) => {
                        let key = if multilingual {
                            format!("{} [{}]", executable.text, executable.language)
                        } else {
                            executable.text.clone()
                        };
                        let snippets: Vec<String> = page
                            .items
                            .iter()
                            .map(|i| format!("title: {}\nsnippet: {}", i.title, i.snippet))
                            .collect();
                        result_map.insert(key, json!(snippets));
                        detail_queries.push(json!({
                            "text": executable.text,
                            "language": executable.language,
                            "kind": executable.kind,
                            "items": page.items,
                        }));
                        pages.push(page);
                    }
                    Err(e) => {
                        failure = Some(search_error_failure(&e));
                        break;
                    }
                }
            }
            if failure.is_some() {
                break;
            }
            let mut search_step = Map::new();
            search_step.insert("result".to_string(), Value::Object(result_map));
            search_step.insert(
                "detail".to_string(),
                json!({
                    "source_language": config.source_language,
                    "policy": plan.policy,
                    "cutoff": plan.cutoff,
                    "queries": detail_queries,
                }),
            );
            trace.push("EvidenceSearch", search_step);
            (plan, dedupe(&pages))
        };

        let verify_context = if history.rounds.is_empty() {
            String::new()
        } else {
            history_context.clone()
        };
        let verdict = verify(&llm, claim, &evidence, &verify_context);
        let mut verdict_step = Map::new();
        verdict_step.insert("reasoning".to_string(), json!(verdict.reasoning));
        verdict_step.insert(
            "error".to_string(),
            json!(verdict.error_note.clone().unwrap_or_else(|| "None".into())),
        );
        verdict_step.insert(
            "correction".to_string(),
            json!(verdict.correction.clone().unwrap_or_else(|| "None".into())),
        );
        verdict_step.insert(
            "factuality".to_string(),
            json!(match verdict.label {
                Label::Supported => "True",
                Label::Contradicted => "False",
                Label::Inconclusive => "Inconclusive",
            }),
        );
        trace.push("factuality_check", verdict_step);

        history.rounds.push(IterationRecord {
            index: round,
            plan,
            evidence,
            verdict,
            reflection: None,
        });

        let decision = reflect(&llm, &history, config);
        if let Some(last) = history.rounds.last_mut() {
            last.reflection = Some(decision.clone());
        }
        if !decision.should_continue {
            break;
        }
        // Feedback steps are traced only when they launch another round;
        // a stop decision ends the trace at the verdict.
        let mut feedback_step = Map::new();
        feedback_step.insert("decision".to_string(), json!(true));
        feedback_step.insert(
            "tool".to_string(),
            json!(decision.tools.iter().map(|t| t.as_str()).collect::<Vec<_>>()),
        );
        feedback_step.insert("feedback".to_string(), json!(decision.feedback));
        trace.push("feedback", feedback_step);
        tools = decision.tools.clone();
    }

    let result = finish_claim(claim, history, failure, &llm);
    (result, trace)
}

fn finish_claim(
    claim: &ComprehensiveClaim,
    history: VerificationHistory,
    failure: Option<LoopFailure>,
    llm: &LlmHandle,
) -> ClaimResult {
    let rounds_used = history.rounds.len();
    let final_verdict = match (history.rounds.last(), &failure) {
        (Some(last), _) => last.verdict.clone(),
        (None, Some(failure)) => Verdict::new(
            Label::Inconclusive,
            format!("run failed before any verdict: {}", failure.message),
            Some(failure.message.clone()),
            None,
        ),
        (None, None) => Verdict::new(
            Label::Inconclusive,
            "no verification round completed",
            None,
            None,
        ),
    };
    let mut evidence_used = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut languages_used = Vec::new();
    for round in &history.rounds {
        for language in &round.plan.languages {
            if !languages_used.contains(language) {
                languages_used.push(language.clone());
            }
        }
        for item in &round.evidence {
            let key = crate::search::normalize_url(&item.url).unwrap_or_else(|| item.url.clone());
            if seen.insert(key) {
                evidence_used.push(item.clone());
            }
        }
    }
    ClaimResult {
        claim: claim.clone(),
        final_verdict,
        rounds_used,
        evidence_used,
        cost: llm.tag_totals(),
        languages_used,
        failure,
    }
}

/// Decomposes (unless claims are provided), grounds, and runs the loop per
/// claim. Results keep claim order; claims are independent and may run on
/// `workers` threads. Decomposition failure yields a single annotated
/// Inconclusive result covering the response.
pub fn check_response(
    ctx: &LoopContext<'_>,
    request: &CheckRequest,
    provided_claims: Option<Vec<AtomicClaim>>,
    workers: usize,
) -> Vec<(ClaimResult, ClaimTrace)> {
    let claims = match provided_claims {
        Some(claims) => claims,
        None => match decompose_response(ctx.llm, request) {
            Ok(claims) => claims,
            Err(e) => {
                tracing::warn!(error = %e, "decomposition failed");
                let claim = AtomicClaim {
                    id: "c1".to_string(),
                    text: request.response.clone(),
                    origin_span: Some((0, request.response.len())),
                };
                let comprehensive = crate::claim::build_comprehensive_claim(
                    &claim,
                    &crate::claim::GroundingDraft::ungrounded(&claim),
                    request,
                );
                let result = ClaimResult {
                    claim: comprehensive,
                    final_verdict: Verdict::new(
                        Label::Inconclusive,
                        format!("claim decomposition failed: {e}"),
                        Some(e.to_string()),
                        None,
                    ),
                    rounds_used: 0,
                    evidence_used: Vec::new(),
                    cost: ctx.llm.tag_totals(),
                    languages_used: Vec::new(),
                    failure: Some(LoopFailure {
                        kind: FailureKind::Provider,
                        message: e.to_string(),
                    }),
                };
                return vec![(result, ClaimTrace::default())];
            }
        },
    };
    let jobs: Vec<AtomicClaim> = claims;
    crate::parallel::run_batch(jobs, workers, |atomic| {
        let llm = ctx.llm.tagged(atomic.id.clone());
        let comprehensive = ground_to_comprehensive(&llm, &atomic, request);
        run_claim_loop(ctx, &comprehensive, request)
    })
}
