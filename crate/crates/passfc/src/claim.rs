//! Claim detection: decompose a response into atomic claims, attach entity
//! and temporal grounds, resolve claim periods deterministically, and align
//! the model's notion of "today" via the literal `Now` token.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use chrono::{Datelike, Days, Months, NaiveDate};
use regex::Regex;
use thiserror::Error;

use crate::model::{
    last_day_of_month, render_period, AtomicClaim, CheckRequest, ClaimPeriod, ComprehensiveClaim,
    EntityGround, Granularity, PeriodOrigin,
};
use crate::provider::{
    complete_object, parse_claim_list, LlmHandle, ProviderError, TemplateId,
};

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("decomposition failed: {0}")]
    Decomposition(#[source] ProviderError),
    #[error("grounding failed: {0}")]
    Grounding(#[source] ProviderError),
}

/// Raw grounding output before period resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundingDraft {
    pub revised_claim: String,
    /// Raw value of the prompt's "time" key.
    pub time_phrase: String,
    /// Surface form -> descriptor, in the order the model emitted them.
    pub entity_map: Vec<(String, String)>,
}

impl GroundingDraft {
    /// Grounding fallback: unrevised claim anchored at the validation date.
    pub fn ungrounded(claim: &AtomicClaim) -> Self {
        Self {
            revised_claim: claim.text.clone(),
            time_phrase: "Now".to_string(),
            entity_map: Vec::new(),
        }
    }
}

fn now_token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bNow\b").expect("valid regex"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignDirection {
    /// Replace occurrences of the rendered validation date with `Now` before
    /// prompting.
    Inject,
    /// Replace every literal `Now` token with the rendered validation date
    /// after generation.
    Restore,
}

/// The "today" alignment step: models reason under the neutral anchor `Now`,
/// and the real validation date is substituted back afterwards.
pub fn align_now(text: &str, validation_date: NaiveDate, direction: AlignDirection) -> String {
    let rendered = validation_date.format("%Y-%m-%d").to_string();
    match direction {
        AlignDirection::Inject => text.replace(&rendered, "Now"),
        AlignDirection::Restore => now_token_regex().replace_all(text, rendered.as_str()).into_owned(),
    }
}

/// Splits the response into atomic claims via the decomposition prompt.
/// Claims keep response order, are deduplicated, and get ids `c1..cN`.
/// The prompt's under-15-words bound is advisory: violations are logged.
pub fn decompose_response(
    llm: &LlmHandle,
    request: &CheckRequest,
) -> Result<Vec<AtomicClaim>, DetectionError> {
    let vars: BTreeMap<String, String> = [
        ("prompt".to_string(), context_prompt(request)),
        ("input".to_string(), request.response.clone()),
    ]
    .into();
    let response = llm
        .complete_template(TemplateId::Decompose, vars.clone())
        .map_err(DetectionError::Decomposition)?;
    let texts = match parse_claim_list(&response.text) {
        Ok(texts) => texts,
        Err(first) => {
            tracing::warn!(error = %first, "claim list parse failed, retrying once");
            let mut retry_vars = vars;
            retry_vars.insert(
                crate::provider::CORRECTIVE_NOTE_KEY.to_string(),
                "Your previous response could not be parsed. Respond with EXACTLY a JSON list of {\"claim\": ...} objects.".to_string(),
            );
            let retry = llm
                .complete_template(TemplateId::Decompose, retry_vars)
                .map_err(DetectionError::Decomposition)?;
            parse_claim_list(&retry.text)
                .map_err(|e| DetectionError::Decomposition(ProviderError::Parse(e)))?
        }
    };
    let mut seen = std::collections::HashSet::new();
    let mut claims = Vec::new();
    for text in texts {
        let text = text.trim().to_string();
        if !seen.insert(text.clone()) {
            continue;
        }
        if text.split_whitespace().count() >= 15 {
            tracing::warn!(claim = %text, "decomposed claim exceeds the advisory 15-word bound");
        }
        match AtomicClaim::new(format!("c{}", claims.len() + 1), text.clone()) {
            Ok(claim) => {
                let claim = match request.response.find(&text) {
                    Some(start) => claim.with_span((start, start + text.len())),
                    None => claim,
                };
                claims.push(claim);
            }
            Err(e) => tracing::warn!(claim = %text, error = %e, "dropping invalid decomposed claim"),
        }
    }
    Ok(claims)
}

fn context_prompt(request: &CheckRequest) -> String {
    let mut prompt = if request.prompt.trim().is_empty() {
        "None".to_string()
    } else {
        request.prompt.clone()
    };
    if !request.metadata.is_empty() {
        prompt.push_str("\n[Metadata]");
        for (key, value) in &request.metadata {
            prompt.push_str(&format!("\n{key}: {value}"));
        }
    }
    prompt
}

/// Runs the contextual-grounding prompt for one claim. Date mentions in the
/// inputs are neutralized to `Now` before the call.
pub fn ground_claim(
    llm: &LlmHandle,
    claim: &AtomicClaim,
    request: &CheckRequest,
) -> Result<GroundingDraft, DetectionError> {
    let inject = |text: &str| align_now(text, request.validation_date, AlignDirection::Inject);
    let vars: BTreeMap<String, String> = [
        ("prompt".to_string(), inject(&context_prompt(request))),
        ("response".to_string(), inject(&request.response)),
        ("claim".to_string(), inject(&claim.text)),
    ]
    .into();
    let map = complete_object(
        llm,
        TemplateId::Ground,
        vars,
        &["reasoning", "revised_claim", "time"],
    )
    .map_err(DetectionError::Grounding)?;

    let revised_claim = map
        .get("revised_claim")
        .and_then(|v| v.as_str())
        .unwrap_or(&claim.text)
        .trim()
        .to_string();
    let time_phrase = match map.get("time") {
        Some(serde_json::Value::String(s)) => s.trim().to_string(),
        Some(other) => other.to_string(),
        None => String::new(),
    };
    let mut entity_map = Vec::new();
    for (key, value) in &map {
        if matches!(key.as_str(), "reasoning" | "revised_claim" | "time") {
            continue;
        }
        if let Some(descriptor) = value.as_str() {
            entity_map.push((key.clone(), descriptor.to_string()));
        }
    }
    Ok(GroundingDraft {
        revised_claim: if revised_claim.is_empty() {
            claim.text.clone()
        } else {
            revised_claim
        },
        time_phrase,
        entity_map,
    })
}

static WORD_NUMBERS: [(&str, u32); 12] = [
    ("one", 1),
    ("two", 2),
    ("three", 3),
    ("four", 4),
    ("five", 5),
    ("six", 6),
    ("seven", 7),
    ("eight", 8),
    ("nine", 9),
    ("ten", 10),
    ("eleven", 11),
    ("twelve", 12),
];

fn parse_count(word: &str) -> Option<u32> {
    if let Ok(n) = word.parse::<u32>() {
        return Some(n);
    }
    if word == "a" || word == "an" {
        return Some(1);
    }
    WORD_NUMBERS
        .iter()
        .find(|(name, _)| *name == word)
        .map(|(_, n)| *n)
}

static MONTH_NAMES: [(&str, u32); 12] = [
    ("january", 1),
    ("february", 2),
    ("march", 3),
    ("april", 4),
    ("may", 5),
    ("june", 6),
    ("july", 7),
    ("august", 8),
    ("september", 9),
    ("october", 10),
    ("november", 11),
    ("december", 12),
];

fn parse_month_name(word: &str) -> Option<u32> {
    let word = word.trim_end_matches(['.', ',']);
    MONTH_NAMES
        .iter()
        .find(|(name, _)| *name == word || (word.len() >= 3 && name.starts_with(word) && word.len() == 3))
        .map(|(_, m)| *m)
}

fn plausible_year(n: i32) -> bool {
    (1000..=2999).contains(&n)
}

fn monday_of(date: NaiveDate) -> NaiveDate {
    date - Days::new(date.weekday().num_days_from_monday() as u64)
}

/// Deterministic, total resolution of a temporal cue into a claim period.
///
/// Absolute phrases parse to their literal span (a bare year covers the full
/// year), relative phrases resolve against the validation date, and `Now`,
/// emptiness, or anything unparseable falls back to a point interval at the
/// validation date.
pub fn resolve_claim_period(time_phrase: &str, validation_date: NaiveDate) -> ClaimPeriod {
    let raw = time_phrase.trim().trim_end_matches('.').trim();
    if raw.is_empty() {
        return ClaimPeriod::default_now(validation_date);
    }
    let lower = raw.to_ascii_lowercase();
    if lower == "now" || lower == "present" || lower == "currently" {
        return ClaimPeriod::default_now(validation_date);
    }
    if let Some(period) = resolve_relative(&lower, validation_date) {
        return period;
    }
    if let Some(period) = resolve_absolute(raw, &lower, validation_date) {
        return period;
    }
    // Last resort: a lone plausible year anywhere in the phrase.
    if let Some(year) = lower
        .split(|c: char| !c.is_ascii_digit())
        .filter_map(|w| w.parse::<i32>().ok())
        .find(|y| plausible_year(*y))
    {
        if let Ok(period) = ClaimPeriod::year(year, PeriodOrigin::Absolute) {
            return period;
        }
    }
    tracing::warn!(time_phrase, "unparseable temporal cue, defaulting to the validation date");
    ClaimPeriod::default_now(validation_date)
}

fn resolve_relative(lower: &str, validation_date: NaiveDate) -> Option<ClaimPeriod> {
    match lower {
        "today" | "this day" => {
            return Some(ClaimPeriod::day(validation_date, PeriodOrigin::Relative))
        }
        "yesterday" | "last day" => {
            return Some(ClaimPeriod::day(
                validation_date - Days::new(1),
                PeriodOrigin::Relative,
            ))
        }
        "tomorrow" | "next day" => {
            return Some(ClaimPeriod::day(
                validation_date + Days::new(1),
                PeriodOrigin::Relative,
            ))
        }
        "this year" => return ClaimPeriod::year(validation_date.year(), PeriodOrigin::Relative).ok(),
        "last year" => {
            return ClaimPeriod::year(validation_date.year() - 1, PeriodOrigin::Relative).ok()
        }
        "next year" => {
            return ClaimPeriod::year(validation_date.year() + 1, PeriodOrigin::Relative).ok()
        }
        "this month" => {
            return Some(ClaimPeriod::month_of(validation_date, PeriodOrigin::Relative))
        }
        "last month" => {
            return Some(ClaimPeriod::month_of(
                validation_date.checked_sub_months(Months::new(1))?,
                PeriodOrigin::Relative,
            ))
        }
        "next month" => {
            return Some(ClaimPeriod::month_of(
                validation_date.checked_add_months(Months::new(1))?,
                PeriodOrigin::Relative,
            ))
        }
        "this week" | "last week" | "next week" => {
            let monday = monday_of(validation_date);
            let start = match lower {
                "last week" => monday - Days::new(7),
                "next week" => monday + Days::new(7),
                _ => monday,
            };
            return ClaimPeriod::new(
                start,
                start + Days::new(6),
                Granularity::Day,
                PeriodOrigin::Relative,
            )
            .ok();
        }
        _ => {}
    }

    // "<N> days/weeks/months/years ago"
    let words: Vec<&str> = lower.split_whitespace().collect();
    if words.len() == 3 && words[2] == "ago" {
        let count = parse_count(words[0])?;
        let unit = words[1].trim_end_matches('s');
        let date = match unit {
            "day" => validation_date.checked_sub_days(Days::new(count as u64))?,
            "week" => validation_date.checked_sub_days(Days::new(7 * count as u64))?,
            "month" => validation_date.checked_sub_months(Months::new(count))?,
            "year" => validation_date.checked_sub_months(Months::new(12 * count))?,
            _ => return None,
        };
        return Some(ClaimPeriod::day(date, PeriodOrigin::Relative));
    }
    None
}

fn resolve_absolute(raw: &str, lower: &str, validation_date: NaiveDate) -> Option<ClaimPeriod> {
    let stripped = lower
        .strip_prefix("in ")
        .or_else(|| lower.strip_prefix("on "))
        .or_else(|| lower.strip_prefix("as of "))
        .or_else(|| lower.strip_prefix("at "))
        .or_else(|| lower.strip_prefix("during "))
        .unwrap_or(lower);
    let raw_stripped = &raw[raw.len() - stripped.len()..];

    // Open-ended "since X": close the interval at the validation date.
    if let Some(rest) = stripped.strip_prefix("since ") {
        if let Ok(year) = rest.trim().parse::<i32>() {
            if plausible_year(year) {
                let start = NaiveDate::from_ymd_opt(year, 1, 1)?;
                if start <= validation_date {
                    return ClaimPeriod::new(
                        start,
                        validation_date,
                        Granularity::Day,
                        PeriodOrigin::Absolute,
                    )
                    .ok();
                }
            }
        }
    }

    // Bare year.
    if let Ok(year) = stripped.parse::<i32>() {
        if plausible_year(year) {
            return ClaimPeriod::year(year, PeriodOrigin::Absolute).ok();
        }
    }
    // Canonical rendered forms: YYYY-MM-DD and YYYY-MM-DD..YYYY-MM-DD.
    if let Some(period) = ClaimPeriod::parse_rendered(raw_stripped) {
        return Some(period);
    }
    // YYYY-MM.
    if let Some((y, m)) = stripped.split_once('-') {
        if let (Ok(year), Ok(month)) = (y.parse::<i32>(), m.parse::<u32>()) {
            if plausible_year(year) && (1..=12).contains(&month) {
                let first = NaiveDate::from_ymd_opt(year, month, 1)?;
                return ClaimPeriod::new(
                    first,
                    last_day_of_month(year, month),
                    Granularity::Month,
                    PeriodOrigin::Absolute,
                )
                .ok();
            }
        }
    }
    // DD-MM-YYYY and DD/MM/YYYY, with a MM/DD/YYYY fallback when the
    // day-first reading is not a valid date.
    for sep in ['-', '/'] {
        let parts: Vec<&str> = stripped.split(sep).collect();
        if parts.len() == 3 {
            if let (Ok(a), Ok(b), Ok(y)) = (
                parts[0].parse::<u32>(),
                parts[1].parse::<u32>(),
                parts[2].parse::<i32>(),
            ) {
                if plausible_year(y) {
                    if let Some(date) =
                        NaiveDate::from_ymd_opt(y, b, a).or_else(|| NaiveDate::from_ymd_opt(y, a, b))
                    {
                        return Some(ClaimPeriod::day(date, PeriodOrigin::Absolute));
                    }
                }
            }
        }
    }

    // "<month> YYYY", "<month> DD, YYYY", "DD <month> YYYY".
    let words: Vec<&str> = stripped.split_whitespace().collect();
    match words.as_slice() {
        [month, year] => {
            let month = parse_month_name(month)?;
            let year: i32 = year.parse().ok().filter(|y| plausible_year(*y))?;
            let first = NaiveDate::from_ymd_opt(year, month, 1)?;
            ClaimPeriod::new(
                first,
                last_day_of_month(year, month),
                Granularity::Month,
                PeriodOrigin::Absolute,
            )
            .ok()
        }
        [month, day, year] if parse_month_name(month).is_some() => {
            let month = parse_month_name(month)?;
            let day: u32 = day.trim_end_matches(',').parse().ok()?;
            let year: i32 = year.parse().ok().filter(|y| plausible_year(*y))?;
            let date = NaiveDate::from_ymd_opt(year, month, day)?;
            Some(ClaimPeriod::day(date, PeriodOrigin::Absolute))
        }
        [day, month, year] if parse_month_name(month).is_some() => {
            let month = parse_month_name(month)?;
            let day: u32 = day.parse().ok()?;
            let year: i32 = year.parse().ok().filter(|y| plausible_year(*y))?;
            let date = NaiveDate::from_ymd_opt(year, month, day)?;
            Some(ClaimPeriod::day(date, PeriodOrigin::Absolute))
        }
        _ => None,
    }
}

/// Exact background-block wording used in grounded claims.
const BACKGROUND_HEADER: &str = "Background Info of the Claim (The 'time' key represents the temporal context or validity period of the claim. And description of the entities in the claim is for better understanding of the fact in the claim.)";

/// Assembles the comprehensive claim: revised text plus a background block
/// carrying the rendered claim period and entity descriptors. The output
/// never contains the literal token `Now`.
pub fn build_comprehensive_claim(
    claim: &AtomicClaim,
    draft: &GroundingDraft,
    request: &CheckRequest,
) -> ComprehensiveClaim {
    let period = resolve_claim_period(&draft.time_phrase, request.validation_date);
    let mut entities = Vec::new();
    for (entity, descriptor) in &draft.entity_map {
        match EntityGround::new(entity.clone(), descriptor.clone()) {
            Ok(ground) => entities.push(ground),
            Err(e) => tracing::warn!(entity, error = %e, "dropping invalid entity ground"),
        }
    }
    let restored_claim =
        align_now(&draft.revised_claim, request.validation_date, AlignDirection::Restore);
    let mut grounded_text = format!(
        "{restored_claim}\n{BACKGROUND_HEADER}\n\ttime:{}",
        render_period(&period)
    );
    for ground in &entities {
        grounded_text.push_str(&format!("\n\t{}:{}", ground.entity, ground.descriptor));
    }
    let grounded_text = align_now(&grounded_text, request.validation_date, AlignDirection::Restore);
    ComprehensiveClaim {
        claim: AtomicClaim {
            id: claim.id.clone(),
            text: claim.text.clone(),
            origin_span: claim.origin_span,
        },
        period,
        entities,
        grounded_text,
    }
}

/// `ground_claim` + `build_comprehensive_claim` with graceful degradation:
/// a grounding failure anchors the claim at the validation date.
pub fn ground_to_comprehensive(
    llm: &LlmHandle,
    claim: &AtomicClaim,
    request: &CheckRequest,
) -> ComprehensiveClaim {
    let draft = match ground_claim(llm, claim, request) {
        Ok(draft) => draft,
        Err(e) => {
            tracing::warn!(claim = %claim.text, error = %e, "grounding failed, proceeding ungrounded");
            GroundingDraft::ungrounded(claim)
        }
    };
    build_comprehensive_claim(claim, &draft, request)
}
