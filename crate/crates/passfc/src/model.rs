//! Shared domain types, the claim-period algebra, and the pipeline configuration.
//!
//! Everything here is an immutable value object with no I/O; instances are
//! safe to share across worker threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// Three-way veracity label.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Supported,
    Contradicted,
    Inconclusive,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Supported, Label::Contradicted, Label::Inconclusive];

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Supported => "supported",
            Label::Contradicted => "contradicted",
            Label::Inconclusive => "inconclusive",
        }
    }

    /// Index into confusion-matrix axes, in `ALL` order.
    pub fn index(&self) -> usize {
        match self {
            Label::Supported => 0,
            Label::Contradicted => 1,
            Label::Inconclusive => 2,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The prompt/response pair under check plus the validation date and optional
/// provenance metadata (speaker, origin URL, location, venue).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckRequest {
    pub prompt: String,
    pub response: String,
    pub validation_date: NaiveDate,
    pub source_language: String,
    pub metadata: BTreeMap<String, String>,
}

impl CheckRequest {
    pub fn new(
        prompt: impl Into<String>,
        response: impl Into<String>,
        validation_date: NaiveDate,
    ) -> Result<Self, ModelError> {
        let response = response.into();
        if response.trim().is_empty() {
            return Err(invalid("response", "must be non-empty"));
        }
        Ok(Self {
            prompt: prompt.into(),
            response,
            validation_date,
            source_language: "en".to_string(),
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_language(mut self, tag: impl Into<String>) -> Self {
        self.source_language = tag.into();
        self
    }

    pub fn with_metadata(mut self, metadata: BTreeMap<String, String>) -> Self {
        self.metadata = metadata;
        self
    }
}

/// A minimal single-proposition statement extracted from a response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicClaim {
    pub id: String,
    pub text: String,
    /// Character range into the originating response, when the claim text
    /// survives extraction verbatim.
    pub origin_span: Option<(usize, usize)>,
}

impl AtomicClaim {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(invalid("claim text", "must be non-empty"));
        }
        if has_placeholder_token(&text) {
            return Err(invalid(
                "claim text",
                format!("contains unresolved placeholder token: {text:?}"),
            ));
        }
        Ok(Self {
            id: id.into(),
            text,
            origin_span: None,
        })
    }

    pub fn with_span(mut self, span: (usize, usize)) -> Self {
        self.origin_span = Some(span);
        self
    }
}

/// True when `text` still carries a `{placeholder}`-style substitution token.
fn has_placeholder_token(text: &str) -> bool {
    let mut open = None;
    for (i, ch) in text.char_indices() {
        match ch {
            '{' => open = Some(i),
            '}' => {
                if let Some(start) = open {
                    let inner = &text[start + 1..i];
                    if !inner.is_empty()
                        && inner
                            .chars()
                            .all(|c| c.is_ascii_alphanumeric() || c == '_')
                    {
                        return true;
                    }
                    open = None;
                }
            }
            _ => {}
        }
    }
    false
}

/// Granularity at which a temporal cue was expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Day,
    Month,
    Year,
}

/// How the claim period was derived from the claim's temporal cue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodOrigin {
    Absolute,
    Relative,
    DefaultNow,
}

/// Closed calendar-date interval over which a claim must hold to be true.
///
/// Periods are day-granular internally; month/year cues expand to their full
/// interval bounds so coverage checks stay total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimPeriod {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub granularity: Granularity,
    pub origin: PeriodOrigin,
}

impl ClaimPeriod {
    pub fn new(
        start: NaiveDate,
        end: NaiveDate,
        granularity: Granularity,
        origin: PeriodOrigin,
    ) -> Result<Self, ModelError> {
        if start > end {
            return Err(invalid("claim period", format!("start {start} > end {end}")));
        }
        if granularity == Granularity::Year {
            let full_year = start.month() == 1
                && start.day() == 1
                && end.month() == 12
                && end.day() == 31
                && start.year() == end.year();
            if !full_year {
                return Err(invalid(
                    "claim period",
                    "year granularity requires a Jan 1 .. Dec 31 span of one year",
                ));
            }
        }
        Ok(Self {
            start,
            end,
            granularity,
            origin,
        })
    }

    /// Single-day period.
    pub fn day(date: NaiveDate, origin: PeriodOrigin) -> Self {
        Self {
            start: date,
            end: date,
            granularity: Granularity::Day,
            origin,
        }
    }

    /// Full calendar month containing `date`.
    pub fn month_of(date: NaiveDate, origin: PeriodOrigin) -> Self {
        let start = date.with_day(1).expect("day 1 always valid");
        let end = last_day_of_month(date.year(), date.month());
        Self {
            start,
            end,
            granularity: Granularity::Month,
            origin,
        }
    }

    /// Full calendar year.
    pub fn year(year: i32, origin: PeriodOrigin) -> Result<Self, ModelError> {
        let start = NaiveDate::from_ymd_opt(year, 1, 1)
            .ok_or_else(|| invalid("claim period", format!("year {year} out of range")))?;
        let end = NaiveDate::from_ymd_opt(year, 12, 31).expect("dec 31 valid if jan 1 is");
        Ok(Self {
            start,
            end,
            granularity: Granularity::Year,
            origin,
        })
    }

    /// Point interval at the validation date, used when no temporal cue exists.
    pub fn default_now(validation_date: NaiveDate) -> Self {
        Self::day(validation_date, PeriodOrigin::DefaultNow)
    }

    pub fn covers(&self, inner: &ClaimPeriod) -> bool {
        period_covers(self, inner)
    }

    pub fn same_span(&self, other: &ClaimPeriod) -> bool {
        self.start == other.start && self.end == other.end
    }

    pub fn render(&self) -> String {
        render_period(self)
    }

    /// Inverse of [`render_period`] for the canonical text forms.
    pub fn parse_rendered(text: &str) -> Option<ClaimPeriod> {
        let text = text.trim();
        if text.len() == 4 && text.chars().all(|c| c.is_ascii_digit()) {
            let year: i32 = text.parse().ok()?;
            return ClaimPeriod::year(year, PeriodOrigin::Absolute).ok();
        }
        if let Some((a, b)) = text.split_once("..") {
            let start = NaiveDate::parse_from_str(a, "%Y-%m-%d").ok()?;
            let end = NaiveDate::parse_from_str(b, "%Y-%m-%d").ok()?;
            if start > end {
                return None;
            }
            let full_month = start.day() == 1
                && start.year() == end.year()
                && start.month() == end.month()
                && end == last_day_of_month(end.year(), end.month());
            let granularity = if full_month {
                Granularity::Month
            } else {
                Granularity::Day
            };
            return ClaimPeriod::new(start, end, granularity, PeriodOrigin::Absolute).ok();
        }
        let date = NaiveDate::parse_from_str(text, "%Y-%m-%d").ok()?;
        Some(ClaimPeriod::day(date, PeriodOrigin::Absolute))
    }
}

pub fn last_day_of_month(year: i32, month: u32) -> NaiveDate {
    let (ny, nm) = if month == 12 {
        (year + 1, 1)
    } else {
        (year, month + 1)
    };
    NaiveDate::from_ymd_opt(ny, nm, 1)
        .expect("successor month valid")
        .pred_opt()
        .expect("not at date range boundary")
}

/// True iff `inner` is fully contained in `outer`.
pub fn period_covers(outer: &ClaimPeriod, inner: &ClaimPeriod) -> bool {
    outer.start <= inner.start && inner.end <= outer.end
}

/// Canonical period text: `YYYY` for year periods, `YYYY-MM-DD` for single
/// days, `YYYY-MM-DD..YYYY-MM-DD` otherwise.
pub fn render_period(period: &ClaimPeriod) -> String {
    if period.granularity == Granularity::Year {
        return period.start.year().to_string();
    }
    if period.start == period.end {
        return period.start.format("%Y-%m-%d").to_string();
    }
    format!(
        "{}..{}",
        period.start.format("%Y-%m-%d"),
        period.end.format("%Y-%m-%d")
    )
}

/// A surface form plus a short disambiguating description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityGround {
    pub entity: String,
    pub descriptor: String,
}

impl EntityGround {
    pub fn new(entity: impl Into<String>, descriptor: impl Into<String>) -> Result<Self, ModelError> {
        let entity = entity.into();
        let descriptor = descriptor.into();
        if entity.trim().is_empty() {
            return Err(invalid("entity", "must be non-empty"));
        }
        if descriptor.trim().is_empty() {
            return Err(invalid("descriptor", "must be non-empty"));
        }
        if descriptor == entity {
            return Err(invalid("descriptor", "must differ from the entity surface form"));
        }
        Ok(Self { entity, descriptor })
    }
}

/// Atomic claim enriched with entity descriptors and a resolved claim period;
/// the unit that flows through the search/verify loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComprehensiveClaim {
    pub claim: AtomicClaim,
    pub period: ClaimPeriod,
    pub entities: Vec<EntityGround>,
    /// Claim plus rendered background block, as fed to search and verification.
    pub grounded_text: String,
}

/// One search hit kept as evidence. Snippets are the evidence unit; no page
/// fetching happens downstream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub title: String,
    pub snippet: String,
    pub url: String,
    pub published: Option<NaiveDate>,
    pub language: String,
    /// Identifier of the QueryPlan that fetched this item.
    pub query_origin: String,
}

impl EvidenceItem {
    /// Validates that the URL is absolute with a resolvable host.
    pub fn new(
        title: impl Into<String>,
        snippet: impl Into<String>,
        url: impl Into<String>,
        language: impl Into<String>,
        query_origin: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let url = url.into();
        let parsed = url::Url::parse(&url)
            .map_err(|e| invalid("url", format!("{url:?}: {e}")))?;
        if parsed.host_str().is_none() {
            return Err(invalid("url", format!("{url:?} has no host component")));
        }
        Ok(Self {
            title: title.into(),
            snippet: snippet.into(),
            url,
            published: None,
            language: language.into(),
            query_origin: query_origin.into(),
        })
    }

    pub fn with_published(mut self, date: NaiveDate) -> Self {
        self.published = Some(date);
        self
    }

    pub fn host(&self) -> Option<String> {
        url::Url::parse(&self.url)
            .ok()
            .and_then(|u| u.host_str().map(|h| h.to_ascii_lowercase()))
    }
}

/// Verdict for one claim after a verification round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub reasoning: String,
    pub error_note: Option<String>,
    pub correction: Option<String>,
}

impl Verdict {
    /// Normalizes so a Supported verdict never carries an error note.
    pub fn new(
        label: Label,
        reasoning: impl Into<String>,
        error_note: Option<String>,
        correction: Option<String>,
    ) -> Self {
        let error_note = match label {
            Label::Supported => None,
            _ => error_note.filter(|s| !s.trim().is_empty()),
        };
        Self {
            label,
            reasoning: reasoning.into(),
            error_note,
            correction: correction.filter(|s| !s.trim().is_empty()),
        }
    }
}

fn default_evidence_per_query() -> usize {
    10
}
fn default_max_iterations() -> usize {
    2
}
fn default_triggers() -> BTreeSet<Label> {
    [Label::Contradicted, Label::Inconclusive].into_iter().collect()
}
fn default_source_language() -> String {
    "en".to_string()
}
fn default_temperature() -> f64 {
    0.01
}

/// Pipeline knobs. Field names double as the config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Top-k snippets kept per executed query.
    pub evidence_per_query: usize,
    pub max_iterations: usize,
    /// Verdict labels that allow reflection to relaunch a search.
    pub reflection_triggers: BTreeSet<Label>,
    /// Evidence published after this date is excluded (leakage guard).
    pub cutoff_date: Option<NaiveDate>,
    pub blocked_domains: Vec<String>,
    pub user_allowed_domains: Vec<String>,
    pub source_language: String,
    /// Run cross-lingual expansion on every new search round.
    pub force_xle: bool,
    /// When set, rendered history is kept within this many (approximate) tokens.
    pub history_token_budget: Option<usize>,
    pub llm_temperature: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            evidence_per_query: default_evidence_per_query(),
            max_iterations: default_max_iterations(),
            reflection_triggers: default_triggers(),
            cutoff_date: None,
            blocked_domains: Vec::new(),
            user_allowed_domains: Vec::new(),
            source_language: default_source_language(),
            force_xle: false,
            history_token_budget: None,
            llm_temperature: default_temperature(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.evidence_per_query < 1 {
            return Err(invalid("evidence_per_query", "must be >= 1"));
        }
        if self.max_iterations < 1 {
            return Err(invalid("max_iterations", "must be >= 1"));
        }
        if let Some(budget) = self.history_token_budget {
            if budget == 0 {
                return Err(invalid("history_token_budget", "must be positive when set"));
            }
        }
        Ok(())
    }
}

/// Supplies "today" so inference never reads the wall clock directly.
pub trait Clock: Send + Sync {
    fn today(&self) -> NaiveDate;
}

/// Wall-clock implementation for production runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn today(&self) -> NaiveDate {
        chrono::Local::now().date_naive()
    }
}

/// Fixed date for tests and replays.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub NaiveDate);

impl Clock for FixedClock {
    fn today(&self) -> NaiveDate {
        self.0
    }
}

/// Character-based token estimate (4 chars per token), tokenizer-independent.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// Convenience for tests and fixtures.
pub fn date(year: i32, month: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(year, month, day).expect("valid calendar date")
}
