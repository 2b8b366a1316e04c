//! Evaluation harness: normalized-dataset loading with per-dataset label and
//! cutoff rules, accuracy/macro-F1 metrics, batch evaluation with result
//! files, hyperparameter sweeps, and the cross-lingual similarity report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub mod similarity;

pub use similarity::{similarity_report, Embedder, EmbedderError, HashEmbedder, SimilarityRow, TraceRef};

use crate::model::{AtomicClaim, CheckRequest, Label, PipelineConfig};
use crate::verify::{check_response, ClaimTrace, LoopContext};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: unknown gold label {label:?}")]
    UnknownLabel { line: usize, label: String },
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction/gold length mismatch: {predictions} vs {gold}")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("metrics need at least one pair")]
    Empty,
}

/// Source benchmark of a normalized record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    FactoolQa,
    FelmWk,
    FactcheckGpt,
    ScifactOpen,
    AveritecDev,
    Xfact,
    Custom,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 7] = [
        DatasetKind::FactoolQa,
        DatasetKind::FelmWk,
        DatasetKind::FactcheckGpt,
        DatasetKind::ScifactOpen,
        DatasetKind::AveritecDev,
        DatasetKind::Xfact,
        DatasetKind::Custom,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::FactoolQa => "factool_qa",
            DatasetKind::FelmWk => "felm_wk",
            DatasetKind::FactcheckGpt => "factcheck_gpt",
            DatasetKind::ScifactOpen => "scifact_open",
            DatasetKind::AveritecDev => "averitec_dev",
            DatasetKind::Xfact => "xfact",
            DatasetKind::Custom => "custom",
        }
    }

    pub fn from_name(name: &str) -> Option<DatasetKind> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }

    /// Dataset-level evidence cutoff for collections without per-record
    /// timestamps: the dataset paper's publication date. Timestamped
    /// collections use each record's validation date instead.
    pub fn default_cutoff(&self) -> Option<NaiveDate> {
        let (y, m, d) = match self {
            DatasetKind::FactoolQa => (2023, 7, 26),
            DatasetKind::FelmWk => (2023, 10, 2),
            DatasetKind::FactcheckGpt => (2023, 11, 15),
            DatasetKind::ScifactOpen => (2022, 10, 25),
            DatasetKind::AveritecDev | DatasetKind::Xfact | DatasetKind::Custom => return None,
        };
        Some(crate::model::date(y, m, d))
    }

    /// Whether the cutoff follows each record's validation date.
    pub fn per_record_cutoff(&self) -> bool {
        matches!(self, DatasetKind::AveritecDev | DatasetKind::Xfact)
    }

    /// Fact-checking portals blocked for leakage-prone collections. The full
    /// faux-domain list ships with the AVeriTeC data itself; this is
    /// the well-known core, and `blocked_domains` in the config extends it.
    pub fn blocked_defaults(&self) -> &'static [&'static str] {
        match self {
            DatasetKind::AveritecDev | DatasetKind::Xfact => &[
                "snopes.com",
                "politifact.com",
                "factcheck.org",
                "fullfact.org",
                "leadstories.com",
                "truthorfiction.com",
                "checkyourfact.com",
                "factcheck.afp.com",
            ],
            _ => &[],
        }
    }
}

/// One normalized benchmark record.
#[derive(Debug, Clone)]
pub struct DatasetRecord {
    pub id: String,
    pub request: CheckRequest,
    pub provided_claims: Option<Vec<AtomicClaim>>,
    /// Per claim when claims are provided, otherwise one record-level label.
    pub gold_labels: Vec<Label>,
    pub dataset: DatasetKind,
}

/// Gold-label vocabulary, including the AVeriTeC merge: "not enough
/// evidence" and "conflicting evidence/cherry-picking" both map to
/// Inconclusive.
pub fn parse_gold_label(raw: &str) -> Option<Label> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "supported" | "support" | "true" | "factual" => Some(Label::Supported),
        "contradicted" | "refuted" | "false" | "non-factual" => Some(Label::Contradicted),
        "inconclusive"
        | "not enough evidence"
        | "not enough info"
        | "conflicting evidence/cherry-picking"
        | "conflicting evidence"
        | "cherry-picking"
        | "unverifiable" => Some(Label::Inconclusive),
        _ => None,
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: Option<String>,
    #[serde(default)]
    prompt: String,
    response: Option<String>,
    validation_date: Option<NaiveDate>,
    language: Option<String>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    claims: Option<Vec<RawClaim>>,
    label: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawClaim {
    text: String,
    label: String,
}

/// Loads a normalized JSONL dataset file (one record per line).
pub fn load_dataset(path: &Path, kind: DatasetKind) -> Result<Vec<DatasetRecord>, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        records.push(normalize_record(raw, kind, line_no)?);
    }
    Ok(records)
}

fn normalize_record(
    raw: RawRecord,
    kind: DatasetKind,
    line: usize,
) -> Result<DatasetRecord, DatasetError> {
    let id = raw.id.unwrap_or_else(|| format!("record-{line}"));
    let response = raw
        .response
        .filter(|r| !r.trim().is_empty())
        .ok_or_else(|| DatasetError::Schema {
            line,
            message: "missing or empty \"response\"".to_string(),
        })?;
    let validation_date = match raw.validation_date {
        Some(date) => date,
        None => match kind.default_cutoff() {
            Some(date) => date,
            None => {
                return Err(DatasetError::Schema {
                    line,
                    message: format!(
                        "dataset {} requires a per-record validation_date",
                        kind.name()
                    ),
                })
            }
        },
    };
    let mut request =
        CheckRequest::new(raw.prompt, response, validation_date).map_err(|e| {
            DatasetError::Schema {
                line,
                message: e.to_string(),
            }
        })?;
    request = request.with_metadata(raw.metadata);
    if let Some(language) = raw.language {
        request = request.with_language(language);
    } else if kind == DatasetKind::Xfact {
        return Err(DatasetError::Schema {
            line,
            message: "xfact records must carry their language tag".to_string(),
        });
    }

    let (provided_claims, gold_labels) = match raw.claims {
        Some(raw_claims) if !raw_claims.is_empty() => {
            let mut claims = Vec::with_capacity(raw_claims.len());
            let mut labels = Vec::with_capacity(raw_claims.len());
            for (j, rc) in raw_claims.into_iter().enumerate() {
                let label = parse_gold_label(&rc.label).ok_or(DatasetError::UnknownLabel {
                    line,
                    label: rc.label.clone(),
                })?;
                let claim =
                    AtomicClaim::new(format!("c{}", j + 1), rc.text).map_err(|e| {
                        DatasetError::Schema {
                            line,
                            message: e.to_string(),
                        }
                    })?;
                claims.push(claim);
                labels.push(label);
            }
            (Some(claims), labels)
        }
        _ => {
            let label_text = raw.label.ok_or_else(|| DatasetError::Schema {
                line,
                message: "record needs either \"claims\" or a record-level \"label\"".to_string(),
            })?;
            let label = parse_gold_label(&label_text).ok_or(DatasetError::UnknownLabel {
                line,
                label: label_text,
            })?;
            (None, vec![label])
        }
    };
    Ok(DatasetRecord {
        id,
        request,
        provided_claims,
        gold_labels,
        dataset: kind,
    })
}

/// Accuracy over all three classes, confusion counts, per-class F1, and the
/// protocol's macro-F1: the mean of the Supported and Contradicted F1 only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: BTreeMap<Label, f64>,
    /// `confusion[gold][predicted]` in Supported/Contradicted/Inconclusive
    /// order.
    pub confusion: [[u64; 3]; 3],
    pub n: u64,
}

pub fn compute_metrics(predictions: &[Label], gold: &[Label]) -> Result<MetricsReport, MetricsError> {
    if predictions.len() != gold.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            gold: gold.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut confusion = [[0u64; 3]; 3];
    for (p, g) in predictions.iter().zip(gold) {
        confusion[g.index()][p.index()] += 1;
    }
    let n = predictions.len() as u64;
    let correct: u64 = (0..3).map(|i| confusion[i][i]).sum();
    let mut per_class_f1 = BTreeMap::new();
    for label in Label::ALL {
        let i = label.index();
        let tp = confusion[i][i] as f64;
        let fp: f64 = (0..3).filter(|&g| g != i).map(|g| confusion[g][i] as f64).sum();
        let fn_: f64 = (0..3).filter(|&p| p != i).map(|p| confusion[i][p] as f64).sum();
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class_f1.insert(label, f1);
    }
    let macro_f1 =
        (per_class_f1[&Label::Supported] + per_class_f1[&Label::Contradicted]) / 2.0;
    Ok(MetricsReport {
        accuracy: correct as f64 / n as f64,
        macro_f1,
        per_class_f1,
        confusion,
        n,
    })
}

/// One line of the per-record results file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub record_id: String,
    pub claim_id: String,
    pub prediction: Label,
    pub gold: Label,
    pub rounds_used: usize,
    pub evidence_count: usize,
    pub languages_used: String,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CostSummary {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub search_calls: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalOutput {
    pub metrics: MetricsReport,
    pub cost: CostSummary,
    pub rows: Vec<EvalRow>,
    pub config_fingerprint: String,
    #[serde(skip)]
    pub traces: Vec<(String, ClaimTrace)>,
}

/// Stable hash of the effective configuration, embedded in results files.
pub fn config_fingerprint(config: &PipelineConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    crate::provider::hex_lower(&hasher.finalize()[..8])
}

/// Effective per-record pipeline config: source language follows the record,
/// and the cutoff follows the record's validation date (timestamped
/// datasets) or the dataset constant unless the base config pins one.
pub fn record_config(base: &PipelineConfig, record: &DatasetRecord) -> PipelineConfig {
    let mut config = base.clone();
    config.source_language = record.request.source_language.clone();
    if config.cutoff_date.is_none() {
        config.cutoff_date = if record.dataset.per_record_cutoff() {
            Some(record.request.validation_date)
        } else {
            record.dataset.default_cutoff()
        };
    }
    for domain in record.dataset.blocked_defaults() {
        if !config.blocked_domains.iter().any(|d| d == domain) {
            config.blocked_domains.push(domain.to_string());
        }
    }
    config
}

/// Aggregates per-claim verdicts into one record-level prediction for
/// records whose gold label is record-level: any contradiction contradicts,
/// all-supported supports, anything else is inconclusive.
pub fn aggregate_record_prediction(labels: &[Label]) -> Label {
    if labels.contains(&Label::Contradicted) {
        Label::Contradicted
    } else if !labels.is_empty() && labels.iter().all(|l| *l == Label::Supported) {
        Label::Supported
    } else {
        Label::Inconclusive
    }
}

/// Runs the pipeline over a dataset. Record-level work runs on `workers`
/// threads (claims within a record stay sequential); aggregation is a
/// single-threaded reduce in input order, so results files are
/// deterministic under any worker count.
pub fn run_eval(
    ctx: &LoopContext<'_>,
    records: &[DatasetRecord],
    workers: usize,
) -> Result<EvalOutput, MetricsError> {
    let jobs: Vec<(usize, DatasetRecord)> = records.iter().cloned().enumerate().collect();
    let outputs = crate::parallel::run_batch(jobs, workers, |(index, record)| {
        let config = record_config(ctx.config, &record);
        let record_ctx = LoopContext {
            llm: ctx.llm,
            search: ctx.search,
            config: &config,
        };
        let outcomes = check_response(
            &record_ctx,
            &record.request,
            record.provided_claims.clone(),
            1,
        );
        (index, record, outcomes)
    });

    let mut rows = Vec::new();
    let mut predictions = Vec::new();
    let mut gold = Vec::new();
    let mut traces = Vec::new();
    for (_, record, outcomes) in outputs {
        for (result, trace) in &outcomes {
            traces.push((format!("{}-{}", record.id, result.claim.claim.id), trace.clone()));
        }
        if record.provided_claims.is_some() {
            for ((result, _), gold_label) in outcomes.iter().zip(&record.gold_labels) {
                predictions.push(result.final_verdict.label);
                gold.push(*gold_label);
                rows.push(EvalRow {
                    record_id: record.id.clone(),
                    claim_id: result.claim.claim.id.clone(),
                    prediction: result.final_verdict.label,
                    gold: *gold_label,
                    rounds_used: result.rounds_used,
                    evidence_count: result.evidence_used.len(),
                    languages_used: result.languages_used.join(";"),
                });
            }
        } else {
            let labels: Vec<Label> = outcomes.iter().map(|(r, _)| r.final_verdict.label).collect();
            let prediction = aggregate_record_prediction(&labels);
            let gold_label = record.gold_labels[0];
            predictions.push(prediction);
            gold.push(gold_label);
            let mut languages: Vec<String> = Vec::new();
            for (result, _) in &outcomes {
                for language in &result.languages_used {
                    if !languages.contains(language) {
                        languages.push(language.clone());
                    }
                }
            }
            rows.push(EvalRow {
                record_id: record.id.clone(),
                claim_id: "all".to_string(),
                prediction,
                gold: gold_label,
                rounds_used: outcomes.iter().map(|(r, _)| r.rounds_used).max().unwrap_or(0),
                evidence_count: outcomes.iter().map(|(r, _)| r.evidence_used.len()).sum(),
                languages_used: languages.join(";"),
            });
        }
    }
    let metrics = compute_metrics(&predictions, &gold)?;
    let totals = ctx.llm.ledger().totals();
    Ok(EvalOutput {
        metrics,
        cost: CostSummary {
            prompt_tokens: totals.prompt_tokens,
            completion_tokens: totals.completion_tokens,
            search_calls: ctx.search.calls(),
        },
        rows,
        config_fingerprint: config_fingerprint(ctx.config),
        traces,
    })
}

/// Writes `results.csv`, `summary.json`, `cost.json`, and per-claim trace
/// files under `out_dir`. Contents are a pure function of the run, so replay
/// runs produce byte-identical files.
pub fn write_results(out_dir: &Path, output: &EvalOutput) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut csv = String::from(
        "record_id,claim_id,prediction,gold,rounds_used,evidence_count,languages_used\n",
    );
    for row in &output.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            csv_field(&row.record_id),
            csv_field(&row.claim_id),
            row.prediction,
            row.gold,
            row.rounds_used,
            row.evidence_count,
            csv_field(&row.languages_used),
        );
    }
    std::fs::write(out_dir.join("results.csv"), csv)?;

    let summary = serde_json::json!({
        "n": output.metrics.n,
        "accuracy": output.metrics.accuracy,
        "macro_f1": output.metrics.macro_f1,
        "per_class_f1": output.metrics.per_class_f1,
        "confusion": output.metrics.confusion,
        "config_fingerprint": output.config_fingerprint,
    });
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    std::fs::write(
        out_dir.join("cost.json"),
        serde_json::to_string_pretty(&output.cost)?,
    )?;

    let trace_dir = out_dir.join("traces");
    std::fs::create_dir_all(&trace_dir)?;
    for (name, trace) in &output.traces {
        let file = trace_dir.join(format!("{}.jsonl", sanitize_file_name(name)));
        std::fs::write(file, trace.to_jsonl())?;
    }
    Ok(())
}

fn csv_field(raw: &str) -> String {
    if raw.contains([',', '"', '\n']) {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

pub fn sanitize_file_name(raw: &str) -> String {
    raw.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Sweepable hyperparameter axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    EvidenceK,
    Triggers,
    Iterations,
}

impl SweepAxis {
    pub fn from_name(name: &str) -> Option<SweepAxis> {
        match name {
            "evidence_k" => Some(SweepAxis::EvidenceK),
            "triggers" => Some(SweepAxis::Triggers),
            "iterations" => Some(SweepAxis::Iterations),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::EvidenceK => "evidence_k",
            SweepAxis::Triggers => "triggers",
            SweepAxis::Iterations => "iterations",
        }
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("bad sweep value {value:?} for axis {axis}: {message}")]
    BadValue {
        axis: &'static str,
        value: String,
        message: String,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Applies one sweep value onto a config copy.
pub fn apply_sweep_value(
    base: &PipelineConfig,
    axis: SweepAxis,
    value: &str,
) -> Result<PipelineConfig, SweepError> {
    let mut config = base.clone();
    match axis {
        SweepAxis::EvidenceK => {
            config.evidence_per_query =
                value.trim().parse().map_err(|e| SweepError::BadValue {
                    axis: axis.name(),
                    value: value.to_string(),
                    message: format!("{e}"),
                })?;
        }
        SweepAxis::Iterations => {
            config.max_iterations = value.trim().parse().map_err(|e| SweepError::BadValue {
                axis: axis.name(),
                value: value.to_string(),
                message: format!("{e}"),
            })?;
        }
        SweepAxis::Triggers => {
            let mut triggers = std::collections::BTreeSet::new();
            for part in value.split(',') {
                let part = part.trim();
                if part.is_empty() {
                    continue;
                }
                let label = parse_gold_label(part).ok_or_else(|| SweepError::BadValue {
                    axis: axis.name(),
                    value: value.to_string(),
                    message: format!("unknown label {part:?}"),
                })?;
                triggers.insert(label);
            }
            config.reflection_triggers = triggers;
        }
    }
    Ok(config)
}

/// One `run_eval` per value with the axis overridden; rows keep the given
/// value order, suitable for recreating the hyperparameter curves as data.
pub fn run_sweep(
    llm: &crate::provider::LlmHandle,
    search: &crate::search::SearchClient,
    base: &PipelineConfig,
    records: &[DatasetRecord],
    axis: SweepAxis,
    values: &[String],
    workers: usize,
) -> Result<Vec<(String, MetricsReport)>, SweepError> {
    let mut table = Vec::with_capacity(values.len());
    for value in values {
        let config = apply_sweep_value(base, axis, value)?;
        let ctx = LoopContext {
            llm,
            search,
            config: &config,
        };
        let output = run_eval(&ctx, records, workers)?;
        table.push((value.clone(), output.metrics));
    }
    Ok(table)
}

/// Writes the sweep table as CSV.
pub fn write_sweep_csv(
    path: &Path,
    axis: SweepAxis,
    table: &[(String, MetricsReport)],
) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut csv = format!("{},n,accuracy,macro_f1,f1_supported,f1_contradicted\n", axis.name());
    for (value, metrics) in table {
        let _ = writeln!(
            csv,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            csv_field(value),
            metrics.n,
            metrics.accuracy,
            metrics.macro_f1,
            metrics.per_class_f1[&Label::Supported],
            metrics.per_class_f1[&Label::Contradicted],
        );
    }
    std::fs::write(path, csv)
}
