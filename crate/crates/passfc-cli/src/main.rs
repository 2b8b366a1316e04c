//! `passfc` command line: check claims or responses, evaluate datasets,
//! sweep hyperparameters, and manage the record/replay cache.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{load_config, AppConfig, CACHE_DIR_VAR};
use passfc::eval::{
    load_dataset, run_eval, run_sweep, write_results, write_sweep_csv, DatasetKind, SweepAxis,
};
use passfc::model::{AtomicClaim, CheckRequest, Clock, FixedClock, SystemClock};
use passfc::provider::{
    CacheMode, CachedProvider, CallLedger, ChatProvider, LiveProvider, LlmHandle,
};
use passfc::search::{CachedSearch, HttpSearchBackend, SearchBackend, SearchClient};
use passfc::verify::{check_response, ClaimResult, ClaimTrace, LoopContext};

/// Exit status for configuration and usage problems.
const EXIT_CONFIG: u8 = 2;
/// Exit status for provider or transport failures.
const EXIT_TRANSPORT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "passfc",
    about = "Fact-check claims with temporally grounded, adaptive multilingual web search",
    version
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalArgs {
    /// Config file (TOML; keys mirror the pipeline configuration).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --override max_iterations=1 (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Cache mode for LLM and search calls (config key: cache_mode).
    #[arg(long, value_name = "off|record|replay", global = true)]
    cache: Option<CacheMode>,
    /// Cache directory (also settable via PASSFC_CACHE_DIR or the config file).
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Output directory for traces and result files (config key: output_dir).
    #[arg(long = "out", global = true)]
    out: Option<PathBuf>,
    /// Worker threads for record/claim batches.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Run cross-lingual expansion on every new search round.
    #[arg(long, global = true)]
    force_xle: bool,
    /// Source language tag (default "en").
    #[arg(long = "source-lang", global = true)]
    source_lang: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a single claim or a whole response file.
    Check(CheckArgs),
    /// Evaluate a normalized JSONL dataset and write result files.
    Eval(EvalArgs),
    /// Re-run an evaluation across values of one hyperparameter axis.
    Sweep(SweepArgs),
    /// Inspect or clear a record/replay cache directory.
    Cache(CacheArgs),
}

#[derive(Args)]
struct CheckArgs {
    /// The claim text to verify.
    #[arg(long, conflicts_with = "response_file")]
    claim: Option<String>,
    /// File whose contents are the response to decompose and verify.
    #[arg(long = "response")]
    response_file: Option<PathBuf>,
    /// Optional prompt/context for the response.
    #[arg(long, default_value = "")]
    prompt: String,
    /// Validation date (YYYY-MM-DD); defaults to today.
    #[arg(long)]
    date: Option<chrono::NaiveDate>,
    /// JSON file with pre-decomposed claims (array of strings); skips
    /// decomposition.
    #[arg(long = "claims-file")]
    claims_file: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Normalized JSONL dataset file.
    dataset: PathBuf,
    /// Dataset adapter to apply.
    #[arg(long, value_name = "factool_qa|felm_wk|factcheck_gpt|scifact_open|averitec_dev|xfact|custom")]
    format: String,
    /// Evaluate only the first N records.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Normalized JSONL dataset file.
    dataset: PathBuf,
    #[arg(long)]
    format: String,
    /// Axis to sweep.
    #[arg(long, value_name = "evidence_k|triggers|iterations")]
    axis: String,
    /// Values for the axis. Numeric axes accept comma lists ("5,10");
    /// for triggers each occurrence is one label set ("contradicted,inconclusive").
    #[arg(long = "values", required = true)]
    values: Vec<String>,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct CacheArgs {
    #[command(subcommand)]
    action: CacheAction,
}

#[derive(Subcommand)]
enum CacheAction {
    /// Print entry counts for a cache directory.
    Stats,
    /// Delete all entries in a cache directory.
    Clear {
        /// Required confirmation.
        #[arg(long)]
        yes: bool,
    },
}

/// Error wrapper carrying the intended exit status.
struct CliError {
    status: u8,
    source: anyhow::Error,
}

impl CliError {
    fn config(source: anyhow::Error) -> Self {
        Self {
            status: EXIT_CONFIG,
            source,
        }
    }

    fn transport(source: anyhow::Error) -> Self {
        Self {
            status: EXIT_TRANSPORT,
            source,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.source);
            ExitCode::from(e.status)
        }
    }
}

fn parse_overrides(raw: &[String]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for entry in raw {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| anyhow!("--override expects KEY=VALUE, got {entry:?}"))?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn resolve_config(global: &GlobalArgs) -> Result<AppConfig> {
    let overrides = parse_overrides(&global.overrides)?;
    let mut config = load_config(
        global.config.as_deref(),
        &overrides,
        std::env::var(CACHE_DIR_VAR).ok(),
    )?;
    // Dedicated flags sit at the top of the precedence chain.
    if let Some(mode) = global.cache {
        config.cache_mode = mode;
    }
    if let Some(dir) = &global.cache_dir {
        config.cache_dir = Some(dir.clone());
    }
    if let Some(out) = &global.out {
        config.output_dir = out.clone();
    }
    if let Some(parallelism) = global.parallelism {
        if parallelism == 0 {
            bail!("--parallelism must be >= 1");
        }
        config.parallelism = parallelism;
    }
    if global.force_xle {
        config.pipeline.force_xle = true;
    }
    if let Some(lang) = &global.source_lang {
        config.pipeline.source_language = lang.clone();
    }
    config.validate()?;
    Ok(config)
}

struct Runtime {
    llm: LlmHandle,
    search: SearchClient,
    config: AppConfig,
    out: PathBuf,
}

fn build_runtime(global: &GlobalArgs) -> CliResult<Runtime> {
    let config = resolve_config(global).map_err(CliError::config)?;
    let mode = config.cache_mode;
    let cache_dir = config.cache_dir.clone();
    if matches!(mode, CacheMode::Record | CacheMode::Replay) && cache_dir.is_none() {
        return Err(CliError::config(anyhow!(
            "cache mode {mode:?} needs a cache directory (--cache-dir, {CACHE_DIR_VAR}, or cache_dir in the config)"
        )));
    }
    if mode == CacheMode::Replay {
        let dir = cache_dir.as_ref().expect("checked above");
        if !dir.is_dir() {
            return Err(CliError::config(anyhow!(
                "replay mode requires an existing cache directory: {}",
                dir.display()
            )));
        }
    }

    let llm_backend: Arc<dyn ChatProvider> = match mode {
        CacheMode::Off => Arc::new(live_llm(&config)?),
        CacheMode::Record => Arc::new(CachedProvider::record(
            Arc::new(live_llm(&config)?),
            cache_dir.clone().expect("checked above"),
        )),
        CacheMode::Replay => Arc::new(CachedProvider::replay(
            cache_dir.clone().expect("checked above"),
        )),
    };
    let search_backend: Arc<dyn SearchBackend> = match mode {
        CacheMode::Off => Arc::new(live_search(&config)?),
        CacheMode::Record => Arc::new(CachedSearch::record(
            Arc::new(live_search(&config)?),
            cache_dir.clone().expect("checked above"),
        )),
        CacheMode::Replay => Arc::new(CachedSearch::replay(
            cache_dir.expect("checked above"),
            config.search.endpoint.clone(),
        )),
    };
    Ok(Runtime {
        llm: LlmHandle::new(llm_backend, CallLedger::new(), config.pipeline.llm_temperature),
        search: SearchClient::new(search_backend),
        out: config.output_dir.clone(),
        config,
    })
}

fn live_llm(config: &AppConfig) -> CliResult<LiveProvider> {
    LiveProvider::from_env(&config.llm.endpoint, &config.llm.model)
        .map_err(|e| CliError::config(anyhow!("live LLM backend: {e}")))
}

fn live_search(config: &AppConfig) -> CliResult<HttpSearchBackend> {
    HttpSearchBackend::from_env(&config.search.endpoint)
        .map_err(|e| CliError::config(anyhow!("live search backend: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Check(args) => cmd_check(&cli.global, args),
        Command::Eval(args) => cmd_eval(&cli.global, args),
        Command::Sweep(args) => cmd_sweep(&cli.global, args),
        Command::Cache(args) => cmd_cache(&cli.global, args),
    }
}

/// Provider and transport failures surface as exit 3 even though per-claim
/// runs never abort the batch; graceful degradations (an Inconclusive
/// verdict without a failure annotation) stay exit 0.
fn scan_failures(results: &[(ClaimResult, ClaimTrace)]) -> CliResult<()> {
    for (result, _) in results {
        if let Some(failure) = &result.failure {
            return Err(CliError::transport(anyhow!(
                "claim {} ({:?}): {}",
                result.claim.claim.id,
                failure.kind,
                failure.message
            )));
        }
    }
    Ok(())
}

fn write_traces(out: &Path, results: &[(ClaimResult, ClaimTrace)]) -> Result<Vec<PathBuf>> {
    let trace_dir = out.join("traces");
    std::fs::create_dir_all(&trace_dir)?;
    let mut paths = Vec::new();
    for (result, trace) in results {
        let path = trace_dir.join(format!(
            "{}.jsonl",
            passfc::eval::sanitize_file_name(&result.claim.claim.id)
        ));
        std::fs::write(&path, trace.to_jsonl())?;
        paths.push(path);
    }
    Ok(paths)
}

fn cmd_check(global: &GlobalArgs, args: &CheckArgs) -> CliResult<()> {
    let (response_text, single_claim) = match (&args.claim, &args.response_file) {
        (Some(claim), None) => {
            if claim.trim().is_empty() {
                return Err(CliError::config(anyhow!("--claim must be non-empty")));
            }
            (claim.clone(), true)
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading response file {}", path.display()))
                .map_err(CliError::config)?;
            if text.trim().is_empty() {
                return Err(CliError::config(anyhow!(
                    "response file {} is empty",
                    path.display()
                )));
            }
            (text, false)
        }
        _ => {
            return Err(CliError::config(anyhow!(
                "exactly one of --claim or --response is required"
            )))
        }
    };

    let runtime = build_runtime(global)?;
    let date = args.date.unwrap_or_else(resolve_today);
    let request = CheckRequest::new(args.prompt.clone(), response_text.clone(), date)
        .map_err(|e| CliError::config(anyhow!("{e}")))?
        .with_language(runtime.config.pipeline.source_language.clone());

    let provided_claims = if let Some(path) = &args.claims_file {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading claims file {}", path.display()))
            .map_err(CliError::config)?;
        let texts: Vec<String> = serde_json::from_str(&text)
            .with_context(|| format!("claims file {} must be a JSON array of strings", path.display()))
            .map_err(CliError::config)?;
        let mut claims = Vec::new();
        for (i, text) in texts.iter().enumerate() {
            claims.push(
                AtomicClaim::new(format!("c{}", i + 1), text.clone())
                    .map_err(|e| CliError::config(anyhow!("claims file entry {}: {e}", i + 1)))?,
            );
        }
        Some(claims)
    } else if single_claim {
        Some(vec![AtomicClaim::new("c1", response_text.clone())
            .map_err(|e| CliError::config(anyhow!("{e}")))?])
    } else {
        None
    };

    let mut config = runtime.config.pipeline.clone();
    // The validation date is also the evidence cutoff unless one is pinned.
    if config.cutoff_date.is_none() {
        config.cutoff_date = Some(date);
    }
    let ctx = LoopContext {
        llm: &runtime.llm,
        search: &runtime.search,
        config: &config,
    };
    let results = check_response(&ctx, &request, provided_claims, runtime.config.parallelism);

    let trace_paths = write_traces(&runtime.out, &results)
        .context("writing trace files")
        .map_err(CliError::config)?;
    for (result, _) in &results {
        let verdict = &result.final_verdict;
        println!(
            "claim {}: {} ({} round{})",
            result.claim.claim.id,
            verdict.label.as_str().to_uppercase(),
            result.rounds_used,
            if result.rounds_used == 1 { "" } else { "s" }
        );
        println!("  claim text: {}", result.claim.claim.text);
        println!("  period: {}", result.claim.period.render());
        println!("  reasoning: {}", verdict.reasoning);
        if let Some(error) = &verdict.error_note {
            println!("  error: {error}");
        }
        if let Some(correction) = &verdict.correction {
            println!("  correction: {correction}");
        }
        if !result.evidence_used.is_empty() {
            println!("  evidence:");
            for item in &result.evidence_used {
                println!("    - {}", item.url);
            }
        }
    }
    for path in trace_paths {
        println!("trace: {}", path.display());
    }
    scan_failures(&results)
}

fn resolve_today() -> chrono::NaiveDate {
    // Tests pin dates through --date; production uses the wall clock.
    if let Ok(fixed) = std::env::var("PASSFC_TODAY") {
        if let Ok(date) = fixed.parse() {
            return FixedClock(date).today();
        }
    }
    SystemClock.today()
}

fn dataset_kind(name: &str) -> CliResult<DatasetKind> {
    DatasetKind::from_name(name).ok_or_else(|| {
        CliError::config(anyhow!(
            "unknown dataset format {name:?}; expected one of factool_qa, felm_wk, factcheck_gpt, scifact_open, averitec_dev, xfact, custom"
        ))
    })
}

fn load_records(path: &Path, format: &str, limit: Option<usize>) -> CliResult<Vec<passfc::eval::DatasetRecord>> {
    let kind = dataset_kind(format)?;
    let mut records = load_dataset(path, kind).map_err(|e| CliError::config(anyhow!("{e}")))?;
    if let Some(limit) = limit {
        records.truncate(limit);
    }
    if records.is_empty() {
        return Err(CliError::config(anyhow!(
            "dataset {} has no records",
            path.display()
        )));
    }
    Ok(records)
}

fn cmd_eval(global: &GlobalArgs, args: &EvalArgs) -> CliResult<()> {
    // Dataset problems are cheaper to surface than provider wiring.
    let records = load_records(&args.dataset, &args.format, args.limit)?;
    let runtime = build_runtime(global)?;
    let ctx = LoopContext {
        llm: &runtime.llm,
        search: &runtime.search,
        config: &runtime.config.pipeline,
    };
    let output = run_eval(&ctx, &records, runtime.config.parallelism)
        .map_err(|e| CliError::transport(anyhow!("{e}")))?;
    write_results(&runtime.out, &output)
        .context("writing result files")
        .map_err(CliError::config)?;

    let metrics = &output.metrics;
    println!("n={}", metrics.n);
    println!("accuracy={:.3}", metrics.accuracy);
    println!("macro_f1={:.3}", metrics.macro_f1);
    for (label, f1) in &metrics.per_class_f1 {
        println!("f1_{label}={f1:.3}");
    }
    println!("confusion (rows=gold, cols=predicted, order=supported/contradicted/inconclusive):");
    for row in &metrics.confusion {
        println!("  {} {} {}", row[0], row[1], row[2]);
    }
    println!(
        "cost: prompt_tokens={} completion_tokens={} search_calls={}",
        output.cost.prompt_tokens, output.cost.completion_tokens, output.cost.search_calls
    );
    println!("results: {}", runtime.out.join("results.csv").display());
    println!("summary: {}", runtime.out.join("summary.json").display());
    println!("cost: {}", runtime.out.join("cost.json").display());
    Ok(())
}

fn cmd_sweep(global: &GlobalArgs, args: &SweepArgs) -> CliResult<()> {
    let axis = SweepAxis::from_name(&args.axis).ok_or_else(|| {
        CliError::config(anyhow!(
            "unknown sweep axis {:?}; expected evidence_k, triggers, or iterations",
            args.axis
        ))
    })?;
    let records = load_records(&args.dataset, &args.format, args.limit)?;
    let runtime = build_runtime(global)?;
    // Numeric axes accept comma lists inside one --values occurrence.
    let values: Vec<String> = if axis == SweepAxis::Triggers {
        args.values.clone()
    } else {
        args.values
            .iter()
            .flat_map(|v| v.split(','))
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect()
    };
    if values.is_empty() {
        return Err(CliError::config(anyhow!("--values produced no entries")));
    }
    let table = run_sweep(
        &runtime.llm,
        &runtime.search,
        &runtime.config.pipeline,
        &records,
        axis,
        &values,
        runtime.config.parallelism,
    )
    .map_err(|e| CliError::transport(anyhow!("{e}")))?;
    let path = runtime.out.join("sweep.csv");
    write_sweep_csv(&path, axis, &table)
        .context("writing sweep table")
        .map_err(CliError::config)?;
    println!("{:<28} {:>6} {:>10} {:>10}", axis.name(), "n", "accuracy", "macro_f1");
    for (value, metrics) in &table {
        println!(
            "{:<28} {:>6} {:>10.3} {:>10.3}",
            value, metrics.n, metrics.accuracy, metrics.macro_f1
        );
    }
    println!("sweep table: {}", path.display());
    Ok(())
}

fn cmd_cache(global: &GlobalArgs, args: &CacheArgs) -> CliResult<()> {
    let config = resolve_config(global).map_err(CliError::config)?;
    let dir = config
        .cache_dir
        .ok_or_else(|| CliError::config(anyhow!("cache commands need --cache-dir or {CACHE_DIR_VAR}")))?;
    match args.action {
        CacheAction::Stats => {
            let llm = count_files(&dir.join("llm"));
            let search = count_files(&dir.join("search"));
            println!("cache dir: {}", dir.display());
            println!("llm entries: {llm}");
            println!("search entries: {search}");
        }
        CacheAction::Clear { yes } => {
            if !yes {
                return Err(CliError::config(anyhow!(
                    "refusing to clear {} without --yes",
                    dir.display()
                )));
            }
            for sub in ["llm", "search"] {
                let path = dir.join(sub);
                if path.is_dir() {
                    std::fs::remove_dir_all(&path)
                        .with_context(|| format!("clearing {}", path.display()))
                        .map_err(CliError::config)?;
                }
            }
            println!("cleared cache under {}", dir.display());
        }
    }
    Ok(())
}

fn count_files(dir: &Path) -> usize {
    fn walk(dir: &Path, count: &mut usize) {
        if let Ok(entries) = std::fs::read_dir(dir) {
            for entry in entries.flatten() {
                let path = entry.path();
                if path.is_dir() {
                    walk(&path, count);
                } else {
                    *count += 1;
                }
            }
        }
    }
    let mut count = 0;
    walk(dir, &mut count);
    count
}
