//! Cross-lingual contribution analysis: mean pairwise cosine similarity
//! between expansion-language queries/evidence and everything else, per
//! dataset, computed from per-claim trace files with a pluggable embedder.

use std::path::PathBuf;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedderError {
    #[error("embedding failed: {0}")]
    Failed(String),
    #[error("cannot read trace {path}: {message}")]
    Trace { path: PathBuf, message: String },
}

/// Text-embedding interface; any multilingual sentence embedder plugs in.
pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedderError>;
}

/// Deterministic toy embedder: character trigrams hashed into a fixed-size
/// bag, L2-normalized. Good enough to exercise the report machinery without
/// model weights.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 64 }
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedderError> {
        Ok(texts
            .iter()
            .map(|text| {
                let mut vec = vec![0.0f32; self.dim];
                let chars: Vec<char> = text.to_lowercase().chars().collect();
                for window in chars.windows(3) {
                    let mut hash: u64 = 0xcbf29ce484222325;
                    for c in window {
                        hash ^= *c as u64;
                        hash = hash.wrapping_mul(0x100000001b3);
                    }
                    vec[(hash % self.dim as u64) as usize] += 1.0;
                }
                let norm = vec.iter().map(|x| x * x).sum::<f32>().sqrt();
                if norm > 0.0 {
                    for x in &mut vec {
                        *x /= norm;
                    }
                }
                vec
            })
            .collect())
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f32 = a.iter().map(|x| x * x).sum::<f32>().sqrt();
    let nb: f32 = b.iter().map(|x| x * x).sum::<f32>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)) as f64
    }
}

/// Mean cosine over the cross product of two embedding sets.
pub fn mean_cross_cosine(xs: &[Vec<f32>], ys: &[Vec<f32>]) -> Option<f64> {
    if xs.is_empty() || ys.is_empty() {
        return None;
    }
    let total: f64 = sum_pairs(xs, ys);
    Some(total / (xs.len() * ys.len()) as f64)
}

#[cfg(feature = "parallel")]
fn sum_pairs(xs: &[Vec<f32>], ys: &[Vec<f32>]) -> f64 {
    use rayon::prelude::*;
    xs.par_iter()
        .map(|x| ys.iter().map(|y| cosine(x, y)).sum::<f64>())
        .sum()
}

#[cfg(not(feature = "parallel"))]
fn sum_pairs(xs: &[Vec<f32>], ys: &[Vec<f32>]) -> f64 {
    xs.iter()
        .map(|x| ys.iter().map(|y| cosine(x, y)).sum::<f64>())
        .sum()
}

/// A per-claim trace file tagged with the dataset it came from.
#[derive(Debug, Clone)]
pub struct TraceRef {
    pub dataset: String,
    pub path: PathBuf,
}

/// Percentages to one decimal, as in the analysis table.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityRow {
    pub dataset: String,
    pub query_similarity: f64,
    pub evidence_similarity: f64,
}

#[derive(Debug, Default)]
struct Pools {
    xle_queries: Vec<String>,
    other_queries: Vec<String>,
    xle_snippets: Vec<String>,
    other_snippets: Vec<String>,
}

fn harvest_trace(path: &PathBuf, pools: &mut Pools) -> Result<(), EmbedderError> {
    let data = std::fs::read_to_string(path).map_err(|e| EmbedderError::Trace {
        path: path.clone(),
        message: e.to_string(),
    })?;
    for line in data.lines().filter(|l| !l.trim().is_empty()) {
        let step: Value = serde_json::from_str(line).map_err(|e| EmbedderError::Trace {
            path: path.clone(),
            message: format!("bad step line: {e}"),
        })?;
        let Some(detail) = step.get("detail") else {
            continue;
        };
        let source = detail
            .get("source_language")
            .and_then(Value::as_str)
            .unwrap_or("en");
        for query in detail
            .get("queries")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
        {
            let language = query.get("language").and_then(Value::as_str).unwrap_or(source);
            let is_xle = language != source;
            if let Some(text) = query.get("text").and_then(Value::as_str) {
                if is_xle {
                    pools.xle_queries.push(text.to_string());
                } else {
                    pools.other_queries.push(text.to_string());
                }
            }
            for item in query
                .get("items")
                .and_then(Value::as_array)
                .into_iter()
                .flatten()
            {
                if let Some(snippet) = item.get("snippet").and_then(Value::as_str) {
                    if is_xle {
                        pools.xle_snippets.push(snippet.to_string());
                    } else {
                        pools.other_snippets.push(snippet.to_string());
                    }
                }
            }
        }
    }
    Ok(())
}

/// Builds the per-dataset similarity table. Datasets whose traces contain no
/// expansion-language rounds are omitted from the table and listed in the
/// returned notes.
pub fn similarity_report(
    traces: &[TraceRef],
    embedder: &dyn Embedder,
) -> Result<(Vec<SimilarityRow>, Vec<String>), EmbedderError> {
    let mut datasets: Vec<String> = Vec::new();
    for t in traces {
        if !datasets.contains(&t.dataset) {
            datasets.push(t.dataset.clone());
        }
    }
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for dataset in datasets {
        let mut pools = Pools::default();
        for t in traces.iter().filter(|t| t.dataset == dataset) {
            harvest_trace(&t.path, &mut pools)?;
        }
        let query_sim = mean_cross_cosine(
            &embedder.embed(&pools.xle_queries)?,
            &embedder.embed(&pools.other_queries)?,
        );
        let evidence_sim = mean_cross_cosine(
            &embedder.embed(&pools.xle_snippets)?,
            &embedder.embed(&pools.other_snippets)?,
        );
        match (query_sim, evidence_sim) {
            (Some(q), Some(e)) => rows.push(SimilarityRow {
                dataset,
                query_similarity: round_percent(q),
                evidence_similarity: round_percent(e),
            }),
            _ => notes.push(format!(
                "{dataset}: no cross-lingual rounds in traces; row omitted"
            )),
        }
    }
    Ok((rows, notes))
}

fn round_percent(fraction: f64) -> f64 {
    (fraction * 1000.0).round() / 10.0
}
