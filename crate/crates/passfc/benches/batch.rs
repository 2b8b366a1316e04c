//! Sequential vs data-parallel batch evaluation, and pairwise cosine
//! aggregation at both worker counts. Build with default features to get the
//! rayon path; `--no-default-features` benches the sequential fallback only.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use passfc::eval::{run_eval, DatasetKind, DatasetRecord, Embedder, HashEmbedder};
use passfc::model::{AtomicClaim, CheckRequest, Label, PipelineConfig};
use passfc::parallel::effective_workers;
use passfc::provider::testing::ProceduralProvider;
use passfc::provider::{CallLedger, LlmHandle};
use passfc::search::testing::ProceduralSearch;
use passfc::search::SearchClient;
use passfc::verify::LoopContext;

fn synthetic_records(n: usize) -> Vec<DatasetRecord> {
    (0..n)
        .map(|i| {
            let text = format!(
                "Synthetic claim number {i} about a public figure and a dated event in 2020."
            );
            DatasetRecord {
                id: format!("bench-{i}"),
                request: CheckRequest::new("", text.clone(), passfc::model::date(2021, 3, 1))
                    .unwrap(),
                provided_claims: Some(vec![AtomicClaim::new("c1", text).unwrap()]),
                gold_labels: vec![Label::Supported],
                dataset: DatasetKind::Custom,
            }
        })
        .collect()
}

fn bench_eval(c: &mut Criterion) {
    let records = synthetic_records(48);
    let config = PipelineConfig::default();
    let mut group = c.benchmark_group("run_eval");
    group.sample_size(10);
    let hardware = std::thread::available_parallelism().map_or(2, |n| n.get());
    for workers in [1usize, effective_workers(hardware)] {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &workers| {
            b.iter(|| {
                let llm = LlmHandle::new(
                    Arc::new(ProceduralProvider::new(17)),
                    CallLedger::new(),
                    0.01,
                );
                let search =
                    SearchClient::new(Arc::new(ProceduralSearch::new(17))).without_retry_delay();
                let ctx = LoopContext {
                    llm: &llm,
                    search: &search,
                    config: &config,
                };
                run_eval(&ctx, &records, workers).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_pairwise_cosine(c: &mut Criterion) {
    let embedder = HashEmbedder { dim: 64 };
    let texts: Vec<String> = (0..400)
        .map(|i| format!("snippet {i} about deaths, dates, reactors, and zones"))
        .collect();
    let vectors = embedder.embed(&texts).unwrap();
    let (xs, ys) = vectors.split_at(120);
    let mut group = c.benchmark_group("mean_cross_cosine");
    // Inline sequential baseline, independent of the crate feature.
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let total: f64 = xs
                .iter()
                .map(|x| {
                    ys.iter()
                        .map(|y| passfc::eval::similarity::cosine(x, y))
                        .sum::<f64>()
                })
                .sum();
            total / (xs.len() * ys.len()) as f64
        })
    });
    group.bench_function("default", |b| {
        b.iter(|| passfc::eval::similarity::mean_cross_cosine(xs, ys).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_eval, bench_pairwise_cosine);
criterion_main!(benches);
