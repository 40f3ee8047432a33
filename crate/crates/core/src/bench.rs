//! Latency and recall measurements over Gaussian mixture corpora.

use std::collections::HashSet;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::index::{
    build_index, IndexConfig, IndexKind, IvfParams, IvfPqParams, KMeansConfig, PageIndex,
    SearchParams,
};
use crate::metrics::percentile;
use crate::synthetic::{Mixture, MixtureSpec};
use crate::types::{Hit, MultiVecEmbedding, Scope};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Corpus sizes in token vectors (pages = size / tokens_per_page).
    pub sizes: Vec<usize>,
    pub kinds: Vec<IndexKind>,
    pub tokens_per_page: usize,
    pub dim: usize,
    pub clusters: usize,
    pub query_rows: usize,
    pub queries: usize,
    pub warmup: usize,
    pub k: usize,
    pub candidate_pages: Option<usize>,
    pub kmeans: KMeansConfig,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![10_000, 100_000, 1_000_000],
            kinds: vec![
                IndexKind::Flat,
                IndexKind::IvfFlat(IvfParams::default()),
                IndexKind::IvfPq(IvfPqParams::default()),
            ],
            tokens_per_page: 64,
            dim: 32,
            clusters: 64,
            query_rows: 16,
            queries: 20,
            warmup: 3,
            k: 10,
            candidate_pages: None,
            kmeans: KMeansConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryLatency {
    pub p50: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    /// Effective index configuration, defaults resolved.
    pub config: IndexConfig,
    #[serde(rename = "N")]
    pub pages: usize,
    pub tokens: usize,
    pub build_ms: f64,
    pub per_query_ms: QueryLatency,
    pub recall_at_k_vs_exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub bench: BenchConfig,
    pub results: Vec<BenchRecord>,
}

impl BenchReport {
    /// The record for `kind` (by name) at `tokens`, if measured.
    pub fn find(&self, kind: &str, tokens: usize) -> Option<&BenchRecord> {
        self.results
            .iter()
            .find(|r| r.config.kind.name() == kind && r.tokens == tokens)
    }
}

fn overlap(a: &[Hit], b: &[Hit]) -> f64 {
    let exact: HashSet<usize> = b.iter().map(|h| h.page.global_id).collect();
    if exact.is_empty() {
        return 1.0;
    }
    a.iter()
        .filter(|h| exact.contains(&h.page.global_id))
        .count() as f64
        / exact.len() as f64
}

/// Runs every (size, kind) pair. `on_record` sees each result once its
/// size has been measured.
pub fn run_bench(
    config: &BenchConfig,
    mut on_record: impl FnMut(&BenchRecord),
) -> Result<BenchReport> {
    let mut results = Vec::new();
    for (i, &size) in config.sizes.iter().enumerate() {
        let pages = (size / config.tokens_per_page).max(1);
        let spec = MixtureSpec {
            pages_per_doc: 100,
            ..MixtureSpec::new(
                pages,
                config.tokens_per_page,
                config.dim,
                config.clusters,
                config.seed + i as u64,
            )
        };
        let mixture = Mixture::new(spec);
        let (manifest, store) = mixture.corpus()?;
        let (manifest, store) = (Arc::new(manifest), Arc::new(store));
        let queries = mixture.queries(
            config.warmup + config.queries,
            config.query_rows,
            config.seed ^ 0xABCD,
        );
        let exact = build_index(manifest.clone(), store.clone(), &IndexConfig::flat())?;
        let truth: Vec<Vec<Hit>> = queries[config.warmup..]
            .iter()
            .map(|q| {
                exact.search_embedding(
                    q.view(),
                    config.k,
                    &Scope::OpenDomain,
                    &SearchParams::default(),
                )
            })
            .collect::<Result<_>>()?;

        let mut built = Vec::with_capacity(config.kinds.len());
        for kind in &config.kinds {
            let index_config = IndexConfig {
                kind: *kind,
                candidate_pages: config.candidate_pages,
                kmeans: config.kmeans.clone(),
            };
            let t = Instant::now();
            let index = build_index(manifest.clone(), store.clone(), &index_config)?;
            built.push((index, t.elapsed().as_secs_f64() * 1e3));
        }
        let indexes: Vec<&PageIndex> = built.iter().map(|(i, _)| i).collect();
        let measured = measure(&indexes, &queries, config, &truth)?;
        for ((index, build_ms), (latencies, recall)) in built.iter().zip(measured) {
            let record = BenchRecord {
                config: index.config().clone(),
                pages,
                tokens: store.token_count(),
                build_ms: *build_ms,
                per_query_ms: QueryLatency {
                    p50: percentile(&latencies, 50.0).unwrap_or(0.0),
                    p95: percentile(&latencies, 95.0).unwrap_or(0.0),
                },
                recall_at_k_vs_exact: recall,
            };
            on_record(&record);
            results.push(record);
        }
    }
    Ok(BenchReport {
        bench: config.clone(),
        results,
    })
}

/// Times every index on each query in turn, so drift in machine load is
/// shared across kinds rather than landing on whichever ran last.
fn measure(
    indexes: &[&PageIndex],
    queries: &[MultiVecEmbedding],
    config: &BenchConfig,
    truth: &[Vec<Hit>],
) -> Result<Vec<(Vec<f64>, f64)>> {
    let params = SearchParams::default();
    for q in &queries[..config.warmup] {
        for index in indexes {
            index.search_embedding(q.view(), config.k, &Scope::OpenDomain, &params)?;
        }
    }
    let mut out: Vec<(Vec<f64>, f64)> = indexes
        .iter()
        .map(|_| (Vec::with_capacity(config.queries), 0.0))
        .collect();
    for (q, exact) in queries[config.warmup..].iter().zip(truth) {
        for (index, (latencies, recall)) in indexes.iter().zip(&mut out) {
            let t = Instant::now();
            let hits = index.search_embedding(q.view(), config.k, &Scope::OpenDomain, &params)?;
            latencies.push(t.elapsed().as_secs_f64() * 1e3);
            *recall += overlap(&hits, exact);
        }
    }
    let n = truth.len().max(1) as f64;
    Ok(out.into_iter().map(|(l, r)| (l, r / n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_bench_runs_and_flat_is_exact() {
        let config = BenchConfig {
            sizes: vec![4096],
            tokens_per_page: 16,
            dim: 8,
            clusters: 4,
            queries: 3,
            warmup: 1,
            ..Default::default()
        };
        let report = run_bench(&config, |_| {}).unwrap();
        assert_eq!(report.results.len(), 3);
        let flat = report.find("flat", 4096).unwrap();
        assert_eq!(flat.recall_at_k_vs_exact, 1.0);
        assert_eq!(flat.pages, 256);
        let json = serde_json::to_value(flat).unwrap();
        assert!(json.get("N").is_some() && json["per_query_ms"].get("p50").is_some());
    }
}
