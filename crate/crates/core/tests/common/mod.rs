//! Independent oracles and corpus builders shared by integration tests.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use pagelens::storage::EmbeddingStore;
use pagelens::{flatten_corpus, CorpusManifest, DocumentId};
use rand::Rng;

/// Random corpus with values in [-1, 1). When `dup` is set, some pages are
/// copies of earlier ones so the tie rule is exercised.
pub fn random_corpus<R: Rng>(
    rng: &mut R,
    pages: usize,
    n_v: usize,
    dim: usize,
    dup: bool,
) -> (Arc<CorpusManifest>, Arc<EmbeddingStore>) {
    let mut docs = Vec::new();
    let mut left = pages;
    while left > 0 {
        let n = rng.gen_range(1..=left.min(12));
        docs.push((DocumentId::new(format!("d{}", docs.len())).unwrap(), n));
        left -= n;
    }
    let layout = flatten_corpus(docs).unwrap();
    let manifest = CorpusManifest::new(
        "rand",
        dim,
        n_v,
        (1224, 1584),
        layout,
        vec![PathBuf::new(); pages],
    )
    .unwrap();
    let block = n_v * dim;
    let mut data: Vec<f32> = (0..pages * block)
        .map(|_| rng.gen_range(-1.0f32..1.0))
        .collect();
    if dup && pages > 1 {
        for _ in 0..rng.gen_range(1..=pages.min(8)) {
            let (src, dst) = (rng.gen_range(0..pages), rng.gen_range(0..pages));
            let copy = data[src * block..(src + 1) * block].to_vec();
            data[dst * block..(dst + 1) * block].copy_from_slice(&copy);
        }
    }
    (
        Arc::new(manifest),
        Arc::new(EmbeddingStore::new(dim, n_v, "rand", data).unwrap()),
    )
}

pub fn random_rows<R: Rng>(rng: &mut R, rows: usize, dim: usize) -> Vec<f32> {
    (0..rows * dim)
        .map(|_| rng.gen_range(-1.0f32..1.0))
        .collect()
}

/// MaxSim straight from the definition: f32, coordinates ascending inside a
/// dot product, query rows ascending in the outer sum.
pub fn maxsim_f32(q: &[f32], page: &[f32], dim: usize) -> f32 {
    let mut total = 0.0f32;
    for qi in q.chunks(dim) {
        let mut best = f32::NEG_INFINITY;
        for pj in page.chunks(dim) {
            let mut s = 0.0f32;
            for c in 0..dim {
                s += qi[c] * pj[c];
            }
            if s > best {
                best = s;
            }
        }
        total += best;
    }
    total
}

/// MaxSim in f64 for tolerance checks.
pub fn maxsim_f64(q: &[f32], page: &[f32], dim: usize) -> f64 {
    q.chunks(dim)
        .map(|qi| {
            page.chunks(dim)
                .map(|pj| {
                    qi.iter()
                        .zip(pj)
                        .map(|(a, b)| *a as f64 * *b as f64)
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}

/// Full sort: score descending, lower id first on equal scores.
pub fn top_k(mut scored: Vec<(usize, f32)>, k: usize) -> Vec<(usize, f32)> {
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

/// Textbook Wagner-Fischer edit distance over chars.
#[allow(clippy::needless_range_loop)]
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            d[i][j] = (d[i - 1][j] + 1)
                .min(d[i][j - 1] + 1)
                .min(d[i - 1][j - 1] + sub);
        }
    }
    d[a.len()][b.len()]
}

#[derive(serde::Deserialize)]
pub struct MetricCase {
    pub pred: String,
    pub golds: Vec<String>,
    pub em: f64,
    pub f1: f64,
    pub anls: f64,
}

pub fn metric_cases() -> Vec<MetricCase> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/metric_cases.json"
    );
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}
