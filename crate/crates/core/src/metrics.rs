//! Answer and retrieval metrics plus the aggregated evaluation report.
//!
//! Answer normalization follows the SQuAD evaluator: lowercase, drop ASCII
//! punctuation, drop the articles `a`/`an`/`the`, collapse whitespace.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::types::{Hit, Hops, Modality, PageLocator, PageRef};

pub const DEFAULT_ANLS_TAU: f64 = 0.5;

pub fn normalize_answer(s: &str) -> String {
    let lowered: String = s
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1.0 if the normalized prediction equals any normalized gold, else 0.0.
pub fn exact_match<S: AsRef<str>>(pred: &str, golds: &[S]) -> f64 {
    let p = normalize_answer(pred);
    if golds.iter().any(|g| normalize_answer(g.as_ref()) == p) {
        1.0
    } else {
        0.0
    }
}

fn f1_single(pred: &[&str], gold: &[&str]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut same = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t).filter(|c| **c > 0) {
            *c -= 1;
            same += 1;
        }
    }
    if same == 0 {
        return 0.0;
    }
    let p = same as f64 / pred.len() as f64;
    let r = same as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// Bag-of-tokens F1 over normalized strings, max over golds.
pub fn token_f1<S: AsRef<str>>(pred: &str, golds: &[S]) -> f64 {
    let p = normalize_answer(pred);
    let p: Vec<&str> = p.split_whitespace().collect();
    golds
        .iter()
        .map(|g| {
            let g = normalize_answer(g.as_ref());
            f1_single(&p, &g.split_whitespace().collect::<Vec<_>>())
        })
        .fold(0.0, f64::max)
}

/// Character-level edit distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    strsim::levenshtein(a, b)
}

/// Normalized Levenshtein similarity of lowercased, trimmed strings
/// (character-level). Two empty strings score 1.
pub fn nls(pred: &str, gold: &str) -> f64 {
    let a = pred.trim().to_lowercase();
    let b = gold.trim().to_lowercase();
    let len = a.chars().count().max(b.chars().count());
    if len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / len as f64
}

/// Max over golds of NLS, zeroed when below `tau`.
pub fn anls<S: AsRef<str>>(pred: &str, golds: &[S], tau: f64) -> f64 {
    golds
        .iter()
        .map(|g| nls(pred, g.as_ref()))
        .map(|s| if s >= tau { s } else { 0.0 })
        .fold(0.0, f64::max)
}

/// Fraction of distinct gold pages found among the first `k` hits.
pub fn recall_at_k(hits: &[PageRef], gold_pages: &[PageLocator], k: usize) -> f64 {
    let gold: HashSet<&PageLocator> = gold_pages.iter().collect();
    if gold.is_empty() {
        return 0.0;
    }
    let found: HashSet<PageLocator> = hits
        .iter()
        .take(k)
        .map(PageRef::locator)
        .filter(|l| gold.contains(l))
        .collect();
    found.len() as f64 / gold.len() as f64
}

/// Nearest-rank percentile: the smallest value with at least `p` percent of
/// the sample at or below it.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyStats {
    pub p50_ms: Option<f64>,
    pub p95_ms: Option<f64>,
    pub mean_ms: Option<f64>,
}

impl LatencyStats {
    pub fn from_samples(ms: &[f64]) -> Self {
        Self {
            p50_ms: percentile(ms, 50.0),
            p95_ms: percentile(ms, 95.0),
            mean_ms: (!ms.is_empty()).then(|| ms.iter().sum::<f64>() / ms.len() as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExampleLatency {
    pub embed_ms: f64,
    pub retrieval_ms: f64,
    pub generation_ms: f64,
    pub total_ms: f64,
}

/// Outcome of one example. Failed examples keep their error message and
/// are excluded from every mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub hops: Hops,
    pub modality: BTreeSet<Modality>,
    pub answer: Option<String>,
    pub gold_answers: Vec<String>,
    pub em: f64,
    pub f1: f64,
    pub anls: f64,
    pub hits: Vec<Hit>,
    pub pages_used: Vec<PageRef>,
    /// Present only when the example has gold pages.
    pub recall_at_k: BTreeMap<usize, f64>,
    pub error: Option<String>,
    pub latency: ExampleLatency,
}

impl ExampleRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Examples that completed.
    pub count: usize,
    pub failed: usize,
    pub em: f64,
    pub f1: f64,
    pub anls: f64,
    /// Completed examples that carry gold pages.
    pub recall_count: usize,
    pub recall_at_k: BTreeMap<usize, f64>,
    pub retrieval_latency: LatencyStats,
    pub total_latency: LatencyStats,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl Aggregate {
    pub fn from_records<'a>(
        records: impl IntoIterator<Item = &'a ExampleRecord>,
        ks: &[usize],
    ) -> Self {
        let all: Vec<&ExampleRecord> = records.into_iter().collect();
        let ok: Vec<&ExampleRecord> = all.iter().copied().filter(|r| !r.failed()).collect();
        let with_gold: Vec<&ExampleRecord> = ok
            .iter()
            .copied()
            .filter(|r| !r.recall_at_k.is_empty())
            .collect();
        let recall_at_k = ks
            .iter()
            .map(|&k| {
                (
                    k,
                    mean(
                        with_gold
                            .iter()
                            .map(|r| r.recall_at_k.get(&k).copied().unwrap_or(0.0)),
                    ),
                )
            })
            .collect();
        let retrieval: Vec<f64> = ok.iter().map(|r| r.latency.retrieval_ms).collect();
        let total: Vec<f64> = ok.iter().map(|r| r.latency.total_ms).collect();
        Self {
            count: ok.len(),
            failed: all.len() - ok.len(),
            em: mean(ok.iter().map(|r| r.em)),
            f1: mean(ok.iter().map(|r| r.f1)),
            anls: mean(ok.iter().map(|r| r.anls)),
            recall_count: with_gold.len(),
            recall_at_k,
            retrieval_latency: LatencyStats::from_samples(&retrieval),
            total_latency: LatencyStats::from_samples(&total),
        }
    }
}

fn hops_key(h: Hops) -> &'static str {
    match h {
        Hops::SingleHop => "single_hop",
        Hops::MultiHop => "multi_hop",
    }
}

fn modality_key(m: Modality) -> &'static str {
    match m {
        Modality::Text => "text",
        Modality::Table => "table",
        Modality::Image => "image",
        Modality::Chart => "chart",
        Modality::Layout => "layout",
    }
}

/// Aggregated evaluation. Records are sorted by example id, so assembly is
/// independent of completion order. An example tagged with several
/// modalities counts in each of their slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Effective configuration that produced the report.
    pub config: serde_json::Value,
    pub ks: Vec<usize>,
    pub total: usize,
    pub overall: Aggregate,
    pub by_hops: BTreeMap<String, Aggregate>,
    pub by_modality: BTreeMap<String, Aggregate>,
    pub examples: Vec<ExampleRecord>,
}

impl EvalReport {
    pub fn build(mut records: Vec<ExampleRecord>, ks: &[usize], config: serde_json::Value) -> Self {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        let mut ks = ks.to_vec();
        ks.sort_unstable();
        ks.dedup();
        let by_hops = [Hops::SingleHop, Hops::MultiHop]
            .into_iter()
            .map(|h| {
                (
                    hops_key(h).to_string(),
                    Aggregate::from_records(records.iter().filter(|r| r.hops == h), &ks),
                )
            })
            .collect();
        let by_modality = Modality::ALL
            .into_iter()
            .map(|m| {
                (
                    modality_key(m).to_string(),
                    Aggregate::from_records(
                        records.iter().filter(|r| r.modality.contains(&m)),
                        &ks,
                    ),
                )
            })
            .collect();
        Self {
            config,
            total: records.len(),
            overall: Aggregate::from_records(&records, &ks),
            by_hops,
            by_modality,
            examples: records,
            ks,
        }
    }

    /// Clears every wall-clock field, leaving only deterministic content.
    pub fn strip_latency(&mut self) {
        for r in &mut self.examples {
            r.latency = ExampleLatency::default();
        }
        let aggs = std::iter::once(&mut self.overall)
            .chain(self.by_hops.values_mut())
            .chain(self.by_modality.values_mut());
        for a in aggs {
            a.retrieval_latency = LatencyStats::default();
            a.total_latency = LatencyStats::default();
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Text table with modality, hop and overall columns; scores in percent.
    pub fn render_table(&self) -> String {
        let mut cols: Vec<(String, &Aggregate)> = Modality::ALL
            .iter()
            .map(|&m| (m.label().to_string(), &self.by_modality[modality_key(m)]))
            .collect();
        cols.push(("Single-hop".into(), &self.by_hops["single_hop"]));
        cols.push(("Multi-hop".into(), &self.by_hops["multi_hop"]));
        cols.push(("Overall".into(), &self.overall));

        let mut rows: Vec<(String, Vec<String>)> = Vec::new();
        let pct = |v: f64, n: usize| {
            if n == 0 {
                "-".to_string()
            } else {
                format!("{:.1}", 100.0 * v)
            }
        };
        rows.push((
            "EM".into(),
            cols.iter().map(|(_, a)| pct(a.em, a.count)).collect(),
        ));
        rows.push((
            "F1".into(),
            cols.iter().map(|(_, a)| pct(a.f1, a.count)).collect(),
        ));
        rows.push((
            "ANLS".into(),
            cols.iter().map(|(_, a)| pct(a.anls, a.count)).collect(),
        ));
        for &k in &self.ks {
            rows.push((
                format!("R@{k}"),
                cols.iter()
                    .map(|(_, a)| {
                        pct(
                            a.recall_at_k.get(&k).copied().unwrap_or(0.0),
                            a.recall_count,
                        )
                    })
                    .collect(),
            ));
        }
        rows.push((
            "n".into(),
            cols.iter().map(|(_, a)| a.count.to_string()).collect(),
        ));
        rows.push((
            "failed".into(),
            cols.iter().map(|(_, a)| a.failed.to_string()).collect(),
        ));

        let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
        let widths: Vec<usize> = cols
            .iter()
            .enumerate()
            .map(|(i, (name, _))| {
                rows.iter()
                    .map(|(_, v)| v[i].len())
                    .max()
                    .unwrap_or(0)
                    .max(name.len())
            })
            .collect();
        let mut out = String::new();
        let _ = write!(out, "{:label_w$}", "");
        for ((name, _), w) in cols.iter().zip(&widths) {
            let _ = write!(out, "  {name:>w$}");
        }
        out.push('\n');
        for (label, values) in &rows {
            let _ = write!(out, "{label:label_w$}");
            for (v, w) in values.iter().zip(&widths) {
                let _ = write!(out, "  {v:>w$}");
            }
            out.push('\n');
        }
        out
    }
}
