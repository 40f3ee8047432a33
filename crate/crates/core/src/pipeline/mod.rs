//! The three stages (embed, retrieve, answer) and the benchmark loop over
//! them. Embedders and generators are pluggable trait objects.

mod embedder;
mod generator;
pub mod http;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use embedder::{
    words, Capabilities, EmbedderProvider, MockEmbedder, PageInput, ProviderIdentity,
};
pub use generator::{
    AnswerGenerator, EchoGenerator, FnGenerator, GenerationRequest, GeneratorIdentity,
    KeywordGenerator,
};
pub use http::{HttpEmbedder, HttpGenerator, HttpOptions};

use crate::error::{Error, Result};
use crate::index::{IndexConfig, PageIndex};
use crate::metrics::{self, EvalReport, ExampleLatency, ExampleRecord};
use crate::storage::EmbeddingStore;
use crate::types::{
    CorpusManifest, MultiVecEmbedding, PageRef, QAExample, Query, RetrievalResult, Scope,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainMode {
    #[default]
    OpenDomain,
    ClosedDomain,
}

/// Backoff delays between generator attempts on transport errors; one retry
/// per entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub backoff_ms: Vec<u64>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            backoff_ms: vec![1000, 4000],
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self { backoff_ms: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub index: IndexConfig,
    /// Retrieval depth K.
    pub k: usize,
    /// Pages handed to the generator, K' <= K.
    pub generator_pages: usize,
    pub mode: DomainMode,
    /// Extra depths at which page recall is reported.
    pub recall_ks: Vec<usize>,
    pub workers: usize,
    pub max_new_tokens: usize,
    pub retry: RetryPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            index: IndexConfig::default(),
            k: 4,
            generator_pages: 4,
            mode: DomainMode::OpenDomain,
            recall_ks: vec![1, 2, 4],
            workers: 1,
            max_new_tokens: 64,
            retry: RetryPolicy::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self, generator: &dyn AnswerGenerator) -> Result<()> {
        if self.k == 0 {
            return Err(Error::ZeroK);
        }
        let cap = self.k.min(generator.max_pages());
        if self.generator_pages == 0 || self.generator_pages > cap {
            return Err(Error::Config(format!(
                "generator_pages must be in 1..={cap} (k={}, generator max_pages={})",
                self.k,
                generator.max_pages()
            )));
        }
        if self.recall_ks.contains(&0) {
            return Err(Error::Config("recall_ks entries must be >= 1".into()));
        }
        Ok(())
    }

    /// Depth to retrieve so that every reported recall depth is covered.
    pub fn retrieval_depth(&self) -> usize {
        self.recall_ks
            .iter()
            .copied()
            .chain([self.k])
            .max()
            .unwrap_or(self.k)
    }
}

/// Runs `f` over `items` on up to `workers` threads; output order follows
/// input order.
pub(crate) fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let out: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *out[i].lock().unwrap() = Some(r);
            });
        }
    });
    out.into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

/// Embeddings gathered so far for a corpus, keyed by global id.
#[derive(Debug, Clone)]
pub struct PartialStore {
    provider_id: String,
    dim: usize,
    tokens_per_page: usize,
    pages: Vec<Option<MultiVecEmbedding>>,
}

impl PartialStore {
    pub fn new(manifest: &CorpusManifest, provider_id: impl Into<String>) -> Self {
        Self {
            provider_id: provider_id.into(),
            dim: manifest.dim,
            tokens_per_page: manifest.tokens_per_page,
            pages: vec![None; manifest.page_count()],
        }
    }

    /// Seeds from a finished store. Pages are reused only if the store's
    /// provider, shape and page count match.
    pub fn resume(manifest: &CorpusManifest, provider_id: &str, store: &EmbeddingStore) -> Self {
        let mut partial = Self::new(manifest, provider_id);
        let compatible = store.provider_id() == provider_id
            && store.dim() == manifest.dim
            && store.tokens_per_page() == manifest.tokens_per_page
            && store.page_count() == manifest.page_count();
        if compatible {
            for (gid, slot) in partial.pages.iter_mut().enumerate() {
                *slot = Some(store.page(gid).to_owned());
            }
        }
        partial
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn missing(&self) -> usize {
        self.pages.iter().filter(|p| p.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing() == 0
    }

    pub fn into_store(self) -> Result<EmbeddingStore> {
        let missing = self.missing();
        if missing > 0 {
            return Err(Error::IncompleteStore {
                missing,
                total: self.pages.len(),
            });
        }
        let mut data = Vec::with_capacity(self.pages.len() * self.tokens_per_page * self.dim);
        for page in self.pages.into_iter().flatten() {
            data.extend_from_slice(page.data());
        }
        EmbeddingStore::new(self.dim, self.tokens_per_page, self.provider_id, data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PageFailure {
    pub page: PageRef,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedSummary {
    pub provider_id: String,
    pub total_pages: usize,
    pub embedded: usize,
    pub skipped: usize,
    pub failures: Vec<PageFailure>,
}

/// Embeds every page not yet present in `partial`. Per-page failures are
/// collected and the run continues. Fails up front if the provider's shape
/// disagrees with the manifest or if `partial` belongs to another provider.
pub fn embed_corpus(
    manifest: &CorpusManifest,
    provider: &dyn EmbedderProvider,
    partial: &mut PartialStore,
    workers: usize,
) -> Result<EmbedSummary> {
    let caps = provider.capabilities();
    if caps.dim != manifest.dim {
        return Err(Error::DimMismatch {
            expected: manifest.dim,
            found: caps.dim,
        });
    }
    if caps.tokens_per_page != manifest.tokens_per_page {
        return Err(Error::TokenCountMismatch {
            expected: manifest.tokens_per_page,
            found: caps.tokens_per_page,
        });
    }
    let provider_id = provider.identity().to_string();
    if partial.provider_id != provider_id || partial.pages.len() != manifest.page_count() {
        return Err(Error::CorpusMismatch(format!(
            "partial store belongs to `{}`, provider is `{provider_id}`",
            partial.provider_id
        )));
    }
    let todo: Vec<PageInput> = manifest
        .pages()
        .filter(|p| partial.pages[p.page.global_id].is_none())
        .map(|p| PageInput {
            page: p.page,
            image_path: p.image_path,
        })
        .collect();
    let skipped = manifest.page_count() - todo.len();
    let results = parallel_map(&todo, workers, |input| {
        provider.embed_page(input).and_then(|e| {
            embedder::check_shape(&e, caps, Some(caps.tokens_per_page))?;
            Ok(e)
        })
    });
    let mut failures = Vec::new();
    let mut embedded = 0;
    for (input, result) in todo.into_iter().zip(results) {
        match result {
            Ok(e) => {
                partial.pages[input.page.global_id] = Some(e);
                embedded += 1;
            }
            Err(e) => failures.push(PageFailure {
                page: input.page,
                error: e.to_string(),
            }),
        }
    }
    Ok(EmbedSummary {
        provider_id,
        total_pages: manifest.page_count(),
        embedded,
        skipped,
        failures,
    })
}

/// Top-`config.k` pages for `query` within its scope.
pub fn retrieve(
    query: &Query,
    index: &PageIndex,
    config: &PipelineConfig,
) -> Result<RetrievalResult> {
    index.search(query, config.k)
}

/// What the generator saw and how long it took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerTrace {
    pub pages_used: Vec<PageRef>,
    pub scores: Vec<f32>,
    pub generator: GeneratorIdentity,
    pub latency_ms: f64,
    pub attempts: usize,
}

/// Passes the top `generator_pages` hits, in rank order, and the question
/// to the generator. Transport errors are retried per `config.retry`; the
/// answer is returned verbatim.
pub fn answer(
    query: &Query,
    hits: &RetrievalResult,
    index: &PageIndex,
    generator: &dyn AnswerGenerator,
    config: &PipelineConfig,
) -> Result<(String, AnswerTrace)> {
    if hits.is_empty() {
        return Err(Error::Config(
            "answer needs at least one retrieved page".into(),
        ));
    }
    let used = &hits.hits[..config.generator_pages.min(hits.len())];
    let pages = used
        .iter()
        .map(|h| PageInput {
            page: h.page.clone(),
            image_path: index
                .manifest()
                .image_path(h.page.global_id)
                .cloned()
                .unwrap_or_default(),
        })
        .collect();
    let request = GenerationRequest {
        question: query.text.clone(),
        pages,
        max_new_tokens: config.max_new_tokens,
    };
    let mut trace = AnswerTrace {
        pages_used: used.iter().map(|h| h.page.clone()).collect(),
        scores: used.iter().map(|h| h.score).collect(),
        generator: generator.identity(),
        latency_ms: 0.0,
        attempts: 0,
    };
    let start = Instant::now();
    let mut backoff = config.retry.backoff_ms.iter();
    loop {
        trace.attempts += 1;
        match generator.generate(&request) {
            Ok(answer) => {
                trace.latency_ms = ms(start.elapsed());
                return Ok((answer, trace));
            }
            Err(Error::Transport(msg)) => match backoff.next() {
                Some(&delay) => std::thread::sleep(Duration::from_millis(delay)),
                None => {
                    trace.latency_ms = ms(start.elapsed());
                    return Err(Error::Generation {
                        attempts: trace.attempts,
                        message: msg,
                        trace: Box::new(trace),
                    });
                }
            },
            Err(other) => {
                trace.latency_ms = ms(start.elapsed());
                return Err(Error::Generation {
                    attempts: trace.attempts,
                    message: other.to_string(),
                    trace: Box::new(trace),
                });
            }
        }
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// A built index plus the providers that run against it.
pub struct Pipeline<'a> {
    pub index: &'a PageIndex,
    pub embedder: &'a dyn EmbedderProvider,
    pub generator: &'a dyn AnswerGenerator,
    pub config: PipelineConfig,
}

impl Pipeline<'_> {
    fn scope_for(&self, ex: &QAExample) -> Result<Scope> {
        match self.config.mode {
            DomainMode::OpenDomain => Ok(Scope::OpenDomain),
            DomainMode::ClosedDomain => {
                ex.closed_domain_doc()
                    .map(Scope::ClosedDomain)
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "example `{}` has no target document for a closed-domain run",
                            ex.id
                        ))
                    })
            }
        }
    }

    /// Embeds the question, retrieves, and answers one example.
    pub fn run_example(&self, ex: &QAExample) -> ExampleRecord {
        let mut rec = ExampleRecord {
            id: ex.id.clone(),
            hops: ex.hops,
            modality: ex.modality.clone(),
            answer: None,
            gold_answers: ex.gold_answers.clone(),
            em: 0.0,
            f1: 0.0,
            anls: 0.0,
            hits: vec![],
            pages_used: vec![],
            recall_at_k: Default::default(),
            error: None,
            latency: ExampleLatency::default(),
        };
        if let Err(e) = self.fill(ex, &mut rec) {
            rec.error = Some(e.to_string());
            if let Error::Generation { trace, .. } = e {
                rec.pages_used = trace.pages_used;
            }
        }
        rec
    }

    fn fill(&self, ex: &QAExample, rec: &mut ExampleRecord) -> Result<()> {
        ex.validate()?;
        let start = Instant::now();
        let embedding = self.embedder.embed_query(&ex.question)?;
        rec.latency.embed_ms = ms(start.elapsed());
        let query = Query {
            id: ex.id.clone(),
            text: ex.question.clone(),
            embedding,
            scope: self.scope_for(ex)?,
        };

        let t = Instant::now();
        let depth = self.config.retrieval_depth();
        let deep = self.index.search(&query, depth)?;
        rec.latency.retrieval_ms = ms(t.elapsed());
        if let Some(gold) = &ex.gold_pages {
            let pages: Vec<PageRef> = deep.pages().cloned().collect();
            rec.recall_at_k = self
                .config
                .recall_ks
                .iter()
                .chain([&self.config.k])
                .map(|&k| (k, metrics::recall_at_k(&pages, gold, k)))
                .collect();
        }
        let hits = RetrievalResult {
            query_id: deep.query_id,
            hits: deep.hits.into_iter().take(self.config.k).collect(),
        };
        rec.hits = hits.hits.clone();

        let (answer, trace) = answer(&query, &hits, self.index, self.generator, &self.config)?;
        rec.latency.generation_ms = trace.latency_ms;
        rec.latency.total_ms = ms(start.elapsed());
        rec.pages_used = trace.pages_used;
        rec.em = metrics::exact_match(&answer, &ex.gold_answers);
        rec.f1 = metrics::token_f1(&answer, &ex.gold_answers);
        rec.anls = metrics::anls(&answer, &ex.gold_answers, metrics::DEFAULT_ANLS_TAU);
        rec.answer = Some(answer);
        Ok(())
    }
}

/// Runs every example (up to `config.workers` at a time) and aggregates.
/// Individual failures are recorded in the report.
pub fn run_benchmark(examples: &[QAExample], pipeline: &Pipeline<'_>) -> Result<EvalReport> {
    pipeline.config.validate(pipeline.generator)?;
    let records = parallel_map(examples, pipeline.config.workers, |ex| {
        pipeline.run_example(ex)
    });
    let mut ks = pipeline.config.recall_ks.clone();
    ks.push(pipeline.config.k);
    let config = serde_json::json!({
        "pipeline": pipeline.config,
        "index": pipeline.index.config(),
        "embedder": pipeline.embedder.identity().to_string(),
        "generator": pipeline.generator.identity().to_string(),
    });
    Ok(EvalReport::build(records, &ks, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::build_index;
    use crate::types::{flatten_corpus, Hops};
    use std::path::PathBuf;
    use std::sync::Arc;

    struct Fixture {
        _dir: tempfile::TempDir,
        manifest: Arc<CorpusManifest>,
    }

    fn fixture(texts: &[(&str, &[&str])], dim: usize, tpp: usize) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let layout = flatten_corpus(texts.iter().map(|(d, p)| (*d, p.len()))).unwrap();
        let mut paths = Vec::new();
        for (doc, pages) in texts {
            for (i, text) in pages.iter().enumerate() {
                let img = dir.path().join(format!("{doc}_{i}.png"));
                std::fs::write(&img, b"png").unwrap();
                std::fs::write(img.with_extension("txt"), text).unwrap();
                paths.push(img);
            }
        }
        let manifest = CorpusManifest::new("t", dim, tpp, (1224, 1584), layout, paths).unwrap();
        Fixture {
            _dir: dir,
            manifest: Arc::new(manifest),
        }
    }

    fn embed_all(manifest: &CorpusManifest, e: &MockEmbedder) -> EmbeddingStore {
        let mut partial = PartialStore::new(manifest, e.identity().to_string());
        let s = embed_corpus(manifest, e, &mut partial, 2).unwrap();
        assert!(s.failures.is_empty());
        partial.into_store().unwrap()
    }

    #[test]
    fn embed_three_pages_then_rerun_is_noop() {
        let f = fixture(&[("a", &["one", "two"]), ("b", &["three"])], 8, 4);
        let e = MockEmbedder::new(8, 4, 0);
        let store = embed_all(&f.manifest, &e);
        assert_eq!(store.page_count(), 3);
        let mut again = PartialStore::resume(&f.manifest, &e.identity().to_string(), &store);
        let s = embed_corpus(&f.manifest, &e, &mut again, 1).unwrap();
        assert_eq!((s.embedded, s.skipped), (0, 3));
        assert_eq!(again.into_store().unwrap().checksum(), store.checksum());
    }

    #[test]
    fn provider_shape_mismatch_fails_before_work() {
        let f = fixture(&[("a", &["one"])], 8, 4);
        let e = MockEmbedder::new(16, 4, 0);
        let mut partial = PartialStore::new(&f.manifest, e.identity().to_string());
        assert!(matches!(
            embed_corpus(&f.manifest, &e, &mut partial, 1),
            Err(Error::DimMismatch {
                expected: 8,
                found: 16
            })
        ));
        assert_eq!(partial.missing(), 1);
    }

    #[test]
    fn unreadable_page_is_reported_and_run_continues() {
        let f = fixture(&[("a", &["one", "two"])], 8, 4);
        let mut m = (*f.manifest).clone();
        m.image_paths_mut()[0] = PathBuf::from("/nonexistent/x.png");
        let e = MockEmbedder::new(8, 4, 0);
        let mut partial = PartialStore::new(&m, e.identity().to_string());
        let s = embed_corpus(&m, &e, &mut partial, 1).unwrap();
        assert_eq!((s.embedded, s.failures.len()), (1, 1));
        assert!(matches!(
            partial.into_store(),
            Err(Error::IncompleteStore {
                missing: 1,
                total: 2
            })
        ));
    }

    fn query(e: &MockEmbedder, text: &str, scope: Scope) -> Query {
        Query {
            id: "q".into(),
            text: text.into(),
            embedding: e.embed_query(text).unwrap(),
            scope,
        }
    }

    #[test]
    fn answer_truncates_and_traces() {
        let f = fixture(&[("a", &["red apple", "green pear"])], 8, 4);
        let e = MockEmbedder::new(8, 4, 0);
        let index = build_index(
            f.manifest.clone(),
            Arc::new(embed_all(&f.manifest, &e)),
            &IndexConfig::flat(),
        )
        .unwrap();
        let config = PipelineConfig {
            k: 4,
            generator_pages: 4,
            ..Default::default()
        };
        let q = query(&e, "red apple", Scope::OpenDomain);
        let hits = retrieve(&q, &index, &config).unwrap();
        assert_eq!(hits.len(), 2);
        let (ans, trace) = answer(&q, &hits, &index, &EchoGenerator, &config).unwrap();
        assert_eq!(ans, "red apple");
        assert_eq!(trace.pages_used.len(), 2);
        assert_eq!(trace.pages_used[0].page_index, 0);
        assert_eq!(trace.attempts, 1);
    }

    #[test]
    fn transport_errors_are_retried_then_surface_with_trace() {
        let f = fixture(&[("a", &["x"])], 8, 4);
        let e = MockEmbedder::new(8, 4, 0);
        let index = build_index(
            f.manifest.clone(),
            Arc::new(embed_all(&f.manifest, &e)),
            &IndexConfig::flat(),
        )
        .unwrap();
        let config = PipelineConfig {
            k: 1,
            generator_pages: 1,
            retry: RetryPolicy {
                backoff_ms: vec![0, 0],
            },
            ..Default::default()
        };
        let q = query(&e, "x", Scope::OpenDomain);
        let hits = retrieve(&q, &index, &config).unwrap();

        let calls = AtomicUsize::new(0);
        let flaky = FnGenerator::new("flaky", 4, |_| {
            if calls.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(Error::Transport("down".into()))
            } else {
                Ok("I cannot answer".into())
            }
        });
        let (ans, trace) = answer(&q, &hits, &index, &flaky, &config).unwrap();
        assert_eq!((ans.as_str(), trace.attempts), ("I cannot answer", 3));

        let dead = FnGenerator::new("dead", 4, |_| Err(Error::Transport("down".into())));
        match answer(&q, &hits, &index, &dead, &config) {
            Err(Error::Generation {
                attempts: 3, trace, ..
            }) => assert_eq!(trace.pages_used.len(), 1),
            other => panic!("{other:?}"),
        }
        let refused = AtomicUsize::new(0);
        let proto = FnGenerator::new("proto", 4, |_| {
            refused.fetch_add(1, Ordering::SeqCst);
            Err(Error::Protocol("400".into()))
        });
        assert!(answer(&q, &hits, &index, &proto, &config).is_err());
        assert_eq!(refused.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn benchmark_with_gold_stub_is_perfect() {
        let f = fixture(&[("a", &["alpha", "beta"])], 8, 4);
        let e = MockEmbedder::new(8, 4, 0);
        let index = build_index(
            f.manifest.clone(),
            Arc::new(embed_all(&f.manifest, &e)),
            &IndexConfig::flat(),
        )
        .unwrap();
        let gold = FnGenerator::new("gold", 4, |_| Ok("The Answer".into()));
        let pipeline = Pipeline {
            index: &index,
            embedder: &e,
            generator: &gold,
            config: PipelineConfig::default(),
        };
        let ex = QAExample {
            id: "1".into(),
            question: "beta?".into(),
            gold_answers: vec!["answer".into()],
            hops: Hops::SingleHop,
            modality: Default::default(),
            gold_pages: None,
            doc_id: None,
        };
        let report = run_benchmark(&[ex], &pipeline).unwrap();
        assert_eq!((report.overall.em, report.overall.f1), (1.0, 1.0));

        let empty = run_benchmark(&[], &pipeline).unwrap();
        assert_eq!(empty.total, 0);
    }

    #[test]
    fn config_validation() {
        let c = PipelineConfig {
            k: 2,
            generator_pages: 3,
            ..Default::default()
        };
        assert!(c.validate(&EchoGenerator).is_err());
        let c = PipelineConfig {
            k: 8,
            generator_pages: 5,
            ..Default::default()
        };
        assert!(c.validate(&KeywordGenerator::default()).is_err());
        assert!(PipelineConfig::default()
            .validate(&KeywordGenerator::default())
            .is_ok());
    }

    #[test]
    fn parallel_map_keeps_order() {
        let v: Vec<usize> = (0..100).collect();
        assert_eq!(
            parallel_map(&v, 4, |x| x * 2),
            v.iter().map(|x| x * 2).collect::<Vec<_>>()
        );
    }
}
