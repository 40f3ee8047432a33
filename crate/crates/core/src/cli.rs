//! The `pagelens` command line: ingest, embed, index, search, eval, bench,
//! plus `planted` to generate a synthetic corpus.
//!
//! Settings come from a TOML file (`--config` or `M3_CONFIG`) and are
//! overridden by flags. JSON results go to stdout, logs to stderr, and every
//! result echoes the effective configuration. Exit codes: 0 success,
//! 2 usage or validation error, 3 runtime failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{run_bench, BenchConfig};
use crate::error::{Error, Result};
use crate::index::{
    build_index, IndexConfig, IndexKind, IvfParams, IvfPqParams, PageIndex, SearchParams,
};
use crate::pipeline::{
    embed_corpus, run_benchmark, AnswerGenerator, Capabilities, DomainMode, EchoGenerator,
    EmbedderProvider, HttpEmbedder, HttpGenerator, HttpOptions, KeywordGenerator, MockEmbedder,
    PartialStore, Pipeline, PipelineConfig, RetryPolicy,
};
use crate::storage::{
    load_index, load_manifest, read_examples, read_store, save_index, save_manifest, write_store,
};
use crate::synthetic::{write_planted_corpus, PlantedSpec};
use crate::types::{CorpusManifest, Query, Scope};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Configuration shared by all subcommands. Relative paths in a config file
/// are resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub manifest: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub index_path: Option<PathBuf>,
    pub examples: Option<PathBuf>,
    pub index: IndexConfig,
    pub k: usize,
    pub generator_pages: Option<usize>,
    pub mode: DomainMode,
    /// `mock` or `http:URL`.
    pub embedder: String,
    /// `stub` (keyword), `echo` or `http:URL`.
    pub generator: String,
    pub generator_max_pages: usize,
    pub http: HttpOptions,
    pub retry: RetryPolicy,
    pub workers: usize,
    pub seed: u64,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            store: None,
            index_path: None,
            examples: None,
            index: IndexConfig::default(),
            k: 4,
            generator_pages: None,
            mode: DomainMode::OpenDomain,
            embedder: "mock".into(),
            generator: "stub".into(),
            generator_max_pages: 4,
            http: HttpOptions::default(),
            retry: RetryPolicy::default(),
            workers: 1,
            seed: 0,
        }
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut cfg: CliConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.manifest,
            &mut cfg.store,
            &mut cfg.index_path,
            &mut cfg.examples,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "pagelens",
    version,
    about = "Multi-vector page retrieval and document QA harness"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "M3_CONFIG")]
    pub config: Option<PathBuf>,
    /// Suppress progress logs on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a manifest and summarize the corpus.
    Ingest(IngestArgs),
    /// Embed every page into an embedding store.
    Embed(EmbedArgs),
    /// Build an index over an embedding store.
    Index(IndexArgs),
    /// Retrieve the top-k pages for a text query.
    Search(SearchArgs),
    /// Run the QA benchmark over an example set.
    Eval(EvalArgs),
    /// Measure latency and recall of each index kind on synthetic data.
    Bench(BenchArgs),
    /// Write a planted-answer synthetic corpus.
    Planted(PlantedArgs),
}

#[derive(Debug, Args, Default)]
pub struct CorpusArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Warn about missing page images instead of failing.
    #[arg(long)]
    pub allow_missing: bool,
    /// Write the validated manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// `mock` or `http:URL`.
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Flat,
    Ivfflat,
    Ivfpq,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Output index file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long)]
    pub nlist: Option<usize>,
    #[arg(long)]
    pub nprobe: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub nbits: Option<u8>,
    #[arg(long)]
    pub candidate_pages: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Index file; a flat index is built in memory when absent.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub query: String,
    #[arg(long)]
    pub k: Option<usize>,
    /// Restrict the search to one document.
    #[arg(long)]
    pub doc: Option<String>,
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub nprobe: Option<usize>,
    #[arg(long)]
    pub candidate_pages: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Open,
    Closed,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub examples: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub generator_pages: Option<usize>,
    /// `stub`, `echo` or `http:URL`.
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Omit wall-clock fields so output is byte-stable.
    #[arg(long)]
    pub no_timings: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Corpus sizes in token vectors, e.g. `1e4,1e5,1e6`.
    #[arg(long, value_delimiter = ',', value_parser = parse_size)]
    pub sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', value_enum)]
    pub kinds: Option<Vec<KindArg>>,
    #[arg(long)]
    pub queries: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub tokens_per_page: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PlantedArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = PlantedSpec::default().docs)]
    pub docs: usize,
    #[arg(long, default_value_t = PlantedSpec::default().pages_per_doc)]
    pub pages_per_doc: usize,
    #[arg(long, default_value_t = PlantedSpec::default().questions)]
    pub questions: usize,
    #[arg(long, default_value_t = PlantedSpec::default().dim)]
    pub dim: usize,
    #[arg(long, default_value_t = PlantedSpec::default().tokens_per_page)]
    pub tokens_per_page: usize,
    #[arg(long, default_value_t = PlantedSpec::default().seed)]
    pub seed: u64,
}

fn parse_size(s: &str) -> std::result::Result<usize, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
    if !(v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64) {
        return Err(format!("`{s}` is not a positive whole number"));
    }
    Ok(v as usize)
}

/// Maps an error to the exit code contract.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::DimMismatch { .. }
        | Error::TokenCountMismatch { .. }
        | Error::InvalidEmbedding(_)
        | Error::DuplicateDocument(_)
        | Error::UnknownDocument(_)
        | Error::InvalidManifest(_)
        | Error::Config(_)
        | Error::ZeroK
        | Error::NotEnoughTrainingData { .. } => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

struct Ctx {
    config: CliConfig,
    quiet: bool,
}

impl Ctx {
    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("pagelens: {}", msg.as_ref());
        }
    }

    fn require(&self, value: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        value.clone().ok_or_else(|| {
            Error::Config(format!(
                "no {what} path: pass --{what} or set it in the config file"
            ))
        })
    }

    fn manifest(&self) -> Result<CorpusManifest> {
        load_manifest(&self.require(&self.config.manifest, "manifest")?)
    }

    fn embedder(&self, manifest: &CorpusManifest) -> Result<Box<dyn EmbedderProvider>> {
        let spec = self.config.embedder.as_str();
        if spec == "mock" {
            return Ok(Box::new(MockEmbedder::new(
                manifest.dim,
                manifest.tokens_per_page,
                self.config.seed,
            )));
        }
        if let Some(url) = spec.strip_prefix("http:") {
            let caps = Capabilities {
                dim: manifest.dim,
                tokens_per_page: manifest.tokens_per_page,
            };
            return Ok(Box::new(HttpEmbedder::new(url, caps, self.config.http)));
        }
        Err(Error::Config(format!(
            "unknown provider `{spec}` (expected mock or http:URL)"
        )))
    }

    fn generator(&self) -> Result<Box<dyn AnswerGenerator>> {
        let spec = self.config.generator.as_str();
        let max_pages = self.config.generator_max_pages;
        match spec {
            "stub" | "keyword" => Ok(Box::new(KeywordGenerator { max_pages })),
            "echo" => Ok(Box::new(EchoGenerator)),
            _ => match spec.strip_prefix("http:") {
                Some(url) => Ok(Box::new(HttpGenerator::new(
                    url,
                    max_pages,
                    self.config.http,
                ))),
                None => Err(Error::Config(format!(
                    "unknown generator `{spec}` (expected stub, echo or http:URL)"
                ))),
            },
        }
    }

    /// Loads the manifest, store and index (or an in-memory flat index).
    fn open_index(&self) -> Result<PageIndex> {
        let manifest = Arc::new(self.manifest()?);
        let store = Arc::new(read_store(&self.require(&self.config.store, "store")?)?);
        match &self.config.index_path {
            Some(path) => {
                let index = load_index(path, manifest, store)?;
                self.log(format!(
                    "loaded {} index from {}",
                    index.kind_name(),
                    path.display()
                ));
                Ok(index)
            }
            None => build_index(manifest, store, &IndexConfig::flat()),
        }
    }

    fn check_provider(&self, index: &PageIndex, embedder: &dyn EmbedderProvider) -> Result<()> {
        let id = embedder.identity().to_string();
        if index.store().provider_id() != id {
            return Err(Error::Config(format!(
                "store was embedded by `{}` but queries would use `{id}`",
                index.store().provider_id()
            )));
        }
        Ok(())
    }
}

fn emit(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json"));
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: &Option<PathBuf>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn run() -> i32 {
    match Cli::try_parse() {
        Ok(cli) => run_cli(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn run_cli(cli: Cli) -> i32 {
    let config = match &cli.config {
        Some(path) => match CliConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("pagelens: error: {e}");
                return EXIT_USAGE;
            }
        },
        None => CliConfig::default(),
    };
    let mut ctx = Ctx {
        config,
        quiet: cli.quiet,
    };
    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(&mut ctx, a),
        Command::Embed(a) => cmd_embed(&mut ctx, a),
        Command::Index(a) => cmd_index(&mut ctx, a),
        Command::Search(a) => cmd_search(&mut ctx, a),
        Command::Eval(a) => cmd_eval(&mut ctx, a),
        Command::Bench(a) => cmd_bench(&mut ctx, a),
        Command::Planted(a) => cmd_planted(&mut ctx, a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("pagelens: error: {e}");
            exit_code(&e)
        }
    }
}

fn cmd_ingest(ctx: &mut Ctx, a: IngestArgs) -> Result<i32> {
    set_path(&mut ctx.config.manifest, &a.manifest);
    let manifest = ctx.manifest()?;
    let missing: Vec<String> = manifest
        .pages()
        .filter(|p| !p.image_path.is_file())
        .map(|p| {
            format!(
                "{}#{}: {}",
                p.page.doc,
                p.page.page_index,
                p.image_path.display()
            )
        })
        .collect();
    for m in &missing {
        eprintln!("pagelens: warning: missing page image {m}");
    }
    let documents: BTreeMap<String, usize> = manifest
        .layout()
        .documents()
        .iter()
        .map(|d| (d.doc.to_string(), d.page_count))
        .collect();
    let summary = format!(
        "{} docs, N={} pages",
        documents.len(),
        manifest.page_count()
    );
    ctx.log(&summary);
    if let Some(out) = &a.out {
        save_manifest(out, &manifest)?;
    }
    let payload =
        manifest.page_count() as u64 * manifest.tokens_per_page as u64 * manifest.dim as u64 * 4;
    emit(&serde_json::json!({
        "config": ctx.config,
        "summary": summary,
        "corpus_id": manifest.corpus_id,
        "documents": documents,
        "pages": manifest.page_count(),
        "store_skeleton": {
            "dim": manifest.dim,
            "tokens_per_page": manifest.tokens_per_page,
            "page_count": manifest.page_count(),
            "payload_bytes": payload,
        },
        "missing_images": missing,
    }));
    if !missing.is_empty() && !a.allow_missing {
        eprintln!(
            "pagelens: error: {} page images missing (pass --allow-missing to continue)",
            missing.len()
        );
        return Ok(EXIT_USAGE);
    }
    Ok(EXIT_OK)
}

fn cmd_embed(ctx: &mut Ctx, a: EmbedArgs) -> Result<i32> {
    set_path(&mut ctx.config.manifest, &a.corpus.manifest);
    set_path(&mut ctx.config.store, &a.corpus.store);
    set(&mut ctx.config.embedder, a.provider);
    set(&mut ctx.config.workers, a.workers);
    set(&mut ctx.config.seed, a.seed);
    let manifest = ctx.manifest()?;
    let store_path = ctx.require(&ctx.config.store, "store")?;
    let provider = ctx.embedder(&manifest)?;
    let id = provider.identity().to_string();
    let mut partial = if store_path.exists() {
        let existing = read_store(&store_path)?;
        PartialStore::resume(&manifest, &id, &existing)
    } else {
        PartialStore::new(&manifest, id)
    };
    let summary = embed_corpus(
        &manifest,
        provider.as_ref(),
        &mut partial,
        ctx.config.workers,
    )?;
    ctx.log(format!(
        "embedded {} pages, skipped {}, {} failures",
        summary.embedded,
        summary.skipped,
        summary.failures.len()
    ));
    let complete = partial.is_complete();
    let mut checksum = None;
    if complete {
        let store = partial.into_store()?;
        if summary.embedded > 0 || !store_path.exists() {
            write_store(&store_path, &store)?;
        }
        checksum = Some(format!("{:016x}", store.checksum()));
    }
    emit(&serde_json::json!({
        "config": ctx.config,
        "summary": summary,
        "store": store_path,
        "complete": complete,
        "checksum": checksum,
    }));
    Ok(if complete { EXIT_OK } else { EXIT_RUNTIME })
}

fn cmd_index(ctx: &mut Ctx, a: IndexArgs) -> Result<i32> {
    set_path(&mut ctx.config.manifest, &a.corpus.manifest);
    set_path(&mut ctx.config.store, &a.corpus.store);
    set_path(&mut ctx.config.index_path, &a.out);
    let cfg = &mut ctx.config.index;
    if let Some(kind) = a.kind {
        cfg.kind = match kind {
            KindArg::Flat => IndexKind::Flat,
            KindArg::Ivfflat => IndexKind::IvfFlat(IvfParams::default()),
            KindArg::Ivfpq => IndexKind::IvfPq(IvfPqParams::default()),
        };
    }
    match &mut cfg.kind {
        IndexKind::Flat => {
            if a.nlist.is_some() || a.nprobe.is_some() || a.m.is_some() || a.nbits.is_some() {
                return Err(Error::Config(
                    "--nlist/--nprobe/--m/--nbits need an IVF index kind".into(),
                ));
            }
        }
        IndexKind::IvfFlat(p) => {
            if a.m.is_some() || a.nbits.is_some() {
                return Err(Error::Config("--m/--nbits need --kind ivfpq".into()));
            }
            p.nlist = a.nlist.or(p.nlist);
            p.nprobe = a.nprobe.or(p.nprobe);
        }
        IndexKind::IvfPq(p) => {
            p.nlist = a.nlist.or(p.nlist);
            p.nprobe = a.nprobe.or(p.nprobe);
            p.m = a.m.or(p.m);
            set(&mut p.nbits, a.nbits);
        }
    }
    cfg.candidate_pages = a.candidate_pages.or(cfg.candidate_pages);
    set(&mut cfg.kmeans.seed, a.seed);
    let out = ctx.require(&ctx.config.index_path, "out")?;
    let manifest = Arc::new(ctx.manifest()?);
    let store = Arc::new(read_store(&ctx.require(&ctx.config.store, "store")?)?);
    let start = std::time::Instant::now();
    let index = build_index(manifest, store, &ctx.config.index)?;
    ctx.log(format!(
        "built {} index in {:.1} ms",
        index.kind_name(),
        start.elapsed().as_secs_f64() * 1e3
    ));
    save_index(&out, &index)?;
    emit(&serde_json::json!({
        "config": ctx.config,
        "index": out,
        "kind": index.kind_name(),
        "resolved": index.config(),
        "stored_vectors": index.stored_vectors(),
    }));
    Ok(EXIT_OK)
}

fn cmd_search(ctx: &mut Ctx, a: SearchArgs) -> Result<i32> {
    set_path(&mut ctx.config.manifest, &a.corpus.manifest);
    set_path(&mut ctx.config.store, &a.corpus.store);
    set_path(&mut ctx.config.index_path, &a.index);
    set(&mut ctx.config.embedder, a.provider);
    set(&mut ctx.config.k, a.k);
    set(&mut ctx.config.seed, a.seed);
    let index = ctx.open_index()?;
    let embedder = ctx.embedder(index.manifest())?;
    ctx.check_provider(&index, embedder.as_ref())?;
    let scope = match a.doc {
        Some(doc) => Scope::ClosedDomain(crate::types::DocumentId::new(doc)?),
        None => Scope::OpenDomain,
    };
    let query = Query {
        id: "cli".into(),
        text: a.query.clone(),
        embedding: embedder.embed_query(&a.query)?,
        scope,
    };
    let params = SearchParams {
        nprobe: a.nprobe,
        candidate_pages: a.candidate_pages,
    };
    let hits =
        index.search_embedding(query.embedding.view(), ctx.config.k, &query.scope, &params)?;
    let ranked: Vec<serde_json::Value> = hits
        .iter()
        .enumerate()
        .map(|(rank, h)| {
            serde_json::json!({
                "rank": rank + 1,
                "doc": h.page.doc,
                "page_index": h.page.page_index,
                "global_id": h.page.global_id,
                "score": h.score,
            })
        })
        .collect();
    emit(&serde_json::json!({
        "config": ctx.config,
        "index_kind": index.kind_name(),
        "query": a.query,
        "scope": query.scope,
        "hits": ranked,
    }));
    Ok(EXIT_OK)
}

fn cmd_eval(ctx: &mut Ctx, a: EvalArgs) -> Result<i32> {
    set_path(&mut ctx.config.manifest, &a.corpus.manifest);
    set_path(&mut ctx.config.store, &a.corpus.store);
    set_path(&mut ctx.config.index_path, &a.index);
    set_path(&mut ctx.config.examples, &a.examples);
    set(&mut ctx.config.k, a.k);
    ctx.config.generator_pages = a.generator_pages.or(ctx.config.generator_pages);
    set(&mut ctx.config.generator, a.generator);
    set(&mut ctx.config.embedder, a.provider);
    set(&mut ctx.config.workers, a.workers);
    set(&mut ctx.config.seed, a.seed);
    if let Some(mode) = a.mode {
        ctx.config.mode = match mode {
            ModeArg::Open => DomainMode::OpenDomain,
            ModeArg::Closed => DomainMode::ClosedDomain,
        };
    }
    let examples = read_examples(&ctx.require(&ctx.config.examples, "examples")?)?;
    let index = ctx.open_index()?;
    let embedder = ctx.embedder(index.manifest())?;
    ctx.check_provider(&index, embedder.as_ref())?;
    let generator = ctx.generator()?;
    let k = ctx.config.k;
    let config = PipelineConfig {
        index: index.config().clone(),
        k,
        generator_pages: ctx
            .config
            .generator_pages
            .unwrap_or_else(|| k.min(generator.max_pages())),
        mode: ctx.config.mode,
        recall_ks: [1, 2, 4].into_iter().filter(|&x| x <= k).collect(),
        workers: ctx.config.workers,
        retry: ctx.config.retry.clone(),
        ..PipelineConfig::default()
    };
    let pipeline = Pipeline {
        index: &index,
        embedder: embedder.as_ref(),
        generator: generator.as_ref(),
        config,
    };
    ctx.log(format!("evaluating {} examples", examples.len()));
    let mut report = run_benchmark(&examples, &pipeline)?;
    if a.no_timings {
        report.strip_latency();
    }
    if let serde_json::Value::Object(map) = &mut report.config {
        map.insert("cli".into(), serde_json::to_value(&ctx.config)?);
    }
    if !ctx.quiet {
        eprint!("{}", report.render_table());
    }
    println!("{}", report.to_json());
    Ok(EXIT_OK)
}

fn cmd_bench(ctx: &mut Ctx, a: BenchArgs) -> Result<i32> {
    let mut config = BenchConfig {
        kmeans: ctx.config.index.kmeans.clone(),
        ..BenchConfig::default()
    };
    set(&mut config.sizes, a.sizes);
    if let Some(kinds) = a.kinds {
        config.kinds = kinds
            .into_iter()
            .map(|k| match k {
                KindArg::Flat => IndexKind::Flat,
                KindArg::Ivfflat => IndexKind::IvfFlat(IvfParams::default()),
                KindArg::Ivfpq => IndexKind::IvfPq(IvfPqParams::default()),
            })
            .collect();
    }
    set(&mut config.queries, a.queries);
    set(&mut config.dim, a.dim);
    set(&mut config.tokens_per_page, a.tokens_per_page);
    set(&mut config.k, a.k);
    set(&mut config.seed, a.seed);
    if config.tokens_per_page == 0 || config.dim == 0 || config.queries == 0 || config.k == 0 {
        return Err(Error::Config(
            "dim, tokens_per_page, queries and k must be positive".into(),
        ));
    }
    let quiet = ctx.quiet;
    let report = run_bench(&config, |r| {
        if !quiet {
            eprintln!(
                "pagelens: {:>8} tokens  {:<8} build {:>9.1} ms  p50 {:>8.3} ms  p95 {:>8.3} ms  recall {:.3}",
                r.tokens,
                r.config.kind.name(),
                r.build_ms,
                r.per_query_ms.p50,
                r.per_query_ms.p95,
                r.recall_at_k_vs_exact
            );
        }
    })?;
    emit(
        &serde_json::json!({ "config": ctx.config, "bench": report.bench, "results": report.results }),
    );
    Ok(EXIT_OK)
}

fn cmd_planted(ctx: &mut Ctx, a: PlantedArgs) -> Result<i32> {
    let spec = PlantedSpec {
        docs: a.docs,
        pages_per_doc: a.pages_per_doc,
        questions: a.questions,
        dim: a.dim,
        tokens_per_page: a.tokens_per_page,
        seed: a.seed,
    };
    if spec.docs == 0 || spec.pages_per_doc == 0 || spec.dim == 0 || spec.tokens_per_page == 0 {
        return Err(Error::Config(
            "docs, pages-per-doc, dim and tokens-per-page must be positive".into(),
        ));
    }
    let corpus = write_planted_corpus(&a.out, &spec)?;
    ctx.log(format!(
        "wrote {} pages and {} questions to {}",
        corpus.manifest.page_count(),
        corpus.examples.len(),
        a.out.display()
    ));
    emit(&serde_json::json!({
        "config": ctx.config,
        "spec": spec,
        "manifest": corpus.manifest_path,
        "examples": corpus.examples_path,
    }));
    Ok(EXIT_OK)
}
