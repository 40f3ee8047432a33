//! The whole question-answering loop on a generated corpus: write pages with
//! planted facts, embed them with the mock embedder, index, retrieve and
//! answer with the keyword stub, then score the answers.

use std::sync::Arc;

use pagelens::pipeline::{
    embed_corpus, run_benchmark, EmbedderProvider, KeywordGenerator, MockEmbedder, PartialStore,
    Pipeline, PipelineConfig, RetryPolicy,
};
use pagelens::synthetic::{write_planted_corpus, PlantedSpec};
use pagelens::{build_index, IndexConfig, IvfParams};

fn main() -> pagelens::Result<()> {
    let dir = std::env::temp_dir().join(format!("pagelens-planted-{}", std::process::id()));
    let spec = PlantedSpec {
        docs: 20,
        questions: 30,
        ..PlantedSpec::default()
    };
    let planted = write_planted_corpus(&dir, &spec)?;
    println!(
        "wrote {} pages and {} questions under {}",
        planted.manifest.page_count(),
        planted.examples.len(),
        dir.display()
    );

    let embedder = MockEmbedder::new(spec.dim, spec.tokens_per_page, 0);
    let mut partial = PartialStore::new(&planted.manifest, embedder.identity().to_string());
    let summary = embed_corpus(&planted.manifest, &embedder, &mut partial, 4)?;
    println!(
        "embedded {} pages with {}",
        summary.embedded, summary.provider_id
    );

    let manifest = Arc::new(planted.manifest.clone());
    let store = Arc::new(partial.into_store()?);
    let index = build_index(
        manifest,
        store,
        &IndexConfig::ivf_flat(IvfParams::default()),
    )?;
    let generator = KeywordGenerator::default();
    let config = PipelineConfig {
        k: 4,
        recall_ks: vec![1, 4],
        retry: RetryPolicy::none(),
        ..PipelineConfig::default()
    };
    let pipeline = Pipeline {
        index: &index,
        embedder: &embedder,
        generator: &generator,
        config,
    };

    let first = &planted.examples[0];
    let record = pipeline.run_example(first);
    println!(
        "\nQ: {}\nA: {}\ngold: {:?}",
        first.question,
        record.answer.as_deref().unwrap_or(""),
        first.gold_answers
    );

    let report = run_benchmark(&planted.examples, &pipeline)?;
    println!("\n{}", report.render_table());
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
