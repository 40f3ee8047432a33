//! Build time, query latency, memory and recall for each index kind at two
//! corpus sizes, using the benchmark harness.

use pagelens::bench::{run_bench, BenchConfig};

fn main() -> pagelens::Result<()> {
    let config = BenchConfig {
        sizes: vec![20_000, 200_000],
        queries: 15,
        ..BenchConfig::default()
    };
    println!(
        "{:>8} {:>8} {:>10} {:>9} {:>9} {:>8}",
        "tokens", "kind", "build ms", "p50 ms", "p95 ms", "recall"
    );
    run_bench(&config, |r| {
        println!(
            "{:>8} {:>8} {:>10.1} {:>9.3} {:>9.3} {:>8.3}",
            r.tokens,
            r.config.kind.name(),
            r.build_ms,
            r.per_query_ms.p50,
            r.per_query_ms.p95,
            r.recall_at_k_vs_exact
        );
    })?;
    Ok(())
}
