//! Exact search against IVF search with a few probe settings on a clustered
//! synthetic corpus. Prints recall against the exact top-k and mean latency.

use std::sync::Arc;
use std::time::Instant;

use pagelens::synthetic::{Mixture, MixtureSpec};
use pagelens::{build_index, IndexConfig, IvfParams, Scope, SearchParams};

fn main() -> pagelens::Result<()> {
    let mixture = Mixture::new(MixtureSpec::new(4000, 32, 48, 64, 3));
    let (manifest, store) = mixture.corpus()?;
    let (manifest, store) = (Arc::new(manifest), Arc::new(store));
    let queries = mixture.queries(40, 12, 99);
    let k = 10;

    let flat = build_index(manifest.clone(), store.clone(), &IndexConfig::flat())?;
    let t = Instant::now();
    let ivf = build_index(
        manifest,
        store,
        &IndexConfig::ivf_flat(IvfParams::default()),
    )?;
    let nlist = ivf.ivf().map_or(0, |i| i.nlist());
    println!(
        "{} tokens, nlist {nlist}, built in {:.0} ms",
        ivf.stored_vectors(),
        t.elapsed().as_secs_f64() * 1e3
    );

    let mut exact = Vec::new();
    let t = Instant::now();
    for q in &queries {
        exact.push(flat.search_embedding(
            q.view(),
            k,
            &Scope::OpenDomain,
            &SearchParams::default(),
        )?);
    }
    println!(
        "flat          {:7.3} ms/query",
        t.elapsed().as_secs_f64() * 1e3 / queries.len() as f64
    );

    for nprobe in [1, nlist / 16, nlist / 4, nlist] {
        let params = SearchParams {
            nprobe: Some(nprobe.max(1)),
            candidate_pages: None,
        };
        let t = Instant::now();
        let mut found = 0;
        for (q, truth) in queries.iter().zip(&exact) {
            let hits = ivf.search_embedding(q.view(), k, &Scope::OpenDomain, &params)?;
            found += hits
                .iter()
                .filter(|h| truth.iter().any(|e| e.page.global_id == h.page.global_id))
                .count();
        }
        let ms = t.elapsed().as_secs_f64() * 1e3 / queries.len() as f64;
        let recall = found as f64 / (k * queries.len()) as f64;
        println!(
            "ivf nprobe {:3} {ms:7.3} ms/query  recall@{k} {recall:.3}",
            nprobe.max(1)
        );
    }
    Ok(())
}
