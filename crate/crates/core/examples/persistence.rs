//! Saves a manifest, an embedding store and an IVF-PQ index, loads them back
//! and checks that searches agree. Also shows a corrupted store being caught.

use std::sync::Arc;

use pagelens::storage::{
    load_index, load_manifest, read_store, save_index, save_manifest, write_store,
};
use pagelens::synthetic::{Mixture, MixtureSpec};
use pagelens::{build_index, IndexConfig, IvfPqParams, Scope, SearchParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("pagelens-persist-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let mixture = Mixture::new(MixtureSpec::new(600, 16, 32, 24, 11));
    let (manifest, store) = mixture.corpus()?;

    let (mpath, spath, ipath) = (
        dir.join("manifest.json"),
        dir.join("store.m3e"),
        dir.join("corpus.idx"),
    );
    save_manifest(&mpath, &manifest)?;
    write_store(&spath, &store)?;
    let index = build_index(
        Arc::new(manifest),
        Arc::new(store),
        &IndexConfig::ivf_pq(IvfPqParams {
            nbits: 6,
            ..IvfPqParams::default()
        }),
    )?;
    save_index(&ipath, &index)?;
    for p in [&mpath, &spath, &ipath] {
        let len = std::fs::metadata(p).map(|m| m.len()).unwrap_or(0);
        println!(
            "{:<14} {len:>9} bytes",
            p.file_name().unwrap().to_string_lossy()
        );
    }

    let manifest = Arc::new(load_manifest(&mpath)?);
    let store = Arc::new(read_store(&spath)?);
    let loaded = load_index(&ipath, manifest, store)?;
    let q = &mixture.queries(1, 8, 1)[0];
    let params = SearchParams::default();
    let before = index.search_embedding(q.view(), 5, &Scope::OpenDomain, &params)?;
    let after = loaded.search_embedding(q.view(), 5, &Scope::OpenDomain, &params)?;
    println!(
        "reloaded {} index returns identical hits: {}",
        loaded.kind_name(),
        before == after
    );

    let mut bytes = std::fs::read(&spath)?;
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&spath, bytes)?;
    match read_store(&spath) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("flipped one bit: {e}"),
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
