//! Page indices: exact flat search plus IVFFlat and IVFPQ.
//!
//! All three keep the full page embeddings for exact scoring. The IVF kinds
//! index token vectors individually and search in two phases:
//!
//! 1. candidate generation: each query row probes its `nprobe` best coarse
//!    lists; per page, each row's best token hit is kept and the row bests
//!    are summed (a row with no hit on a page adds 0). The top
//!    `candidate_pages` pages survive.
//! 2. rerank: survivors are scored with exact MaxSim and cut to `k`.
//!
//! With `nprobe == nlist` and `candidate_pages >= N` every page is reranked
//! exactly, so the result equals flat search.

pub mod ivf;
pub mod kmeans;
pub mod pq;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{maxsim_unchecked, top_k_ids};
use crate::storage::EmbeddingStore;
use crate::types::{CorpusManifest, Hit, MultiVecRef, Query, RetrievalResult, Scope};

pub use ivf::{InvertedList, IvfIndex, TokenEntry};
pub use kmeans::{kmeans_train, KMeansConfig};
pub use pq::{adc_score, PqCodebook};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct IvfParams {
    /// Defaults to `ceil(sqrt(N * n_v))`.
    pub nlist: Option<usize>,
    /// Defaults to `ceil(nlist / 16)`.
    pub nprobe: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IvfPqParams {
    pub nlist: Option<usize>,
    pub nprobe: Option<usize>,
    /// Sub-quantizers; defaults to `dim / 4`.
    pub m: Option<usize>,
    pub nbits: u8,
}

impl Default for IvfPqParams {
    fn default() -> Self {
        Self {
            nlist: None,
            nprobe: None,
            m: None,
            nbits: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexKind {
    Flat,
    #[serde(rename = "ivfflat")]
    IvfFlat(IvfParams),
    #[serde(rename = "ivfpq")]
    IvfPq(IvfPqParams),
}

impl IndexKind {
    pub fn name(&self) -> &'static str {
        match self {
            IndexKind::Flat => "flat",
            IndexKind::IvfFlat(_) => "ivfflat",
            IndexKind::IvfPq(_) => "ivfpq",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    #[serde(flatten)]
    pub kind: IndexKind,
    /// Pages kept for exact rerank; defaults to `max(100, 10 * k)`.
    pub candidate_pages: Option<usize>,
    pub kmeans: KMeansConfig,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            kind: IndexKind::Flat,
            candidate_pages: None,
            kmeans: KMeansConfig::default(),
        }
    }
}

impl IndexConfig {
    pub fn flat() -> Self {
        Self::default()
    }

    pub fn ivf_flat(params: IvfParams) -> Self {
        Self {
            kind: IndexKind::IvfFlat(params),
            ..Self::default()
        }
    }

    pub fn ivf_pq(params: IvfPqParams) -> Self {
        Self {
            kind: IndexKind::IvfPq(params),
            ..Self::default()
        }
    }
}

pub fn default_nlist(token_count: usize) -> usize {
    ((token_count as f64).sqrt().ceil() as usize).max(1)
}

pub fn default_nprobe(nlist: usize) -> usize {
    nlist.div_ceil(16).max(1)
}

pub fn default_candidate_pages(k: usize) -> usize {
    (10 * k).max(100)
}

fn resolve_ivf(
    nlist: Option<usize>,
    nprobe: Option<usize>,
    token_count: usize,
) -> Result<(usize, usize)> {
    let nlist = nlist.unwrap_or_else(|| default_nlist(token_count));
    let nprobe = nprobe.unwrap_or_else(|| default_nprobe(nlist));
    if nlist == 0 || nprobe == 0 || nprobe > nlist {
        return Err(Error::Config(format!(
            "need 1 <= nprobe <= nlist, got nprobe={nprobe}, nlist={nlist}"
        )));
    }
    if nlist > token_count {
        return Err(Error::NotEnoughTrainingData {
            needed: nlist,
            available: token_count,
        });
    }
    Ok((nlist, nprobe))
}

/// Search-time overrides.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchParams {
    pub nprobe: Option<usize>,
    pub candidate_pages: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Structure {
    Flat,
    Ivf(IvfIndex),
}

/// A searchable corpus. Immutable once built; safe to share across threads.
#[derive(Debug, Clone)]
pub struct PageIndex {
    pub(crate) manifest: Arc<CorpusManifest>,
    pub(crate) store: Arc<EmbeddingStore>,
    pub(crate) config: IndexConfig,
    pub(crate) structure: Structure,
}

pub(crate) fn check_corpus(manifest: &CorpusManifest, store: &EmbeddingStore) -> Result<()> {
    if store.dim() != manifest.dim {
        return Err(Error::DimMismatch {
            expected: manifest.dim,
            found: store.dim(),
        });
    }
    if store.tokens_per_page() != manifest.tokens_per_page {
        return Err(Error::TokenCountMismatch {
            expected: manifest.tokens_per_page,
            found: store.tokens_per_page(),
        });
    }
    if store.page_count() < manifest.page_count() {
        return Err(Error::IncompleteStore {
            missing: manifest.page_count() - store.page_count(),
            total: manifest.page_count(),
        });
    }
    if store.page_count() > manifest.page_count() {
        return Err(Error::CorpusMismatch(format!(
            "store has {} pages, manifest has {}",
            store.page_count(),
            manifest.page_count()
        )));
    }
    if store.token_count() > u32::MAX as usize {
        return Err(Error::Config("corpus exceeds 2^32 token vectors".into()));
    }
    Ok(())
}

/// Builds an index over every page of `manifest` using the embeddings in
/// `store`.
pub fn build_index(
    manifest: Arc<CorpusManifest>,
    store: Arc<EmbeddingStore>,
    config: &IndexConfig,
) -> Result<PageIndex> {
    check_corpus(&manifest, &store)?;
    if config.candidate_pages == Some(0) {
        return Err(Error::Config("candidate_pages must be at least 1".into()));
    }
    let tokens = store.token_count();
    let mut resolved = config.clone();
    let structure = match config.kind {
        IndexKind::Flat => Structure::Flat,
        IndexKind::IvfFlat(p) => {
            let (nlist, nprobe) = resolve_ivf(p.nlist, p.nprobe, tokens)?;
            resolved.kind = IndexKind::IvfFlat(IvfParams {
                nlist: Some(nlist),
                nprobe: Some(nprobe),
            });
            Structure::Ivf(IvfIndex::build(
                &store,
                nlist,
                nprobe,
                None,
                &config.kmeans,
            )?)
        }
        IndexKind::IvfPq(p) => {
            let (nlist, nprobe) = resolve_ivf(p.nlist, p.nprobe, tokens)?;
            let m = p.m.unwrap_or_else(|| (store.dim() / 4).max(1));
            pq::validate_params(store.dim(), m, p.nbits)?;
            resolved.kind = IndexKind::IvfPq(IvfPqParams {
                nlist: Some(nlist),
                nprobe: Some(nprobe),
                m: Some(m),
                nbits: p.nbits,
            });
            Structure::Ivf(IvfIndex::build(
                &store,
                nlist,
                nprobe,
                Some((m, p.nbits)),
                &config.kmeans,
            )?)
        }
    };
    Ok(PageIndex {
        manifest,
        store,
        config: resolved,
        structure,
    })
}

impl PageIndex {
    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn store(&self) -> &EmbeddingStore {
        &self.store
    }

    /// The build configuration with every default filled in.
    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn kind_name(&self) -> &'static str {
        self.config.kind.name()
    }

    pub fn dim(&self) -> usize {
        self.store.dim()
    }

    pub fn ivf(&self) -> Option<&IvfIndex> {
        match &self.structure {
            Structure::Flat => None,
            Structure::Ivf(ivf) => Some(ivf),
        }
    }

    /// Stored token vectors (for IVF kinds: vectors held in inverted lists).
    pub fn stored_vectors(&self) -> usize {
        match &self.structure {
            Structure::Flat => self.store.token_count(),
            Structure::Ivf(ivf) => ivf.lists.iter().map(InvertedList::len).sum(),
        }
    }

    pub fn search(&self, query: &Query, k: usize) -> Result<RetrievalResult> {
        let hits = self.search_embedding(
            query.embedding.view(),
            k,
            &query.scope,
            &SearchParams::default(),
        )?;
        Ok(RetrievalResult {
            query_id: query.id.clone(),
            hits,
        })
    }

    pub fn search_embedding(
        &self,
        query: MultiVecRef<'_>,
        k: usize,
        scope: &Scope,
        params: &SearchParams,
    ) -> Result<Vec<Hit>> {
        if k == 0 {
            return Err(Error::ZeroK);
        }
        if query.dim() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                found: query.dim(),
            });
        }
        let range = self.manifest.scope_range(scope)?;
        let ranked = match &self.structure {
            Structure::Flat => {
                let scored = range
                    .map(|gid| (gid, maxsim_unchecked(query, self.store.page(gid))))
                    .collect();
                top_k_ids(scored, k)
            }
            Structure::Ivf(ivf) => {
                let candidates = params
                    .candidate_pages
                    .or(self.config.candidate_pages)
                    .unwrap_or_else(|| default_candidate_pages(k));
                if candidates < k {
                    return Err(Error::Config(format!(
                        "candidate_pages ({candidates}) must be >= k ({k})"
                    )));
                }
                let nprobe = params.nprobe.unwrap_or(ivf.nprobe);
                if nprobe == 0 || nprobe > ivf.nlist() {
                    return Err(Error::Config(format!(
                        "nprobe {nprobe} outside 1..={}",
                        ivf.nlist()
                    )));
                }
                let approx = ivf.candidate_scores(
                    query,
                    nprobe,
                    self.store.tokens_per_page(),
                    self.store.page_count(),
                    range,
                );
                let rescored = top_k_ids(approx, candidates)
                    .into_iter()
                    .map(|(gid, _)| (gid, maxsim_unchecked(query, self.store.page(gid))))
                    .collect();
                top_k_ids(rescored, k)
            }
        };
        let pages = self.manifest.layout();
        Ok(ranked
            .into_iter()
            .map(|(gid, score)| Hit {
                page: pages.page(gid).expect("ranked page in layout").clone(),
                score,
            })
            .collect())
    }
}
