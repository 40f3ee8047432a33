//! Inverted file over individual token vectors.
//!
//! Every token vector of every page is routed to the list of its
//! maximum-inner-product coarse centroid. Lists hold the vector ids plus
//! either the raw vectors (IVFFlat) or `m`-byte PQ codes of the residual
//! `vector - centroid` (IVFPQ).

use crate::error::{Error, Result};
use crate::index::kmeans::{kmeans_train, training_sample, KMeansConfig};
use crate::index::pq::PqCodebook;
use crate::scoring::{dot_lanes, top_k_ids};
use crate::storage::EmbeddingStore;

/// Position of one token vector inside the flattened corpus tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenEntry {
    pub vector_id: usize,
    pub page_global_id: usize,
    pub row_index: usize,
}

impl TokenEntry {
    pub fn from_vector_id(vector_id: usize, tokens_per_page: usize) -> Self {
        Self {
            vector_id,
            page_global_id: vector_id / tokens_per_page,
            row_index: vector_id % tokens_per_page,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InvertedList {
    pub(crate) ids: Vec<u32>,
    /// `ids.len() x dim` for IVFFlat, empty for IVFPQ.
    pub(crate) vectors: Vec<f32>,
    /// `ids.len() x m` for IVFPQ, empty for IVFFlat.
    pub(crate) codes: Vec<u8>,
}

impl InvertedList {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn entries(&self, tokens_per_page: usize) -> impl Iterator<Item = TokenEntry> + '_ {
        self.ids
            .iter()
            .map(move |&id| TokenEntry::from_vector_id(id as usize, tokens_per_page))
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    pub(crate) dim: usize,
    pub(crate) nprobe: usize,
    /// `nlist x dim`, row-major.
    pub(crate) centroids: Vec<f32>,
    pub(crate) lists: Vec<InvertedList>,
    pub(crate) pq: Option<PqCodebook>,
}

/// Max-inner-product centroid, ties to the lowest id.
pub(crate) fn nearest_centroid(vector: &[f32], centroids: &[f32], dim: usize) -> usize {
    let mut best = (0usize, f32::NEG_INFINITY);
    for (c, cent) in centroids.chunks_exact(dim).enumerate() {
        let s = dot_lanes(vector, cent);
        if s > best.1 {
            best = (c, s);
        }
    }
    best.0
}

impl IvfIndex {
    pub(crate) fn build(
        store: &EmbeddingStore,
        nlist: usize,
        nprobe: usize,
        pq: Option<(usize, u8)>,
        kmeans: &KMeansConfig,
    ) -> Result<Self> {
        let dim = store.dim();
        let tokens = store.tokens();
        let sample = training_sample(
            tokens,
            dim,
            kmeans.max_points_per_centroid * nlist,
            kmeans.seed,
        );
        let centroids = kmeans_train(&sample, dim, nlist, kmeans)?;
        drop(sample);

        let assignment: Vec<usize> = tokens
            .chunks_exact(dim)
            .map(|v| nearest_centroid(v, &centroids, dim))
            .collect();

        let codebook = match pq {
            None => None,
            Some((m, nbits)) => {
                let mut residuals = Vec::with_capacity(tokens.len());
                for (v, &c) in tokens.chunks_exact(dim).zip(&assignment) {
                    let cent = &centroids[c * dim..(c + 1) * dim];
                    residuals.extend(v.iter().zip(cent).map(|(x, y)| x - y));
                }
                let cfg = KMeansConfig {
                    seed: kmeans.seed.wrapping_add(0x5EED),
                    ..kmeans.clone()
                };
                let cb = PqCodebook::train(&residuals, dim, m, nbits, &cfg)?;
                Some(cb)
            }
        };

        let mut lists = vec![InvertedList::default(); nlist];
        let mut residual = vec![0f32; dim];
        let mut code = vec![0u8; codebook.as_ref().map_or(0, |cb| cb.m())];
        for (id, (v, &c)) in tokens.chunks_exact(dim).zip(&assignment).enumerate() {
            let list = &mut lists[c];
            list.ids.push(id as u32);
            match &codebook {
                None => list.vectors.extend_from_slice(v),
                Some(cb) => {
                    let cent = &centroids[c * dim..(c + 1) * dim];
                    for ((r, x), y) in residual.iter_mut().zip(v).zip(cent) {
                        *r = x - y;
                    }
                    cb.encode(&residual, &mut code);
                    list.codes.extend_from_slice(&code);
                }
            }
        }
        Ok(Self {
            dim,
            nprobe,
            centroids,
            lists,
            pq: codebook,
        })
    }

    pub fn nlist(&self) -> usize {
        self.lists.len()
    }

    pub fn nprobe(&self) -> usize {
        self.nprobe
    }

    pub fn lists(&self) -> &[InvertedList] {
        &self.lists
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn codebook(&self) -> Option<&PqCodebook> {
        self.pq.as_ref()
    }

    pub fn centroid(&self, list: usize) -> &[f32] {
        &self.centroids[list * self.dim..(list + 1) * self.dim]
    }

    /// The `nprobe` lists whose centroids score highest against `row`.
    pub(crate) fn probe(&self, row: &[f32], nprobe: usize) -> Vec<(usize, f32)> {
        let scored = self
            .centroids
            .chunks_exact(self.dim)
            .map(|c| dot_lanes(row, c))
            .enumerate()
            .collect();
        top_k_ids(scored, nprobe)
    }

    /// Approximate per-page scores: for each query row, the best token hit
    /// per page among the probed lists, summed over rows. Rows with no hit
    /// on a page contribute nothing. Returns `(global_id, score)` for every
    /// page hit at least once inside `scope`.
    pub(crate) fn candidate_scores(
        &self,
        query: crate::types::MultiVecRef<'_>,
        nprobe: usize,
        tokens_per_page: usize,
        page_count: usize,
        scope: std::ops::Range<usize>,
    ) -> Vec<(usize, f32)> {
        let mut row_best = vec![f32::NEG_INFINITY; page_count];
        let mut row_touched: Vec<u32> = Vec::new();
        let mut total = vec![0f32; page_count];
        let mut seen = vec![false; page_count];
        let mut pages: Vec<u32> = Vec::new();
        let ksub = self.pq.as_ref().map_or(0, |cb| cb.ksub());
        let m = self.pq.as_ref().map_or(0, |cb| cb.m());
        let (lo, hi) = (scope.start as u32, scope.end as u32);
        let page_of = Divisor::new(tokens_per_page as u32);
        let mut scratch: Vec<f32> = Vec::new();

        for row in query.iter_rows() {
            // one 256-wide row per sub-space so a byte code indexes without bounds checks
            let table: Option<Vec<[f32; 256]>> = self.pq.as_ref().map(|cb| {
                cb.lookup_table(row)
                    .chunks_exact(ksub)
                    .map(|t| {
                        let mut padded = [0f32; 256];
                        padded[..ksub].copy_from_slice(t);
                        padded
                    })
                    .collect()
            });
            for (list_id, centroid_score) in self.probe(row, nprobe) {
                let list = &self.lists[list_id];
                scratch.clear();
                match &table {
                    None => scratch.extend(
                        list.vectors
                            .chunks_exact(self.dim)
                            .map(|v| dot_lanes(row, v)),
                    ),
                    Some(table) => scratch.extend(list.codes.chunks_exact(m).map(|code| {
                        let (mut a, mut b) = (0f32, 0f32);
                        let pairs = table.chunks_exact(2).zip(code.chunks_exact(2));
                        for (t, c) in pairs {
                            a += t[0][c[0] as usize];
                            b += t[1][c[1] as usize];
                        }
                        if m % 2 == 1 {
                            a += table[m - 1][code[m - 1] as usize];
                        }
                        centroid_score + (a + b)
                    })),
                }
                for (&id, &score) in list.ids.iter().zip(&scratch) {
                    let page = page_of.div(id);
                    if page < lo || page >= hi {
                        continue;
                    }
                    let slot = &mut row_best[page as usize];
                    if *slot == f32::NEG_INFINITY {
                        row_touched.push(page);
                    }
                    if score > *slot {
                        *slot = score;
                    }
                }
            }
            for &p in &row_touched {
                let p = p as usize;
                total[p] += row_best[p];
                row_best[p] = f32::NEG_INFINITY;
                if !seen[p] {
                    seen[p] = true;
                    pages.push(p as u32);
                }
            }
            row_touched.clear();
        }
        pages
            .into_iter()
            .map(|p| (p as usize, total[p as usize]))
            .collect()
    }

    pub(crate) fn check_consistency(&self, token_count: usize) -> Result<()> {
        let total: usize = self.lists.iter().map(InvertedList::len).sum();
        if total != token_count {
            return Err(Error::CorpusMismatch(format!(
                "inverted lists hold {total} token vectors, corpus has {token_count}"
            )));
        }
        Ok(())
    }
}

/// Division of `u32` values by a fixed divisor via a 64x64 multiply-high.
/// Exact for every numerator and divisor; `magic == 0` encodes `d == 1`.
#[derive(Debug, Clone, Copy)]
struct Divisor {
    magic: u64,
}

impl Divisor {
    fn new(d: u32) -> Self {
        assert!(d > 0);
        Self {
            magic: (u64::MAX / d as u64).wrapping_add(1),
        }
    }

    #[inline]
    fn div(self, n: u32) -> u32 {
        if self.magic == 0 {
            return n;
        }
        ((self.magic as u128).wrapping_mul(n as u128) >> 64) as u32
    }
}
