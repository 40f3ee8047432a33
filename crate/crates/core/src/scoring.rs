//! Exact late-interaction scoring.
//!
//! MaxSim scores a page against a query by taking, for every query token,
//! the best dot product against any page token, and summing those maxima:
//!
//! ```text
//! s(q, p) = Σ_i max_j  q_i · p_j
//! ```
//!
//! Dot products accumulate in ascending coordinate order and the outer sum
//! runs in ascending query-row order, all in `f32`. The result is therefore
//! bit-reproducible, and every exact path in the crate (flat search, rerank)
//! goes through [`maxsim_score`] so their scores compare with `==`.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::types::{Hit, MultiVecRef, PageRef};

/// Inner product, accumulated left to right.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Inner product with eight independent partial sums. Faster than [`dot`]
/// but rounds differently; used only where scores are approximate anyway
/// (IVF probing and candidate generation).
#[inline]
pub(crate) fn dot_lanes(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

/// All query-token x page-token dot products.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    query_tokens: usize,
    page_tokens: usize,
    values: Vec<f32>,
}

impl ScoreMatrix {
    pub fn query_tokens(&self) -> usize {
        self.query_tokens
    }

    pub fn page_tokens(&self) -> usize {
        self.page_tokens
    }

    pub fn get(&self, query_row: usize, page_row: usize) -> f32 {
        self.values[query_row * self.page_tokens + page_row]
    }

    /// For each query token, the page token it matches best (first on ties)
    /// and the similarity.
    pub fn best_matches(&self) -> Vec<(usize, f32)> {
        self.values
            .chunks_exact(self.page_tokens)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f32::NEG_INFINITY), |best, (j, &v)| {
                        if v > best.1 {
                            (j, v)
                        } else {
                            best
                        }
                    })
            })
            .collect()
    }

    /// Sum of row maxima; equal to [`maxsim_score`] on the same inputs.
    pub fn maxsim(&self) -> f32 {
        self.best_matches().iter().map(|&(_, v)| v).sum()
    }
}

fn check_dims(query: &MultiVecRef<'_>, page: &MultiVecRef<'_>) -> Result<()> {
    if query.dim() != page.dim() {
        return Err(Error::DimMismatch {
            expected: query.dim(),
            found: page.dim(),
        });
    }
    Ok(())
}

pub fn score_matrix(query: MultiVecRef<'_>, page: MultiVecRef<'_>) -> Result<ScoreMatrix> {
    check_dims(&query, &page)?;
    let mut values = Vec::with_capacity(query.rows() * page.rows());
    for q in query.iter_rows() {
        values.extend(page.iter_rows().map(|p| dot(q, p)));
    }
    Ok(ScoreMatrix {
        query_tokens: query.rows(),
        page_tokens: page.rows(),
        values,
    })
}

/// MaxSim relevance of `page` to `query`. Not symmetric: the first argument
/// is the side whose tokens pick their best match.
pub fn maxsim_score(query: MultiVecRef<'_>, page: MultiVecRef<'_>) -> Result<f32> {
    check_dims(&query, &page)?;
    Ok(maxsim_unchecked(query, page))
}

#[inline]
pub(crate) fn maxsim_unchecked(query: MultiVecRef<'_>, page: MultiVecRef<'_>) -> f32 {
    let mut total = 0.0f32;
    for q in query.iter_rows() {
        let mut best = f32::NEG_INFINITY;
        for p in page.iter_rows() {
            let s = dot(q, p);
            if s > best {
                best = s;
            }
        }
        total += best;
    }
    total
}

/// MaxSim against every page, in input order. A single dimension mismatch
/// fails the whole batch.
pub fn score_pages(query: MultiVecRef<'_>, pages: &[MultiVecRef<'_>]) -> Result<Vec<f32>> {
    for page in pages {
        check_dims(&query, page)?;
    }
    Ok(pages
        .iter()
        .map(|&page| maxsim_unchecked(query, page))
        .collect())
}

/// Descending score, then ascending id.
#[inline]
pub(crate) fn rank_order(a: &(usize, f32), b: &(usize, f32)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// The `k` best `(id, score)` pairs in rank order.
pub(crate) fn top_k_ids(mut scored: Vec<(usize, f32)>, k: usize) -> Vec<(usize, f32)> {
    if k == 0 {
        return Vec::new();
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(rank_order);
    scored
}

/// Keeps the `k` highest-scoring pages, sorted by non-increasing score;
/// equal scores are ordered by ascending global id.
pub fn top_k(mut scores: Vec<(PageRef, f32)>, k: usize) -> Result<Vec<Hit>> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    let cmp = |a: &(PageRef, f32), b: &(PageRef, f32)| {
        rank_order(&(a.0.global_id, a.1), &(b.0.global_id, b.1))
    };
    if k < scores.len() {
        scores.select_nth_unstable_by(k - 1, cmp);
        scores.truncate(k);
    }
    scores.sort_unstable_by(cmp);
    Ok(scores
        .into_iter()
        .map(|(page, score)| Hit { page, score })
        .collect())
}
