use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{MultiVecEmbedding, PageRef};

/// Name plus version; two providers with equal identity must produce equal
/// embeddings for equal inputs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProviderIdentity {
    pub name: String,
    pub version: String,
}

impl ProviderIdentity {
    pub fn new(name: impl Into<String>, version: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            version: version.into(),
        }
    }
}

impl fmt::Display for ProviderIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name, self.version)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub dim: usize,
    pub tokens_per_page: usize,
}

/// A page handed to a provider: where it sits in the corpus and where its
/// rasterized image lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PageInput {
    pub page: PageRef,
    pub image_path: PathBuf,
}

/// Produces multi-vector embeddings for page images and query text.
pub trait EmbedderProvider: Send + Sync {
    fn identity(&self) -> ProviderIdentity;
    fn capabilities(&self) -> Capabilities;
    /// Must return exactly `tokens_per_page` rows of `dim` columns.
    fn embed_page(&self, page: &PageInput) -> Result<MultiVecEmbedding>;
    /// Any positive number of rows of `dim` columns.
    fn embed_query(&self, text: &str) -> Result<MultiVecEmbedding>;
}

/// Checks a provider's output against its declared capabilities.
pub(crate) fn check_shape(
    emb: &MultiVecEmbedding,
    caps: Capabilities,
    rows: Option<usize>,
) -> Result<()> {
    if emb.dim() != caps.dim {
        return Err(Error::DimMismatch {
            expected: caps.dim,
            found: emb.dim(),
        });
    }
    if let Some(rows) = rows.filter(|&r| r != emb.rows()) {
        return Err(Error::TokenCountMismatch {
            expected: rows,
            found: emb.rows(),
        });
    }
    Ok(())
}

/// Lowercased alphanumeric runs.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic text-driven embedder for tests and demos.
///
/// Each distinct word maps to a fixed pseudo-random unit vector (its hash
/// seeds the generator). A page embeds its first `tokens_per_page` distinct
/// words, padded with filler rows seeded by the whole text; a query embeds
/// one row per distinct word. A query word that also occurs among a page's
/// rows therefore contributes exactly 1 to that page's MaxSim score.
///
/// Page text is read from a sidecar file next to the image (`page.png` ->
/// `page.txt`). Without a sidecar, the image bytes are hashed and every row
/// is filler.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    caps: Capabilities,
    seed: u64,
}

impl MockEmbedder {
    pub fn new(dim: usize, tokens_per_page: usize, seed: u64) -> Self {
        Self {
            caps: Capabilities {
                dim,
                tokens_per_page,
            },
            seed,
        }
    }

    fn unit_vector(&self, key: u64, out: &mut Vec<f32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(key ^ self.seed);
        let start = out.len();
        out.extend((0..self.caps.dim).map(|_| -> f32 { StandardNormal.sample(&mut rng) }));
        let row = &mut out[start..];
        let norm = row.iter().map(|x: &f32| x * x).sum::<f32>().sqrt();
        row.iter_mut().for_each(|x| *x /= norm);
    }

    fn word_row(&self, word: &str, out: &mut Vec<f32>) {
        self.unit_vector(fnv1a(word.as_bytes()), out);
    }

    fn filler_row(&self, text_hash: u64, row: usize, out: &mut Vec<f32>) {
        self.unit_vector(
            text_hash.rotate_left(17) ^ (row as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            out,
        );
    }

    fn distinct_words(text: &str) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        words(text)
            .into_iter()
            .filter(|w| seen.insert(w.clone()))
            .collect()
    }

    /// Page embedding of raw text.
    pub fn embed_page_text(&self, text: &str) -> MultiVecEmbedding {
        self.page_from(Self::distinct_words(text), fnv1a(text.as_bytes()))
    }

    fn page_from(&self, words: Vec<String>, hash: u64) -> MultiVecEmbedding {
        let n = self.caps.tokens_per_page;
        let mut data = Vec::with_capacity(n * self.caps.dim);
        for w in words.iter().take(n) {
            self.word_row(w, &mut data);
        }
        for row in words.len().min(n)..n {
            self.filler_row(hash, row, &mut data);
        }
        MultiVecEmbedding::new(n, self.caps.dim, data).expect("mock rows are finite")
    }

    /// The text the mock would embed for `image_path`, if a sidecar exists.
    pub fn sidecar_path(image_path: &Path) -> PathBuf {
        image_path.with_extension("txt")
    }
}

impl EmbedderProvider for MockEmbedder {
    fn identity(&self) -> ProviderIdentity {
        ProviderIdentity::new("mock", format!("1/seed={}", self.seed))
    }

    fn capabilities(&self) -> Capabilities {
        self.caps
    }

    fn embed_page(&self, page: &PageInput) -> Result<MultiVecEmbedding> {
        let sidecar = Self::sidecar_path(&page.image_path);
        match fs::read_to_string(&sidecar) {
            Ok(text) => Ok(self.embed_page_text(&text)),
            Err(_) => {
                let bytes = fs::read(&page.image_path).map_err(|e| Error::PageArtifact {
                    path: page.image_path.clone(),
                    reason: e.to_string(),
                })?;
                Ok(self.page_from(Vec::new(), fnv1a(&bytes)))
            }
        }
    }

    fn embed_query(&self, text: &str) -> Result<MultiVecEmbedding> {
        let words = Self::distinct_words(text);
        if words.is_empty() {
            let mut data = Vec::with_capacity(self.caps.dim);
            self.filler_row(fnv1a(text.as_bytes()), 0, &mut data);
            return MultiVecEmbedding::new(1, self.caps.dim, data);
        }
        let mut data = Vec::with_capacity(words.len() * self.caps.dim);
        for w in &words {
            self.word_row(w, &mut data);
        }
        MultiVecEmbedding::new(words.len(), self.caps.dim, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::maxsim_score;

    #[test]
    fn rows_are_unit_norm_and_shaped() {
        let e = MockEmbedder::new(16, 8, 3);
        let p = e.embed_page_text("alpha beta beta gamma");
        assert_eq!((p.rows(), p.dim()), (8, 16));
        for i in 0..8 {
            let n: f32 = p.row(i).iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-5);
        }
        let q = e.embed_query("Beta, GAMMA!").unwrap();
        assert_eq!(q.rows(), 2);
        // shared words give exact matches
        assert!((maxsim_score(q.view(), p.view()).unwrap() - 2.0).abs() < 1e-5);
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let a = MockEmbedder::new(8, 4, 1);
        assert_eq!(a.embed_page_text("x y"), a.embed_page_text("x y"));
        assert_ne!(
            a.embed_page_text("x y"),
            MockEmbedder::new(8, 4, 2).embed_page_text("x y")
        );
        assert_ne!(
            a.embed_page_text("x y").row(3),
            a.embed_page_text("x z").row(3)
        );
    }

    #[test]
    fn empty_query_still_embeds() {
        let q = MockEmbedder::new(8, 4, 1).embed_query("?!").unwrap();
        assert_eq!(q.rows(), 1);
    }

    #[test]
    fn missing_artifact_is_reported() {
        let e = MockEmbedder::new(8, 4, 1);
        let page = PageInput {
            page: PageRef {
                doc: "d".into(),
                page_index: 0,
                global_id: 0,
            },
            image_path: "/nonexistent/p.png".into(),
        };
        assert!(matches!(
            e.embed_page(&page),
            Err(Error::PageArtifact { .. })
        ));
    }

    #[test]
    fn words_split_on_punctuation() {
        assert_eq!(words("Topic: ZEB-12, ok"), vec!["topic", "zeb", "12", "ok"]);
    }
}
