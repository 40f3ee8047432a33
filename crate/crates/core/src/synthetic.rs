//! Synthetic corpora for tests, examples and benchmarks.
//!
//! * Gaussian mixture: unit-norm token vectors drawn around random cluster
//!   centres, for index recall and latency measurements.
//! * Planted corpus: pages with sidecar text and questions whose answer sits
//!   on exactly one page. Under [`MockEmbedder`](crate::pipeline::MockEmbedder)
//!   every page repeats the question's boilerplate words, so only the
//!   page's unique topic word separates it from the rest and the target is
//!   the unique MaxSim maximizer.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::storage::{save_manifest, write_examples, EmbeddingStore};
use crate::types::{
    flatten_corpus, CorpusManifest, DocumentId, Hops, Modality, MultiVecEmbedding, PageLocator,
    QAExample,
};

/// 1x1 white greyscale PNG used as a placeholder page image.
pub const PLACEHOLDER_PNG: [u8; 67] = [
    137, 80, 78, 71, 13, 10, 26, 10, 0, 0, 0, 13, 73, 72, 68, 82, 0, 0, 0, 1, 0, 0, 0, 1, 8, 0, 0,
    0, 0, 58, 126, 155, 85, 0, 0, 0, 10, 73, 68, 65, 84, 120, 218, 99, 248, 15, 0, 1, 1, 1, 0, 28,
    176, 140, 153, 0, 0, 0, 0, 73, 69, 78, 68, 174, 66, 96, 130,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub pages: usize,
    pub tokens_per_page: usize,
    pub dim: usize,
    pub clusters: usize,
    /// Noise norm relative to the unit-norm centre.
    pub spread: f32,
    pub pages_per_doc: usize,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn new(
        pages: usize,
        tokens_per_page: usize,
        dim: usize,
        clusters: usize,
        seed: u64,
    ) -> Self {
        Self {
            pages,
            tokens_per_page,
            dim,
            clusters,
            spread: 0.5,
            pages_per_doc: 10,
            seed,
        }
    }
}

/// Draws Gaussian mixture token vectors.
pub struct Mixture {
    spec: MixtureSpec,
    centres: Vec<f32>,
}

fn normalize(v: &mut [f32]) {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

impl Mixture {
    pub fn new(spec: MixtureSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut centres: Vec<f32> = (0..spec.clusters * spec.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        centres.chunks_exact_mut(spec.dim).for_each(normalize);
        Self { spec, centres }
    }

    fn token<R: Rng>(&self, rng: &mut R, out: &mut Vec<f32>) {
        let d = self.spec.dim;
        let c = rng.gen_range(0..self.spec.clusters);
        let scale = self.spec.spread / (d as f32).sqrt();
        let start = out.len();
        for &x in &self.centres[c * d..(c + 1) * d] {
            let g: f32 = StandardNormal.sample(rng);
            out.push(x + scale * g);
        }
        normalize(&mut out[start..]);
    }

    /// Manifest (documents of `pages_per_doc` pages, no images) and store.
    pub fn corpus(&self) -> Result<(CorpusManifest, EmbeddingStore)> {
        let s = &self.spec;
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(1));
        let mut data = Vec::with_capacity(s.pages * s.tokens_per_page * s.dim);
        for _ in 0..s.pages * s.tokens_per_page {
            self.token(&mut rng, &mut data);
        }
        let per_doc = s.pages_per_doc.max(1);
        let docs: Vec<(DocumentId, usize)> = (0..s.pages.div_ceil(per_doc))
            .map(|i| {
                (
                    DocumentId::new(format!("doc{i:05}")).unwrap(),
                    per_doc.min(s.pages - i * per_doc),
                )
            })
            .collect();
        let layout = flatten_corpus(docs)?;
        let manifest = CorpusManifest::new(
            format!("mixture-{}", s.seed),
            s.dim,
            s.tokens_per_page,
            (1224, 1584),
            layout,
            vec![PathBuf::new(); s.pages],
        )?;
        let store = EmbeddingStore::new(s.dim, s.tokens_per_page, "synthetic-mixture", data)?;
        Ok((manifest, store))
    }

    /// `count` queries of `rows` tokens drawn from the same mixture.
    pub fn queries(&self, count: usize, rows: usize, seed: u64) -> Vec<MultiVecEmbedding> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let mut data = Vec::with_capacity(rows * self.spec.dim);
                for _ in 0..rows {
                    self.token(&mut rng, &mut data);
                }
                MultiVecEmbedding::new(rows, self.spec.dim, data).expect("finite")
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub docs: usize,
    pub pages_per_doc: usize,
    pub questions: usize,
    pub dim: usize,
    pub tokens_per_page: usize,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            docs: 40,
            pages_per_doc: 5,
            questions: 50,
            dim: 64,
            tokens_per_page: 16,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub manifest: CorpusManifest,
    pub examples: Vec<QAExample>,
    pub manifest_path: PathBuf,
    pub examples_path: PathBuf,
}

const BOILERPLATE: &str = "what is the answer recorded for";

pub fn planted_question(topic: &str) -> String {
    format!("What is the answer recorded for {topic}?")
}

fn random_word<R: Rng>(rng: &mut R, len: usize) -> String {
    (0..len)
        .map(|_| rng.gen_range(b'a'..=b'z') as char)
        .collect()
}

fn capitalized(w: &str) -> String {
    let mut c = w.chars();
    c.next()
        .map(|f| f.to_ascii_uppercase().to_string() + c.as_str())
        .unwrap_or_default()
}

/// Writes page placeholders, sidecar texts, `manifest.json` and
/// `examples.jsonl` under `dir`.
pub fn write_planted_corpus(dir: &Path, spec: &PlantedSpec) -> Result<PlantedCorpus> {
    let pages = spec.docs * spec.pages_per_doc;
    if spec.questions > pages {
        return Err(Error::Config(format!(
            "{} questions need at least as many pages, got {pages}",
            spec.questions
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let reserved: HashSet<String> = crate::pipeline::words(BOILERPLATE)
        .into_iter()
        .chain(["question", "answer", "notes"].map(String::from))
        .collect();
    let mut used = reserved.clone();
    let mut fresh = |rng: &mut ChaCha8Rng, len: usize| loop {
        let w = random_word(rng, len);
        if used.insert(w.clone()) {
            return w;
        }
    };

    let images = dir.join("pages");
    fs::create_dir_all(&images)
        .map_err(|e| Error::io(format!("creating {}", images.display()), e))?;
    let docs: Vec<(DocumentId, usize)> = (0..spec.docs)
        .map(|i| {
            (
                DocumentId::new(format!("doc{i:03}")).unwrap(),
                spec.pages_per_doc,
            )
        })
        .collect();
    let layout = flatten_corpus(docs)?;
    let mut paths = Vec::with_capacity(pages);
    let mut facts = Vec::with_capacity(pages);
    for page in layout.pages() {
        let topic = fresh(&mut rng, 9);
        let answer = format!(
            "{} {}",
            capitalized(&fresh(&mut rng, 6)),
            capitalized(&fresh(&mut rng, 7))
        );
        let notes: Vec<String> = (0..8).map(|_| fresh(&mut rng, 5)).collect();
        let text = format!(
            "question: {BOILERPLATE} {topic}\nanswer: {answer}\nnotes: {}\n",
            notes.join(" ")
        );
        let rel = PathBuf::from("pages").join(format!("{}_p{}.png", page.doc, page.page_index));
        let abs = dir.join(&rel);
        fs::write(&abs, PLACEHOLDER_PNG)
            .map_err(|e| Error::io(format!("writing {}", abs.display()), e))?;
        let side = abs.with_extension("txt");
        fs::write(&side, text).map_err(|e| Error::io(format!("writing {}", side.display()), e))?;
        paths.push(rel);
        facts.push((topic, answer));
    }

    let mut targets: Vec<usize> = (0..pages).collect();
    targets.shuffle(&mut rng);
    targets.truncate(spec.questions);
    let examples: Vec<QAExample> = targets
        .iter()
        .enumerate()
        .map(|(i, &gid)| {
            let page = &layout.pages()[gid];
            let (topic, answer) = &facts[gid];
            QAExample {
                id: format!("q{i:03}"),
                question: planted_question(topic),
                gold_answers: vec![answer.clone()],
                hops: if i % 2 == 0 {
                    Hops::SingleHop
                } else {
                    Hops::MultiHop
                },
                modality: [Modality::ALL[i % Modality::ALL.len()]]
                    .into_iter()
                    .collect(),
                gold_pages: Some(vec![PageLocator {
                    doc: page.doc.clone(),
                    page_index: page.page_index,
                }]),
                doc_id: Some(page.doc.clone()),
            }
        })
        .collect();

    let stored = CorpusManifest::new(
        format!("planted-{}", spec.seed),
        spec.dim,
        spec.tokens_per_page,
        (1224, 1584),
        layout.clone(),
        paths.clone(),
    )?;
    let manifest_path = dir.join("manifest.json");
    save_manifest(&manifest_path, &stored)?;
    let examples_path = dir.join("examples.jsonl");
    write_examples(&examples_path, &examples)?;
    let manifest = CorpusManifest::new(
        stored.corpus_id.clone(),
        spec.dim,
        spec.tokens_per_page,
        (1224, 1584),
        layout,
        paths.into_iter().map(|p| dir.join(p)).collect(),
    )?;
    Ok(PlantedCorpus {
        manifest,
        examples,
        manifest_path,
        examples_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::{load_manifest, read_examples};

    #[test]
    fn mixture_shapes_and_norms() {
        let m = Mixture::new(MixtureSpec::new(25, 4, 8, 3, 1));
        let (manifest, store) = m.corpus().unwrap();
        assert_eq!(manifest.page_count(), 25);
        assert_eq!(manifest.layout().documents().len(), 3);
        assert_eq!(store.token_count(), 100);
        for v in store.tokens().chunks_exact(8) {
            assert!((v.iter().map(|x| x * x).sum::<f32>() - 1.0).abs() < 1e-5);
        }
        assert_eq!(m.queries(2, 3, 9), m.queries(2, 3, 9));
    }

    #[test]
    fn planted_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = PlantedSpec {
            docs: 4,
            pages_per_doc: 3,
            questions: 6,
            ..Default::default()
        };
        let c = write_planted_corpus(dir.path(), &spec).unwrap();
        assert_eq!(load_manifest(&c.manifest_path).unwrap(), c.manifest);
        assert_eq!(read_examples(&c.examples_path).unwrap(), c.examples);
        let gold = c.examples[0].gold_pages.as_ref().unwrap()[0].clone();
        let gid = c.manifest.layout().global_id(&gold).unwrap();
        let text =
            fs::read_to_string(c.manifest.image_path(gid).unwrap().with_extension("txt")).unwrap();
        assert!(text.contains(&format!("answer: {}", c.examples[0].gold_answers[0])));
        // same seed, same bytes
        let dir2 = tempfile::tempdir().unwrap();
        write_planted_corpus(dir2.path(), &spec).unwrap();
        assert_eq!(
            fs::read(&c.examples_path).unwrap(),
            fs::read(dir2.path().join("examples.jsonl")).unwrap()
        );
    }
}
