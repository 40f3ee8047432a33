//! Domain types shared across the crate.
//!
//! A corpus is a list of documents, each a list of pages. Pages are flattened
//! into one global sequence (`global_id` in `0..N`), documents in manifest
//! order and pages in document order, so every page of a document occupies a
//! contiguous global-id range.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque, non-empty document identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DocumentId(String);

impl DocumentId {
    pub fn new(value: impl Into<String>) -> Result<Self> {
        let value = value.into();
        if value.is_empty() {
            return Err(Error::InvalidManifest(
                "document id must be non-empty".into(),
            ));
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for DocumentId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<DocumentId> for String {
    fn from(id: DocumentId) -> Self {
        id.0
    }
}

impl fmt::Display for DocumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A page's position inside its document, without the corpus-wide id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PageLocator {
    pub doc: DocumentId,
    pub page_index: usize,
}

/// Global identity of one page in a flattened corpus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PageRef {
    pub doc: DocumentId,
    pub page_index: usize,
    pub global_id: usize,
}

impl PageRef {
    pub fn locator(&self) -> PageLocator {
        PageLocator {
            doc: self.doc.clone(),
            page_index: self.page_index,
        }
    }
}

/// One document's slice of the flattened page sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentSpan {
    pub doc: DocumentId,
    pub first_global_id: usize,
    pub page_count: usize,
}

impl DocumentSpan {
    pub fn global_ids(&self) -> Range<usize> {
        self.first_global_id..self.first_global_id + self.page_count
    }
}

/// Flattened page registry: the output of [`flatten_corpus`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusLayout {
    pages: Vec<PageRef>,
    documents: Vec<DocumentSpan>,
    by_doc: HashMap<DocumentId, usize>,
}

/// Assigns global page ids in document order, then page order.
///
/// Every document must have at least one page and ids must be unique.
pub fn flatten_corpus<I, D>(docs: I) -> Result<CorpusLayout>
where
    I: IntoIterator<Item = (D, usize)>,
    D: Into<DocumentId>,
{
    let mut pages = Vec::new();
    let mut documents = Vec::new();
    let mut by_doc = HashMap::new();
    for (doc, page_count) in docs {
        let doc = doc.into();
        if page_count == 0 {
            return Err(Error::InvalidManifest(format!(
                "document `{doc}` has no pages"
            )));
        }
        if by_doc.insert(doc.clone(), documents.len()).is_some() {
            return Err(Error::DuplicateDocument(doc.to_string()));
        }
        let first_global_id = pages.len();
        pages.extend((0..page_count).map(|page_index| PageRef {
            doc: doc.clone(),
            page_index,
            global_id: first_global_id + page_index,
        }));
        documents.push(DocumentSpan {
            doc,
            first_global_id,
            page_count,
        });
    }
    Ok(CorpusLayout {
        pages,
        documents,
        by_doc,
    })
}

impl CorpusLayout {
    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn pages(&self) -> &[PageRef] {
        &self.pages
    }

    pub fn documents(&self) -> &[DocumentSpan] {
        &self.documents
    }

    pub fn page(&self, global_id: usize) -> Option<&PageRef> {
        self.pages.get(global_id)
    }

    pub fn document(&self, doc: &DocumentId) -> Option<&DocumentSpan> {
        self.by_doc.get(doc).map(|&i| &self.documents[i])
    }

    /// Inverse of `page(global_id).locator()`.
    pub fn global_id(&self, locator: &PageLocator) -> Option<usize> {
        let span = self.document(&locator.doc)?;
        (locator.page_index < span.page_count).then(|| span.first_global_id + locator.page_index)
    }
}

impl From<&str> for DocumentId {
    /// Panics on an empty string; use [`DocumentId::new`] for untrusted input.
    fn from(value: &str) -> Self {
        DocumentId::new(value).expect("document id must be non-empty")
    }
}

/// Row-major `rows x dim` matrix of finite 32-bit token embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiVecEmbedding {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl MultiVecEmbedding {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        MultiVecRef::new(rows, dim, &data)?;
        Ok(Self { rows, dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn view(&self) -> MultiVecRef<'_> {
        MultiVecRef {
            rows: self.rows,
            dim: self.dim,
            data: &self.data,
        }
    }
}

/// Borrowed form of [`MultiVecEmbedding`], e.g. one page inside a store.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiVecRef<'a> {
    rows: usize,
    dim: usize,
    data: &'a [f32],
}

impl<'a> MultiVecRef<'a> {
    pub fn new(rows: usize, dim: usize, data: &'a [f32]) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::InvalidEmbedding(format!(
                "shape must be at least 1x1, got {rows}x{dim}"
            )));
        }
        if data.len() != rows * dim {
            return Err(Error::InvalidEmbedding(format!(
                "{rows}x{dim} embedding needs {} values, got {}",
                rows * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { rows, dim, data })
    }

    /// Skips validation; callers guarantee the shape and finiteness.
    pub(crate) fn new_unchecked(rows: usize, dim: usize, data: &'a [f32]) -> Self {
        debug_assert_eq!(data.len(), rows * dim);
        Self { rows, dim, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &'a [f32] {
        self.data
    }

    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &'a [f32]> + 'a {
        self.data.chunks_exact(self.dim)
    }

    pub fn to_owned(&self) -> MultiVecEmbedding {
        MultiVecEmbedding {
            rows: self.rows,
            dim: self.dim,
            data: self.data.to_vec(),
        }
    }
}

impl<'a> From<&'a MultiVecEmbedding> for MultiVecRef<'a> {
    fn from(e: &'a MultiVecEmbedding) -> Self {
        e.view()
    }
}

/// One page of a manifest with the raster the external renderer produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestPage {
    pub page: PageRef,
    pub image_path: PathBuf,
}

/// The flattened corpus registry plus corpus-level embedding constants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub corpus_id: String,
    pub dim: usize,
    pub tokens_per_page: usize,
    pub page_width_px: u32,
    pub page_height_px: u32,
    layout: CorpusLayout,
    image_paths: Vec<PathBuf>,
}

impl CorpusManifest {
    /// `image_paths` is indexed by global id and must have one entry per page.
    pub fn new(
        corpus_id: impl Into<String>,
        dim: usize,
        tokens_per_page: usize,
        page_size_px: (u32, u32),
        layout: CorpusLayout,
        image_paths: Vec<PathBuf>,
    ) -> Result<Self> {
        if dim == 0 || tokens_per_page == 0 {
            return Err(Error::InvalidManifest(
                "dim and tokens_per_page must be at least 1".into(),
            ));
        }
        if image_paths.len() != layout.page_count() {
            return Err(Error::InvalidManifest(format!(
                "{} image paths for {} pages",
                image_paths.len(),
                layout.page_count()
            )));
        }
        Ok(Self {
            corpus_id: corpus_id.into(),
            dim,
            tokens_per_page,
            page_width_px: page_size_px.0,
            page_height_px: page_size_px.1,
            layout,
            image_paths,
        })
    }

    pub fn layout(&self) -> &CorpusLayout {
        &self.layout
    }

    pub fn page_count(&self) -> usize {
        self.layout.page_count()
    }

    pub fn pages(&self) -> impl Iterator<Item = ManifestPage> + '_ {
        self.layout
            .pages()
            .iter()
            .zip(&self.image_paths)
            .map(|(page, path)| ManifestPage {
                page: page.clone(),
                image_path: path.clone(),
            })
    }

    pub fn image_path(&self, global_id: usize) -> Option<&PathBuf> {
        self.image_paths.get(global_id)
    }

    #[cfg(test)]
    pub(crate) fn image_paths_mut(&mut self) -> &mut Vec<PathBuf> {
        &mut self.image_paths
    }

    /// Resolves a search scope to the contiguous global-id range it admits.
    pub fn scope_range(&self, scope: &Scope) -> Result<Range<usize>> {
        match scope {
            Scope::OpenDomain => Ok(0..self.page_count()),
            Scope::ClosedDomain(doc) => self
                .layout
                .document(doc)
                .map(DocumentSpan::global_ids)
                .ok_or_else(|| Error::UnknownDocument(doc.to_string())),
        }
    }
}

/// Which pages a query may retrieve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    OpenDomain,
    ClosedDomain(DocumentId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub embedding: MultiVecEmbedding,
    pub scope: Scope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub page: PageRef,
    pub score: f32,
}

/// Ranked pages for one query, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_id: String,
    pub hits: Vec<Hit>,
}

impl RetrievalResult {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn pages(&self) -> impl Iterator<Item = &PageRef> {
        self.hits.iter().map(|h| &h.page)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hops {
    SingleHop,
    MultiHop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Table,
    Image,
    Chart,
    Layout,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Image,
        Modality::Table,
        Modality::Text,
        Modality::Chart,
        Modality::Layout,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Modality::Text => "Text",
            Modality::Table => "Table",
            Modality::Image => "Image",
            Modality::Chart => "Chart",
            Modality::Layout => "Layout",
        }
    }
}

/// A question with gold answers and the tags used to slice reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub hops: Hops,
    #[serde(default)]
    pub modality: BTreeSet<Modality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_pages: Option<Vec<PageLocator>>,
    /// Target document for closed-domain runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<DocumentId>,
}

impl QAExample {
    pub fn validate(&self) -> Result<()> {
        if self.gold_answers.is_empty() {
            return Err(Error::InvalidManifest(format!(
                "example `{}` has no gold answers",
                self.id
            )));
        }
        Ok(())
    }

    /// The document a closed-domain run should search: `doc_id`, or the
    /// single document all gold pages belong to.
    pub fn closed_domain_doc(&self) -> Option<DocumentId> {
        if let Some(doc) = &self.doc_id {
            return Some(doc.clone());
        }
        let gold = self.gold_pages.as_ref()?;
        let first = &gold.first()?.doc;
        gold.iter().all(|p| &p.doc == first).then(|| first.clone())
    }
}
