use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::storage::write_json;
use crate::types::{flatten_corpus, CorpusManifest, DocumentId};

/// JSON form of a corpus manifest. Global page ids are not stored: they are
/// recomputed from document order and page order on load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub corpus_id: String,
    pub dim: usize,
    pub tokens_per_page: usize,
    pub page_width_px: u32,
    pub page_height_px: u32,
    pub documents: Vec<DocumentEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentEntry {
    pub doc_id: DocumentId,
    pub pages: Vec<PageEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageEntry {
    pub page_index: usize,
    pub image_path: PathBuf,
}

impl ManifestFile {
    pub fn from_manifest(manifest: &CorpusManifest) -> Self {
        let documents = manifest
            .layout()
            .documents()
            .iter()
            .map(|span| DocumentEntry {
                doc_id: span.doc.clone(),
                pages: span
                    .global_ids()
                    .enumerate()
                    .map(|(page_index, gid)| PageEntry {
                        page_index,
                        image_path: manifest.image_path(gid).cloned().unwrap_or_default(),
                    })
                    .collect(),
            })
            .collect();
        Self {
            corpus_id: manifest.corpus_id.clone(),
            dim: manifest.dim,
            tokens_per_page: manifest.tokens_per_page,
            page_width_px: manifest.page_width_px,
            page_height_px: manifest.page_height_px,
            documents,
        }
    }
}

/// Validates a parsed manifest and flattens it. Relative image paths are
/// resolved against `base_dir` when one is given.
pub fn manifest_from_file(file: &ManifestFile, base_dir: Option<&Path>) -> Result<CorpusManifest> {
    for doc in &file.documents {
        for (expected, page) in doc.pages.iter().enumerate() {
            if page.page_index != expected {
                return Err(Error::InvalidManifest(format!(
                    "document `{}`: page {} listed where page {expected} was expected (pages must be 0-based and in order)",
                    doc.doc_id, page.page_index
                )));
            }
        }
    }
    let layout = flatten_corpus(
        file.documents
            .iter()
            .map(|d| (d.doc_id.clone(), d.pages.len())),
    )?;
    let paths = file
        .documents
        .iter()
        .flat_map(|d| d.pages.iter())
        .map(|p| match base_dir {
            Some(base) if p.image_path.is_relative() => base.join(&p.image_path),
            _ => p.image_path.clone(),
        })
        .collect();
    CorpusManifest::new(
        file.corpus_id.clone(),
        file.dim,
        file.tokens_per_page,
        (file.page_width_px, file.page_height_px),
        layout,
        paths,
    )
}

pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let file: ManifestFile = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidManifest(format!("{}: {e}", path.display())))?;
    manifest_from_file(&file, path.parent())
}

/// Writes `manifest` as JSON. Image paths under the manifest's own directory
/// are stored relative to it, so a loaded manifest saves back byte for byte.
pub fn save_manifest(path: &Path, manifest: &CorpusManifest) -> Result<()> {
    let mut file = ManifestFile::from_manifest(manifest);
    if let Some(base) = path.parent().filter(|b| !b.as_os_str().is_empty()) {
        for page in file.documents.iter_mut().flat_map(|d| d.pages.iter_mut()) {
            if let Ok(rel) = page.image_path.strip_prefix(base) {
                page.image_path = rel.to_path_buf();
            }
        }
    }
    write_json(path, &file)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
  "corpus_id": "toy",
  "dim": 8,
  "tokens_per_page": 4,
  "page_width_px": 1224,
  "page_height_px": 1584,
  "documents": [
    {"doc_id": "a", "pages": [{"page_index": 0, "image_path": "a/0.png"}, {"page_index": 1, "image_path": "a/1.png"}]},
    {"doc_id": "b", "pages": [{"page_index": 0, "image_path": "/abs/b0.png"}]}
  ]
}"#;

    #[test]
    fn parse_flatten_and_resolve() {
        let file: ManifestFile = serde_json::from_str(SAMPLE).unwrap();
        let m = manifest_from_file(&file, Some(Path::new("/data"))).unwrap();
        assert_eq!(m.page_count(), 3);
        assert_eq!(m.image_path(1).unwrap(), Path::new("/data/a/1.png"));
        assert_eq!(m.image_path(2).unwrap(), Path::new("/abs/b0.png"));
        assert_eq!(m.layout().page(2).unwrap().doc.as_str(), "b");
    }

    #[test]
    fn file_round_trip() {
        let file: ManifestFile = serde_json::from_str(SAMPLE).unwrap();
        let m = manifest_from_file(&file, None).unwrap();
        let back = ManifestFile::from_manifest(&m);
        assert_eq!(back, file);
        let again = manifest_from_file(&back, None).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn out_of_order_pages_and_duplicates_are_rejected() {
        let mut file: ManifestFile = serde_json::from_str(SAMPLE).unwrap();
        file.documents[0].pages.swap(0, 1);
        assert!(matches!(
            manifest_from_file(&file, None),
            Err(Error::InvalidManifest(_))
        ));

        let mut file: ManifestFile = serde_json::from_str(SAMPLE).unwrap();
        file.documents[1].doc_id = "a".into();
        assert!(
            matches!(manifest_from_file(&file, None), Err(Error::DuplicateDocument(id)) if id == "a")
        );
    }

    #[test]
    fn empty_doc_id_fails_to_parse() {
        let text = SAMPLE.replace("\"doc_id\": \"b\"", "\"doc_id\": \"\"");
        assert!(serde_json::from_str::<ManifestFile>(&text).is_err());
    }

    #[test]
    fn load_then_save_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let file: ManifestFile = serde_json::from_str(SAMPLE).unwrap();
        write_json(&path, &file).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded.image_path(0).unwrap(), &dir.path().join("a/0.png"));
        let again = dir.path().join("again.json");
        save_manifest(&again, &loaded).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }
}
