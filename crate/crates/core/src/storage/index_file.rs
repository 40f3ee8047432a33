//! Binary index file. Layout (little-endian):
//!
//! ```text
//! magic "M3INDEX1" | version u32 | kind u8 | dim u32 | tokens_per_page u32
//! page_count u64 | store_checksum u64 | config_len u32 | config JSON
//! [ivf]  nlist u32 | nprobe u32 | centroids f32[nlist*dim]
//!        per list: len u64 | ids u32[len]
//! [ivfpq] m u32 | nbits u8 | codebook f32[m*2^nbits*dim/m]
//!        per list: codes u8[len*m]
//! crc64 u64 over every preceding byte
//! ```
//!
//! IVFFlat list vectors are not stored; they are gathered from the
//! embedding store on load, which is bound by its checksum.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::index::ivf::{InvertedList, IvfIndex};
use crate::index::{check_corpus, IndexConfig, IndexKind, PageIndex, PqCodebook, Structure};
use crate::storage::{atomic_write, Crc64, EmbeddingStore};
use crate::types::CorpusManifest;

pub const INDEX_MAGIC: &[u8; 8] = b"M3INDEX1";
pub const INDEX_VERSION: u32 = 1;
const KIND: &str = "index file";

const KIND_FLAT: u8 = 0;
const KIND_IVFFLAT: u8 = 1;
const KIND_IVFPQ: u8 = 2;

fn encode(index: &PageIndex) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(INDEX_MAGIC);
    buf.extend_from_slice(&INDEX_VERSION.to_le_bytes());
    buf.push(match index.config.kind {
        IndexKind::Flat => KIND_FLAT,
        IndexKind::IvfFlat(_) => KIND_IVFFLAT,
        IndexKind::IvfPq(_) => KIND_IVFPQ,
    });
    let store = &index.store;
    buf.extend_from_slice(&(store.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(store.tokens_per_page() as u32).to_le_bytes());
    buf.extend_from_slice(&(store.page_count() as u64).to_le_bytes());
    buf.extend_from_slice(&store.checksum().to_le_bytes());
    let config = serde_json::to_vec(&index.config)?;
    buf.extend_from_slice(&(config.len() as u32).to_le_bytes());
    buf.extend_from_slice(&config);

    if let Structure::Ivf(ivf) = &index.structure {
        buf.extend_from_slice(&(ivf.nlist() as u32).to_le_bytes());
        buf.extend_from_slice(&(ivf.nprobe as u32).to_le_bytes());
        ivf.centroids
            .iter()
            .for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
        for list in &ivf.lists {
            buf.extend_from_slice(&(list.len() as u64).to_le_bytes());
            list.ids
                .iter()
                .for_each(|id| buf.extend_from_slice(&id.to_le_bytes()));
        }
        if let Some(cb) = &ivf.pq {
            buf.extend_from_slice(&(cb.m as u32).to_le_bytes());
            buf.push(cb.nbits);
            cb.centroids
                .iter()
                .for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
            for list in &ivf.lists {
                buf.extend_from_slice(&list.codes);
            }
        }
    }
    let mut crc = Crc64::new();
    crc.update(&buf);
    buf.extend_from_slice(&crc.finish().to_le_bytes());
    Ok(buf)
}

pub fn save_index(path: &Path, index: &PageIndex) -> Result<()> {
    let bytes = encode(index)?;
    atomic_write(path, |file| {
        file.write_all(&bytes)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Truncated {
                kind: KIND,
                expected: (self.pos as u64).saturating_add(n as u64) + 8,
                found: self.bytes.len() as u64 + 8,
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| corrupt("length overflow"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }
}

fn corrupt(reason: impl Into<String>) -> Error {
    Error::Corrupt {
        kind: KIND,
        reason: reason.into(),
    }
}

/// Loads an index file and binds it to `manifest` and `store`. Fails if the
/// store is not the one the index was built from.
pub fn load_index(
    path: &Path,
    manifest: Arc<CorpusManifest>,
    store: Arc<EmbeddingStore>,
) -> Result<PageIndex> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if bytes.len() < 8 || &bytes[..8] != INDEX_MAGIC {
        return Err(Error::BadMagic {
            kind: KIND,
            expected: "M3INDEX1",
        });
    }
    if bytes.len() < 12 {
        return Err(Error::Truncated {
            kind: KIND,
            expected: 12,
            found: bytes.len() as u64,
        });
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != INDEX_VERSION {
        return Err(Error::UnsupportedVersion {
            kind: KIND,
            found: version,
            supported: INDEX_VERSION,
        });
    }
    if bytes.len() < 12 + 1 + 4 + 4 + 8 + 8 + 4 + 8 {
        return Err(Error::Truncated {
            kind: KIND,
            expected: 49,
            found: bytes.len() as u64,
        });
    }
    let (body, footer) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(footer.try_into().unwrap());
    let mut crc = Crc64::new();
    crc.update(body);
    let computed = crc.finish();
    if stored != computed {
        return Err(Error::Checksum {
            kind: KIND,
            stored,
            computed,
        });
    }
    decode(body, manifest, store)
}

fn decode(
    body: &[u8],
    manifest: Arc<CorpusManifest>,
    store: Arc<EmbeddingStore>,
) -> Result<PageIndex> {
    let mut c = Cursor {
        bytes: body,
        pos: 12,
    };
    let kind = c.u8()?;
    let dim = c.u32()? as usize;
    let tpp = c.u32()? as usize;
    let pages = c.u64()? as usize;
    let store_sum = c.u64()?;
    if dim != store.dim() {
        return Err(Error::DimMismatch {
            expected: dim,
            found: store.dim(),
        });
    }
    if tpp != store.tokens_per_page() {
        return Err(Error::TokenCountMismatch {
            expected: tpp,
            found: store.tokens_per_page(),
        });
    }
    if pages != store.page_count() {
        return Err(Error::CorpusMismatch(format!(
            "index covers {pages} pages, store has {}",
            store.page_count()
        )));
    }
    if store_sum != store.checksum() {
        return Err(Error::CorpusMismatch(format!(
            "index was built from a store with checksum {store_sum:016x}, this store has {:016x}",
            store.checksum()
        )));
    }
    check_corpus(&manifest, &store)?;
    let config_len = c.u32()? as usize;
    let config: IndexConfig =
        serde_json::from_slice(c.take(config_len)?).map_err(|e| corrupt(format!("config: {e}")))?;
    let expected_kind = match config.kind {
        IndexKind::Flat => KIND_FLAT,
        IndexKind::IvfFlat(_) => KIND_IVFFLAT,
        IndexKind::IvfPq(_) => KIND_IVFPQ,
    };
    if expected_kind != kind {
        return Err(corrupt(format!(
            "kind byte {kind} disagrees with config `{}`",
            config.kind.name()
        )));
    }

    let structure = if kind == KIND_FLAT {
        Structure::Flat
    } else {
        let nlist = c.u32()? as usize;
        let nprobe = c.u32()? as usize;
        if nlist == 0 || nprobe == 0 || nprobe > nlist || nlist > store.token_count() {
            return Err(corrupt(format!("nlist={nlist}, nprobe={nprobe}")));
        }
        let centroids = c.f32s(nlist * dim)?;
        let mut lists = Vec::with_capacity(nlist);
        for _ in 0..nlist {
            let len = c.u64()? as usize;
            let raw = c.take(
                len.checked_mul(4)
                    .ok_or_else(|| corrupt("length overflow"))?,
            )?;
            let ids: Vec<u32> = raw
                .chunks_exact(4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            if ids.iter().any(|&id| id as usize >= store.token_count()) {
                return Err(corrupt("vector id out of range"));
            }
            lists.push(InvertedList {
                ids,
                vectors: Vec::new(),
                codes: Vec::new(),
            });
        }
        let pq = if kind == KIND_IVFPQ {
            let m = c.u32()? as usize;
            let nbits = c.u8()?;
            crate::index::pq::validate_params(dim, m, nbits).map_err(|e| corrupt(e.to_string()))?;
            let cents = c.f32s((1usize << nbits) * dim)?;
            let cb = PqCodebook::from_parts(dim, m, nbits, cents)?;
            for list in &mut lists {
                list.codes = c.take(list.ids.len() * m)?.to_vec();
            }
            Some(cb)
        } else {
            for list in &mut lists {
                list.vectors.reserve(list.ids.len() * dim);
                for &id in &list.ids {
                    list.vectors.extend_from_slice(store.token(id as usize));
                }
            }
            None
        };
        let ivf = IvfIndex {
            dim,
            nprobe,
            centroids,
            lists,
            pq,
        };
        ivf.check_consistency(store.token_count())?;
        Structure::Ivf(ivf)
    };
    if c.pos != body.len() {
        return Err(corrupt(format!(
            "{} unexpected trailing bytes",
            body.len() - c.pos
        )));
    }
    Ok(PageIndex {
        manifest,
        store,
        config,
        structure,
    })
}
