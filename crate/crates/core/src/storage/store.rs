//! The embedding store: every page's token embeddings, contiguous, ordered
//! by global page id.
//!
//! On-disk layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "M3EMBED1"
//! 8       4     version (u32) = 1
//! 12      4     dim (u32)
//! 16      4     tokens_per_page (u32)
//! 20      8     page_count (u64)
//! 28      4     provider_id length L (u32)
//! 32      L     provider_id, UTF-8
//! 32+L    P     payload: page_count * tokens_per_page * dim f32 values
//! 32+L+P  8     CRC-64/XZ of the payload bytes (u64)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::storage::{atomic_write, read_exact_or_truncated, Crc64};
use crate::types::{MultiVecEmbedding, MultiVecRef};

pub const STORE_MAGIC: &[u8; 8] = b"M3EMBED1";
pub const STORE_VERSION: u32 = 1;
const KIND: &str = "embedding store";

/// Page embeddings for a whole corpus. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    tokens_per_page: usize,
    provider_id: String,
    data: Vec<f32>,
}

impl EmbeddingStore {
    pub fn new(
        dim: usize,
        tokens_per_page: usize,
        provider_id: impl Into<String>,
        data: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 || tokens_per_page == 0 {
            return Err(Error::InvalidEmbedding(
                "dim and tokens_per_page must be at least 1".into(),
            ));
        }
        let page_len = dim * tokens_per_page;
        if !data.len().is_multiple_of(page_len) {
            return Err(Error::InvalidEmbedding(format!(
                "payload of {} values is not a whole number of {tokens_per_page}x{dim} pages",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding(format!(
                "non-finite value in page {}",
                pos / page_len
            )));
        }
        Ok(Self {
            dim,
            tokens_per_page,
            provider_id: provider_id.into(),
            data,
        })
    }

    /// Builds a store from per-page embeddings in global-id order.
    pub fn from_pages<'a, I>(
        dim: usize,
        tokens_per_page: usize,
        provider_id: impl Into<String>,
        pages: I,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = &'a MultiVecEmbedding>,
    {
        let mut data = Vec::new();
        for page in pages {
            if page.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: page.dim(),
                });
            }
            if page.rows() != tokens_per_page {
                return Err(Error::TokenCountMismatch {
                    expected: tokens_per_page,
                    found: page.rows(),
                });
            }
            data.extend_from_slice(page.data());
        }
        Self::new(dim, tokens_per_page, provider_id, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tokens_per_page(&self) -> usize {
        self.tokens_per_page
    }

    pub fn page_count(&self) -> usize {
        self.data.len() / (self.dim * self.tokens_per_page)
    }

    pub fn token_count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    /// All token vectors, flattened `N * n_v x d`.
    pub fn tokens(&self) -> &[f32] {
        &self.data
    }

    pub fn token(&self, vector_id: usize) -> &[f32] {
        &self.data[vector_id * self.dim..(vector_id + 1) * self.dim]
    }

    pub fn page(&self, global_id: usize) -> MultiVecRef<'_> {
        let len = self.dim * self.tokens_per_page;
        MultiVecRef::new_unchecked(
            self.tokens_per_page,
            self.dim,
            &self.data[global_id * len..(global_id + 1) * len],
        )
    }

    pub fn payload_bytes(&self) -> u64 {
        self.data.len() as u64 * 4
    }

    /// CRC-64/XZ of the little-endian payload; the value stored in the footer.
    pub fn checksum(&self) -> u64 {
        let mut crc = Crc64::new();
        let mut buf = Vec::with_capacity(4096);
        for chunk in self.data.chunks(1024) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            crc.update(&buf);
        }
        crc.finish()
    }

    pub fn header_len(&self) -> u64 {
        32 + self.provider_id.len() as u64
    }

    /// Exact file size of the serialized store.
    pub fn file_len(&self) -> u64 {
        self.header_len() + self.payload_bytes() + 8
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let io = |e| Error::io("writing embedding store", e);
        w.write_all(STORE_MAGIC).map_err(io)?;
        w.write_all(&STORE_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.tokens_per_page as u32).to_le_bytes())
            .map_err(io)?;
        w.write_all(&(self.page_count() as u64).to_le_bytes())
            .map_err(io)?;
        w.write_all(&(self.provider_id.len() as u32).to_le_bytes())
            .map_err(io)?;
        w.write_all(self.provider_id.as_bytes()).map_err(io)?;
        let mut crc = Crc64::new();
        let mut buf = Vec::with_capacity(4096);
        for chunk in self.data.chunks(1024) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            crc.update(&buf);
            w.write_all(&buf).map_err(io)?;
        }
        w.write_all(&crc.finish().to_le_bytes()).map_err(io)?;
        Ok(())
    }

    /// Streams a store in, validating magic, version, size and checksum.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        let got = read_exact_or_truncated(r, &mut magic, KIND, 0)?;
        debug_assert_eq!(got, 8);
        if &magic != STORE_MAGIC {
            return Err(Error::BadMagic {
                kind: KIND,
                expected: "M3EMBED1",
            });
        }
        let mut fixed = [0u8; 24];
        read_exact_or_truncated(r, &mut fixed, KIND, 8)?;
        let version = u32::from_le_bytes(fixed[0..4].try_into().unwrap());
        if version != STORE_VERSION {
            return Err(Error::UnsupportedVersion {
                kind: KIND,
                found: version,
                supported: STORE_VERSION,
            });
        }
        let dim = u32::from_le_bytes(fixed[4..8].try_into().unwrap()) as usize;
        let tokens_per_page = u32::from_le_bytes(fixed[8..12].try_into().unwrap()) as usize;
        let page_count = u64::from_le_bytes(fixed[12..20].try_into().unwrap());
        let id_len = u32::from_le_bytes(fixed[20..24].try_into().unwrap()) as usize;
        let mut id = Vec::new();
        r.take(id_len as u64)
            .read_to_end(&mut id)
            .map_err(|e| Error::io("reading embedding store", e))?;
        if id.len() < id_len {
            return Err(Error::Truncated {
                kind: KIND,
                expected: 32 + id_len as u64,
                found: 32 + id.len() as u64,
            });
        }
        let provider_id = String::from_utf8(id).map_err(|_| Error::Corrupt {
            kind: KIND,
            reason: "provider id is not UTF-8".into(),
        })?;
        let header = 32 + id_len as u64;
        let values = page_count
            .checked_mul(tokens_per_page as u64)
            .and_then(|v| v.checked_mul(dim as u64))
            .filter(|v| {
                v.checked_mul(4)
                    .and_then(|b| b.checked_add(header + 8))
                    .is_some()
            })
            .ok_or_else(|| Error::Corrupt {
                kind: KIND,
                reason: "payload size overflows".into(),
            })?;
        let expected_len = header + values * 4 + 8;

        let mut data = Vec::with_capacity(values.min(1 << 20) as usize);
        let mut crc = Crc64::new();
        let mut buf = vec![0u8; 1 << 16];
        let mut remaining = values * 4;
        let mut offset = header;
        while remaining > 0 {
            let take = remaining.min(buf.len() as u64) as usize;
            let got = read_exact_or_truncated(r, &mut buf[..take], KIND, offset)
                .map_err(|e| with_expected(e, expected_len))?;
            crc.update(&buf[..got]);
            data.extend(
                buf[..got]
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap())),
            );
            remaining -= got as u64;
            offset += got as u64;
        }
        let mut footer = [0u8; 8];
        read_exact_or_truncated(r, &mut footer, KIND, offset)
            .map_err(|e| with_expected(e, expected_len))?;
        let mut extra = [0u8; 1];
        if r.read(&mut extra)
            .map_err(|e| Error::io("reading embedding store", e))?
            != 0
        {
            return Err(Error::Corrupt {
                kind: KIND,
                reason: format!("trailing bytes after {expected_len}-byte store"),
            });
        }
        let stored = u64::from_le_bytes(footer);
        let computed = crc.finish();
        if stored != computed {
            return Err(Error::Checksum {
                kind: KIND,
                stored,
                computed,
            });
        }
        Self::new(dim, tokens_per_page, provider_id, data)
    }
}

fn with_expected(err: Error, expected: u64) -> Error {
    match err {
        Error::Truncated { kind, found, .. } => Error::Truncated {
            kind,
            expected,
            found,
        },
        other => other,
    }
}

pub fn write_store(path: &Path, store: &EmbeddingStore) -> Result<()> {
    atomic_write(path, |file| {
        let mut w = BufWriter::new(file);
        store.write_to(&mut w)?;
        w.flush()
            .map_err(|e| Error::io("writing embedding store", e))
    })
}

pub fn read_store(path: &Path) -> Result<EmbeddingStore> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    EmbeddingStore::read_from(&mut BufReader::new(file))
}
