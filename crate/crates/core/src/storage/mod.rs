//! Persistence: corpus manifests, embedding stores, index files and QA
//! example sets. Binary formats are little-endian with a magic, a version
//! and a CRC-64/XZ footer; see `docs/formats.md` for the byte layouts.
//!
//! Every writer goes through a temporary file in the target directory and
//! an atomic rename, so an interrupted write never leaves a partial file at
//! the destination path.

mod examples;
mod index_file;
mod manifest;
mod store;

use std::fs::{self, File};
use std::io::Read;
use std::path::{Path, PathBuf};

pub use examples::{read_examples, write_examples};
pub use index_file::{load_index, save_index, INDEX_MAGIC, INDEX_VERSION};
pub use manifest::{
    load_manifest, manifest_from_file, save_manifest, DocumentEntry, ManifestFile, PageEntry,
};
pub use store::{read_store, write_store, EmbeddingStore, STORE_MAGIC, STORE_VERSION};

use crate::error::{Error, Result};

static CRC64: crc::Crc<u64> = crc::Crc::<u64>::new(&crc::CRC_64_XZ);

pub(crate) struct Crc64(crc::Digest<'static, u64>);

impl Crc64 {
    pub(crate) fn new() -> Self {
        Self(CRC64.digest())
    }

    pub(crate) fn update(&mut self, bytes: &[u8]) {
        self.0.update(bytes);
    }

    pub(crate) fn finish(self) -> u64 {
        self.0.finalize()
    }
}

/// Fills `buf` or reports how far the stream got. `offset` is the stream
/// position of `buf[0]`, used for the error message.
pub(crate) fn read_exact_or_truncated<R: Read>(
    r: &mut R,
    buf: &mut [u8],
    kind: &'static str,
    offset: u64,
) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Truncated {
                    kind,
                    expected: offset + buf.len() as u64,
                    found: offset + filled as u64,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::io(format!("reading {kind}"), e)),
        }
    }
    Ok(filled)
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

/// Writes through a sibling temp file, then renames it over `path`.
pub(crate) fn atomic_write<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut File) -> Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    let tmp = temp_path(path);
    let result = (|| {
        let mut file =
            File::create(&tmp).map_err(|e| Error::io(format!("creating {}", tmp.display()), e))?;
        write(&mut file)?;
        file.sync_all()
            .map_err(|e| Error::io(format!("syncing {}", tmp.display()), e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Writes any serializable value as pretty JSON, atomically.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, |file| {
        use std::io::Write;
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        file.write_all(&bytes)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    })
}
