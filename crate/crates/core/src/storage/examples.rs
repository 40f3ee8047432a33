use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::storage::atomic_write;
use crate::types::QAExample;

/// Reads a JSON Lines file of [`QAExample`]s. Blank lines are skipped.
pub fn read_examples(path: &Path) -> Result<Vec<QAExample>> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let example: QAExample = serde_json::from_str(&line).map_err(|e| {
            Error::InvalidManifest(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        example.validate()?;
        out.push(example);
    }
    Ok(out)
}

pub fn write_examples(path: &Path, examples: &[QAExample]) -> Result<()> {
    atomic_write(path, |file| {
        let mut buf = Vec::new();
        for ex in examples {
            serde_json::to_writer(&mut buf, ex)?;
            buf.push(b'\n');
        }
        file.write_all(&buf)
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    })
}
