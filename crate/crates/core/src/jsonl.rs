//! Line-delimited JSON helpers.

use std::io::{BufRead, BufReader, Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub fn write<T: Serialize, W: Write>(items: &[T], mut sink: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut sink, item)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}

/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn read<T: DeserializeOwned, R: Read>(source: R) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| JsonlError::Parse {
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
