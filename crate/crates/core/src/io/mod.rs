//! File formats: MARF binary tensors, the structured text config format,
//! and PNG import/export.

pub mod config;
pub mod marf;
pub mod png;

use std::path::Path;

use crate::error::Result;

/// Write a file atomically: write to a `.tmp` sibling, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
