//! File formats, scene configuration, synthetic observations and run
//! artifacts.

mod artifact;
mod config;
mod obj;
mod observations;
mod ply;
mod synth;
mod tables;

pub use artifact::*;
pub use config::*;
pub use obj::*;
pub use observations::*;
pub use ply::*;
pub use synth::*;
pub use tables::*;

use std::path::Path;

use crate::error::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Finite `f64` token or a parse error at `line`.
fn number(path: &Path, line: usize, tok: &str) -> Result<f64> {
    let x: f64 = tok
        .parse()
        .map_err(|_| Error::parse(path, line, format!("expected a number, found '{tok}'")))?;
    if !x.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite value '{tok}'")));
    }
    Ok(x)
}
