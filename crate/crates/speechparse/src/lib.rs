//! File formats, model checkpoints and the `speechparse` command line on top
//! of `speechparse-core`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod formats;

pub use cli::{run, run_with};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Core {
        path: PathBuf,
        source: speechparse_core::Error,
    },
    #[error(transparent)]
    Model(#[from] speechparse_core::Error),
}

impl Error {
    /// The core error underneath, if any.
    pub fn core(&self) -> Option<&speechparse_core::Error> {
        match self {
            Error::Core { source, .. } | Error::Model(source) => Some(source),
            Error::Io { .. } => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads `path` and parses it, attaching the path to any format error.
pub fn parse_file<T>(path: &Path, parse: impl FnOnce(&str) -> speechparse_core::Result<T>) -> Result<T> {
    let text = read_file(path)?;
    parse(&text).map_err(|source| Error::Core {
        path: path.to_path_buf(),
        source,
    })
}
