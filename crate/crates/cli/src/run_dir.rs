use std::path::{Path, PathBuf};

use isomer::{Error, Result};
use serde::Serialize;

/// Output directory of one command plus the manifest describing it.
pub struct RunDir {
    root: PathBuf,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a C,
    outputs: &'a [String],
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    /// Path for an artifact, creating parent directories and recording it.
    pub fn artifact(&mut self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let rel = rel.as_ref();
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        self.outputs.push(rel.to_string_lossy().replace('\\', "/"));
        Ok(path)
    }

    pub fn finish<C: Serialize>(mut self, command: &str, config: &C) -> Result<()> {
        self.outputs.sort();
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            outputs: &self.outputs,
        };
        let path = self.root.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
            .map_err(|e| io_err(&path, e))
    }
}

pub fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
