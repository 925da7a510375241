use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Provenance block attached to every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// SHA-256 of the raw config file, when one was read.
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
}

impl Metadata {
    pub fn new(command: &'static str, config: Option<&[u8]>, seed: Option<u64>) -> Self {
        Self {
            tool: "podlb",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_sha256: config.map(|bytes| hex::encode(Sha256::digest(bytes))),
            seed,
        }
    }
}

/// Files produced by one command, held in memory until the command succeeds.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn json<T: Serialize>(&mut self, name: &str, meta: &Metadata, result: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            metadata: &'a Metadata,
            result: &'a T,
        }
        let mut text = serde_json::to_string_pretty(&Doc { metadata: meta, result })
            .map_err(|e| CliError::Io(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.files.push((name.to_string(), text.into_bytes()));
        Ok(())
    }

    pub fn csv(&mut self, name: &str, meta: &Metadata, table: Csv) {
        let header = serde_json::to_string(meta).expect("metadata serializes");
        let mut text = format!("# {header}\n");
        text.push_str(&table.text);
        self.files.push((name.to_string(), text.into_bytes()));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every file through a temporary name and renames it into place.
    pub fn write_all(&self, dir: &Path) -> Result<(), CliError> {
        let io = |what: &str, e: std::io::Error| CliError::Io(format!("{what}: {e}"));
        fs::create_dir_all(dir).map_err(|e| io(&dir.display().to_string(), e))?;
        for (name, bytes) in &self.files {
            let tmp = dir.join(format!(".{name}.partial"));
            fs::write(&tmp, bytes).map_err(|e| io(&tmp.display().to_string(), e))?;
            fs::rename(&tmp, dir.join(name)).map_err(|e| io(name, e))?;
        }
        Ok(())
    }
}

/// Float with 17 significant digits.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV table built row by row.
pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        let text = columns.iter().map(|c| c.as_ref()).collect::<Vec<_>>().join(",") + "\n";
        Self { text, width: columns.len() }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.width);
        for (k, cell) in cells.iter().enumerate() {
            if k > 0 {
                self.text.push(',');
            }
            if cell.contains([',', '"', '\n']) {
                let _ = write!(self.text, "\"{}\"", cell.replace('"', "\"\""));
            } else {
                self.text.push_str(cell);
            }
        }
        self.text.push('\n');
    }
}
