//! Artifact sink: atomic writes, digests, CSV assembly and the run
//! manifest.
//!
//! Files land under one output directory. Each is written to a
//! `<name>.partial` sibling first and renamed into place only when its
//! contents are complete, so a crashed run never leaves an unflagged
//! partial artifact. Every write records a SHA-256 digest; the manifest
//! collects them so a re-run can be compared byte for byte.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::PathBuf;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// One finalized artifact.
#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Everything a run needs to be replayed and checked: the argument
/// vector, input digests, seeds, versions and the artifact digests.
/// Re-running the same command with the same seed reproduces every
/// listed digest exactly (reductions are fixed-order, see `mme_core::exec`).
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub subcommand: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub format: String,
    pub config_digests: BTreeMap<String, String>,
    pub versions: BTreeMap<String, String>,
    pub wall_time_ms: u128,
    pub outputs: Vec<OutputRecord>,
}

/// Output directory handle implementing the `.partial` rename protocol.
pub struct OutDir {
    dir: PathBuf,
    records: Vec<OutputRecord>,
    config_digests: BTreeMap<String, String>,
}

impl OutDir {
    pub fn create(dir: PathBuf) -> io::Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            records: Vec::new(),
            config_digests: BTreeMap::new(),
        })
    }

    /// Records the digest of an input document (table file, renewal spec)
    /// for the manifest.
    pub fn register_input(&mut self, name: &str, content: &[u8]) {
        self.config_digests
            .insert(name.to_string(), sha256_hex(content));
    }

    /// Writes an artifact atomically and records its digest. Names are
    /// flat; subdirectories would complicate the rename protocol for no
    /// benefit.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<PathBuf> {
        assert!(
            !name.contains(['/', '\\']),
            "artifact names must not contain path separators"
        );
        let partial = self.dir.join(format!("{name}.partial"));
        fs::write(&partial, bytes)?;
        let path = self.dir.join(name);
        fs::rename(&partial, &path)?;
        self.records.push(OutputRecord {
            name: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    /// Finalizes the run: writes `manifest.json` (itself via the partial
    /// protocol) listing every artifact written so far.
    pub fn finish(
        mut self,
        command: Vec<String>,
        subcommand: &str,
        seed: u64,
        threads: Option<usize>,
        format: &str,
        wall_time_ms: u128,
    ) -> io::Result<PathBuf> {
        let mut versions = BTreeMap::new();
        versions.insert("mme-core".to_string(), mme_core::VERSION.to_string());
        versions.insert(
            "mme-cli".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        );
        let manifest = RunManifest {
            command,
            subcommand: subcommand.to_string(),
            seed,
            threads,
            format: format.to_string(),
            config_digests: std::mem::take(&mut self.config_digests),
            versions,
            wall_time_ms,
            outputs: std::mem::take(&mut self.records),
        };
        let body = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        self.write("manifest.json", &body)
    }
}

/// CSV assembler: exactly one header row, fixed column count, floats in
/// shortest round-trip form so re-parsing loses nothing.
pub struct Csv {
    buf: String,
    cols: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Self {
            buf,
            cols: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        assert!(
            fields.len() == self.cols,
            "row has {} fields, header has {}",
            fields.len(),
            self.cols
        );
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf.into_bytes()
    }
}

/// Shorthand for building a CSV row out of mixed displayable fields.
#[macro_export]
macro_rules! csv_row {
    ($csv:expr, $($field:expr),+ $(,)?) => {
        $csv.row(&[$(format!("{}", $field)),+])
    };
}
