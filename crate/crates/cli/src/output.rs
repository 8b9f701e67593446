//! Output directory bookkeeping. Every file written through [`OutputDir`] is
//! listed in the manifest, which is written last.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use detect_core::seed::digest_hex;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub command: String,
    pub scenario_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch_sha256: Option<String>,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub status: String,
    pub files: Vec<FileEntry>,
}

pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: digest_hex(contents),
            bytes: contents.len(),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable output");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `manifest.json`; files are listed in name order.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<(), CliError> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        manifest.files = std::mem::take(&mut self.files);
        let mut text = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
        text.push('\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

/// Minimal CSV builder. Floats use Rust's shortest round-trip formatting.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, fields: &[Field<'_>]) {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match f {
                Field::Int(v) => write!(self.text, "{v}").unwrap(),
                Field::Float(v) => write!(self.text, "{v}").unwrap(),
                Field::Text(s) => self.text.push_str(s),
                Field::Empty => {}
            }
        }
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

pub enum Field<'a> {
    Int(u64),
    Float(f64),
    Text(&'a str),
    Empty,
}
