//! Run reports and the manifest of files a run wrote.

use std::path::Path;

use qfc_link::analysis::FitReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::scenario::Scenario;

pub const TOOL: &str = "qfc-link";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileEntry {
    pub fn of(name: &str, contents: &[u8]) -> Self {
        FileEntry {
            name: name.to_string(),
            bytes: contents.len() as u64,
            sha256: hex::encode(Sha256::digest(contents)),
        }
    }
}

/// Everything one subcommand produced. Contains no timestamps or absolute
/// paths, so identical inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    pub derived: serde_json::Map<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fits: Vec<FitReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<FileEntry>,
    pub files: Vec<FileEntry>,
}

impl Report {
    pub fn new(command: &str, seed: u64, scenario: Option<Scenario>) -> Self {
        Report {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            scenario,
            derived: serde_json::Map::new(),
            fits: Vec::new(),
            inputs: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("report values serialize");
        self.derived.insert(key.to_string(), v);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Writes `contents` to `dir/name`, creating `dir`, and returns its manifest entry.
pub fn write_file(dir: &Path, name: &str, contents: &[u8]) -> CliResult<FileEntry> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(FileEntry::of(name, contents))
}

/// Writes the report itself as `dir/name`. The report is not listed in its
/// own manifest.
pub fn write_report(dir: &Path, name: &str, report: &Report) -> CliResult<()> {
    write_file(dir, name, report.to_json().as_bytes()).map(|_| ())
}
