//! Corpus manifest: one line per file, `relative_path<TAB>label<TAB>role`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Whether a recording feeds the training or the testing set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Train => write!(f, "train"),
            Role::Test => write!(f, "test"),
        }
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Role::Train),
            "test" => Ok(Role::Test),
            other => Err(Error::Format(format!(
                "manifest role '{other}' is not 'train' or 'test'"
            ))),
        }
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub relative_path: PathBuf,
    pub device_label: u16,
    pub role: Role,
}

/// An ordered list of labelled recordings, rooted next to the manifest file.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Number of device classes implied by the labels (max label + 1).
    pub fn class_count(&self) -> usize {
        self.entries
            .iter()
            .map(|e| usize::from(e.device_label) + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn entries_with_role(&self, role: Role) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.role == role)
    }

    /// Serializes to the tab-separated format, LF line endings.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                e.relative_path.display(),
                e.device_label,
                e.role
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Manifest> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let path = parts
                .next()
                .filter(|p| !p.is_empty())
                .ok_or_else(|| Error::Format(format!("manifest line {}: no path", lineno + 1)))?;
            let label = parts
                .next()
                .ok_or_else(|| Error::Format(format!("manifest line {}: no label", lineno + 1)))?
                .parse::<u16>()
                .map_err(|e| Error::Format(format!("manifest line {}: {e}", lineno + 1)))?;
            let role = parts
                .next()
                .ok_or_else(|| Error::Format(format!("manifest line {}: no role", lineno + 1)))?
                .parse::<Role>()?;
            if parts.next().is_some() {
                return Err(Error::Format(format!(
                    "manifest line {}: more than three fields",
                    lineno + 1
                )));
            }
            entries.push(ManifestEntry {
                relative_path: PathBuf::from(path),
                device_label: label,
                role,
            });
        }
        Ok(Manifest { entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Resolves an entry's path against the manifest's directory.
    pub fn resolve(manifest_path: &Path, entry: &ManifestEntry) -> PathBuf {
        match manifest_path.parent() {
            Some(dir) => dir.join(&entry.relative_path),
            None => entry.relative_path.clone(),
        }
    }
}
