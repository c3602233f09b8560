use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::classifiers::{Classifier, HeadKind};
use crate::detectors::{FusionNorm, UnsupervisedBundle};
use crate::features::WindowConfig;
use crate::fsutil::atomic_write;

pub const ARTIFACT_VERSION: u32 = 1;
pub const UNSUPERVISED_KIND: &str = "unsupervised";
pub const HEAD_KIND: &str = "head";

/// Versioned JSON wrapper around a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub version: u32,
    pub kind: String,
    pub seed: u64,
    pub payload: T,
}

impl<T: Serialize + DeserializeOwned> Artifact<T> {
    pub fn new(kind: &str, seed: u64, payload: T) -> Self {
        Self { version: ARTIFACT_VERSION, kind: kind.to_string(), seed, payload }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(atomic_write(path, serde_json::to_string(self)?.as_bytes())?)
    }

    /// Loads an artifact and checks its version and kind.
    pub fn load(path: &Path, kind: &str) -> Result<Self> {
        let a: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if a.version != ARTIFACT_VERSION || a.kind != kind {
            return Err(EvalError::ArtifactMismatch(format!(
                "{} holds {} v{}, expected {kind} v{ARTIFACT_VERSION}",
                path.display(),
                a.kind,
                a.version
            )));
        }
        Ok(a)
    }
}

/// The unsupervised scorers plus the fusion normalization fitted on their
/// training-split scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnsupervisedModel {
    pub bundle: UnsupervisedBundle,
    pub norm: FusionNorm,
    pub window: WindowConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadArtifact {
    pub head: HeadKind,
    pub classifier: Classifier,
    pub norm: FusionNorm,
}

/// Where an emitted result came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub package: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub notes: Vec<String>,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config,
            notes: Vec::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

/// Rows that can be written as CSV.
pub trait CsvRecord {
    fn header() -> &'static str;
    fn fields(&self) -> String;
}

pub fn to_csv<R: CsvRecord>(rows: &[R]) -> String {
    let mut out = String::from(R::header());
    out.push('\n');
    for r in rows {
        out.push_str(&r.fields());
        out.push('\n');
    }
    out
}

/// Formats an optional value, leaving the cell empty when absent.
pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes `<stem>.csv` and `<stem>.json` (results plus provenance)
/// atomically into `dir` and returns both paths.
pub fn write_results<R: CsvRecord + Serialize>(dir: &Path, stem: &str, rows: &[R], prov: &Provenance) -> Result<[PathBuf; 2]> {
    let csv = dir.join(format!("{stem}.csv"));
    let json = dir.join(format!("{stem}.json"));
    atomic_write(&csv, to_csv(rows).as_bytes())?;
    let doc = serde_json::json!({ "provenance": prov, "results": rows });
    atomic_write(&json, serde_json::to_string_pretty(&doc)?.as_bytes())?;
    Ok([csv, json])
}

/// Writes a JSON document with provenance.
pub fn write_json<T: Serialize>(path: &Path, value: &T, prov: &Provenance) -> Result<()> {
    let doc = serde_json::json!({ "provenance": prov, "results": value });
    Ok(atomic_write(path, serde_json::to_string_pretty(&doc)?.as_bytes())?)
}
