//! Fixture corpus: a manifest of documents, each with an input text, a topic
//! and a replay transcript.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{load_replay, MissingPolicy, ReplayBackend, ReplayError};
use crate::pipeline::{process_document, DocumentResult, InputError, Mode, PipelineConfig};
use crate::prompts::PromptCatalog;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{id}: {source}")]
    Replay {
        id: String,
        #[source]
        source: ReplayError,
    },
    #[error("{id}: {source}")]
    Input {
        id: String,
        #[source]
        source: InputError,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub key: String,
    pub topic: String,
    pub input: PathBuf,
    pub replay: PathBuf,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub published_results: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_note: Option<String>,
    #[serde(default)]
    pub augmentation: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub entries: Vec<CorpusEntry>,
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl Corpus {
    /// Load `manifest.json` from `root`. Entry paths are relative to `root`.
    pub fn load(root: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let root = root.as_ref().to_path_buf();
        let path = root.join("manifest.json");
        let entries: Vec<CorpusEntry> =
            serde_json::from_str(&read(&path)?).map_err(|e| CorpusError::Manifest {
                path: path.clone(),
                message: e.to_string(),
            })?;
        Ok(Self { root, entries })
    }

    pub fn get(&self, key_or_id: &str) -> Option<&CorpusEntry> {
        self.entries
            .iter()
            .find(|e| e.key == key_or_id || e.id == key_or_id)
    }

    pub fn input_path(&self, entry: &CorpusEntry) -> PathBuf {
        self.root.join(&entry.input)
    }

    pub fn replay_path(&self, entry: &CorpusEntry) -> PathBuf {
        self.root.join(&entry.replay)
    }

    pub fn read_input(&self, entry: &CorpusEntry) -> Result<String, CorpusError> {
        read(&self.input_path(entry))
    }

    /// Replay one entry in its manifest mode with misses treated as errors.
    pub fn replay(
        &self,
        entry: &CorpusEntry,
        catalog: &PromptCatalog,
    ) -> Result<DocumentResult, CorpusError> {
        self.replay_with(entry, catalog, entry.mode)
    }

    pub fn replay_with(
        &self,
        entry: &CorpusEntry,
        catalog: &PromptCatalog,
        mode: Mode,
    ) -> Result<DocumentResult, CorpusError> {
        let text = self.read_input(entry)?;
        let table = load_replay(self.replay_path(entry)).map_err(|source| CorpusError::Replay {
            id: entry.id.clone(),
            source,
        })?;
        let backend = ReplayBackend::new(table, MissingPolicy::Error, catalog.clone());
        let config = PipelineConfig {
            mode,
            ..PipelineConfig::default()
        };
        process_document(&text, &entry.topic, &backend, catalog, &config).map_err(|source| {
            CorpusError::Input {
                id: entry.id.clone(),
                source,
            }
        })
    }
}
