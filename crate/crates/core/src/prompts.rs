//! System-prompt catalog.
//!
//! The eight templates live in `data/prompts.jsonl` (one record per kind) so
//! that prompt text can be compared against fixtures or tuned without a
//! rebuild. The copy compiled into the binary is only the default; callers
//! may load a replacement file with [`PromptCatalog::from_path`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::payload::Schema;

/// Placeholder substituted with the key topic in the topic-check template.
pub const TOPIC_PLACEHOLDER: &str = "{** TOPIC **}";

const BUILTIN_CATALOG: &str = include_str!("../data/prompts.jsonl");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PromptKind {
    MultiClauseCheck,
    ParagraphSplit,
    ComplexityCheck,
    ComplexSplit,
    TopicCheck,
    SvoExtract,
    SubjectListParse,
    ObjectListParse,
}

impl PromptKind {
    pub const ALL: [PromptKind; 8] = [
        PromptKind::MultiClauseCheck,
        PromptKind::ParagraphSplit,
        PromptKind::ComplexityCheck,
        PromptKind::ComplexSplit,
        PromptKind::TopicCheck,
        PromptKind::SvoExtract,
        PromptKind::SubjectListParse,
        PromptKind::ObjectListParse,
    ];

    pub fn requires_topic(self) -> bool {
        self == PromptKind::TopicCheck
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Expected response shape for each kind.
pub fn schema_of(kind: PromptKind) -> Schema {
    match kind {
        PromptKind::MultiClauseCheck | PromptKind::ComplexityCheck | PromptKind::TopicCheck => {
            Schema::YesNoObject
        }
        PromptKind::ParagraphSplit
        | PromptKind::ComplexSplit
        | PromptKind::SubjectListParse
        | PromptKind::ObjectListParse => Schema::StringArray,
        PromptKind::SvoExtract => Schema::SvoObject,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub kind: PromptKind,
    pub topic: Option<String>,
    pub text: String,
    pub schema: Schema,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("prompt kind {0} requires a topic")]
    MissingTopic(PromptKind),
    #[error("prompt kind {0} does not take a topic")]
    UnexpectedTopic(PromptKind),
    #[error("prompt catalog line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("prompt catalog has no template for {0}")]
    MissingKind(PromptKind),
    #[error("prompt catalog lists {0} more than once")]
    DuplicateKind(PromptKind),
    #[error("reading prompt catalog: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Deserialize)]
struct CatalogRecord {
    kind: PromptKind,
    schema: Schema,
    template: String,
}

/// The eight templates, immutable once loaded.
#[derive(Debug, Clone)]
pub struct PromptCatalog {
    templates: BTreeMap<PromptKind, String>,
}

impl Default for PromptCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptCatalog {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_CATALOG).expect("bundled prompt catalog is valid")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut templates = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: CatalogRecord =
                serde_json::from_str(line).map_err(|e| CatalogError::Parse {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            if record.schema != schema_of(record.kind) {
                return Err(CatalogError::Parse {
                    line: idx + 1,
                    message: format!(
                        "{} must use schema {}, found {}",
                        record.kind,
                        schema_of(record.kind),
                        record.schema
                    ),
                });
            }
            let has_placeholder = record.template.contains(TOPIC_PLACEHOLDER);
            if has_placeholder != record.kind.requires_topic() {
                return Err(CatalogError::Parse {
                    line: idx + 1,
                    message: format!("{} placeholder use is wrong", record.kind),
                });
            }
            if templates.insert(record.kind, record.template).is_some() {
                return Err(CatalogError::DuplicateKind(record.kind));
            }
        }
        for kind in PromptKind::ALL {
            if !templates.contains_key(&kind) {
                return Err(CatalogError::MissingKind(kind));
            }
        }
        Ok(Self { templates })
    }

    /// Raw template text, placeholder included.
    pub fn template(&self, kind: PromptKind) -> &str {
        &self.templates[&kind]
    }

    pub fn render(
        &self,
        kind: PromptKind,
        topic: Option<&str>,
    ) -> Result<RenderedPrompt, CatalogError> {
        let template = self.template(kind);
        let text = match (kind.requires_topic(), topic) {
            (true, Some(t)) if !t.trim().is_empty() => template.replace(TOPIC_PLACEHOLDER, t),
            (true, _) => return Err(CatalogError::MissingTopic(kind)),
            (false, Some(_)) => return Err(CatalogError::UnexpectedTopic(kind)),
            (false, None) => template.to_string(),
        };
        Ok(RenderedPrompt {
            kind,
            topic: topic.map(str::to_string),
            text,
            schema: schema_of(kind),
        })
    }

    /// Identify which template produced `system_prompt`, recovering the topic
    /// for topic checks.
    pub fn classify(&self, system_prompt: &str) -> Option<(PromptKind, Option<String>)> {
        for (kind, template) in &self.templates {
            if !kind.requires_topic() {
                if template == system_prompt {
                    return Some((*kind, None));
                }
                continue;
            }
            let (head, tail) = template.split_once(TOPIC_PLACEHOLDER)?;
            if system_prompt.len() > head.len() + tail.len()
                && system_prompt.starts_with(head)
                && system_prompt.ends_with(tail)
            {
                let topic = &system_prompt[head.len()..system_prompt.len() - tail.len()];
                return Some((*kind, Some(topic.to_string())));
            }
        }
        None
    }
}
