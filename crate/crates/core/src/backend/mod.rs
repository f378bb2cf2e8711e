//! Chat backends: live HTTP, transcript replay and a deterministic rule set.

mod live;
mod replay;
mod scripted;
mod transcript;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompts::PromptCatalog;

pub use live::LiveBackend;
pub use replay::{load_replay, ReplayBackend, ReplayError, ReplayTable};
pub use scripted::ScriptedBackend;
pub use transcript::{load_transcript, save_transcript, ChatExchange, ParseOutcome, Session};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
}

impl ChatRequest {
    pub fn new(
        system_prompt: impl Into<String>,
        user_prompt: impl Into<String>,
    ) -> Result<Self, BackendError> {
        let req = Self {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
        };
        if req.system_prompt.trim().is_empty() || req.user_prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest(
                "system and user prompts must be non-empty".into(),
            ));
        }
        Ok(req)
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend failure: {0}")]
    Failure(String),
    #[error("no recorded response for request (occurrence {occurrence}): system={system_prompt:?} user={user_prompt:?}")]
    ReplayMiss {
        system_prompt: String,
        user_prompt: String,
        occurrence: u32,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

/// A chat endpoint. `occurrence` is 1 for the first time a given request is
/// asked within one document run, 2 for the second, and so on; only the
/// replay backend looks at it.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest, occurrence: u32) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Live,
    Replay,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Error,
    FallbackRule,
}

#[derive(Debug, Clone)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub timeout: Duration,
    pub max_retries: u32,
    pub replay_source: Option<PathBuf>,
    pub missing_policy: MissingPolicy,
}

impl BackendDescriptor {
    fn base(kind: BackendKind) -> Self {
        Self {
            kind,
            endpoint: None,
            model_name: None,
            api_key: None,
            temperature: 0.0,
            timeout: Duration::from_secs(60),
            max_retries: 2,
            replay_source: None,
            missing_policy: MissingPolicy::Error,
        }
    }

    pub fn live(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint: Some(endpoint.into()),
            model_name: Some(model_name.into()),
            ..Self::base(BackendKind::Live)
        }
    }

    pub fn replay(path: impl Into<PathBuf>, missing_policy: MissingPolicy) -> Self {
        Self {
            replay_source: Some(path.into()),
            missing_policy,
            ..Self::base(BackendKind::Replay)
        }
    }

    pub fn scripted() -> Self {
        Self::base(BackendKind::Scripted)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::Config(
                "temperature must be non-negative".into(),
            ));
        }
        match self.kind {
            BackendKind::Live => {
                if self.endpoint.as_deref().is_none_or(str::is_empty) {
                    return Err(BackendError::Config(
                        "live backend needs an endpoint".into(),
                    ));
                }
                if self.model_name.as_deref().is_none_or(str::is_empty) {
                    return Err(BackendError::Config(
                        "live backend needs a model name".into(),
                    ));
                }
            }
            BackendKind::Replay => {
                if self.replay_source.is_none() {
                    return Err(BackendError::Config(
                        "replay backend needs a replay file".into(),
                    ));
                }
            }
            BackendKind::Scripted => {}
        }
        Ok(())
    }

    /// Build the backend this descriptor names. Replay files are loaded here.
    pub fn connect(&self, catalog: &PromptCatalog) -> Result<Arc<dyn ChatBackend>, BackendError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Live => Arc::new(LiveBackend::new(self)?),
            BackendKind::Replay => {
                let path = self.replay_source.as_ref().expect("validated");
                let table = load_replay(path)?;
                Arc::new(ReplayBackend::new(
                    table,
                    self.missing_policy,
                    catalog.clone(),
                ))
            }
            BackendKind::Scripted => Arc::new(ScriptedBackend::new(catalog.clone())),
        })
    }
}
