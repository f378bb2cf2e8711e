//! Text-to-network extraction driven by a chat model.
//!
//! A document is decomposed into simple sentences, filtered by a key topic,
//! reduced to subject/verb/object triples and assembled into a network of
//! subject and object containers joined by action links.

pub mod backend;
pub mod batch;
pub mod corpus;
pub mod eval;
pub mod network;
pub mod payload;
pub mod pipeline;
pub mod prompts;

pub use backend::{BackendDescriptor, BackendKind, ChatBackend, ChatRequest, MissingPolicy};
pub use network::{ModelFile, TopicNetwork};
pub use pipeline::{process_document, DocumentResult, Mode, PipelineConfig};
pub use prompts::{PromptCatalog, PromptKind};
