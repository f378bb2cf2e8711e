use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::{BackendError, ChatBackend, ChatRequest, MissingPolicy, ParseOutcome, ScriptedBackend};
use crate::prompts::PromptCatalog;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("reading replay file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("replay line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("replay line {line}: conflicting response for a request already recorded on line {first_line}")]
    Conflict { line: usize, first_line: usize },
}

#[derive(Deserialize)]
struct ReplayRecord {
    system_prompt: String,
    user_prompt: String,
    raw_response: String,
    #[serde(default)]
    parse_outcome: Option<ParseOutcome>,
    #[serde(default)]
    occurrence: Option<u32>,
}

#[derive(Debug, Clone)]
struct Recorded {
    response: String,
    line: usize,
}

/// Responses keyed by the exact (system prompt, user prompt) bytes. A key may
/// carry several responses distinguished by occurrence number.
#[derive(Debug, Clone, Default)]
pub struct ReplayTable {
    entries: HashMap<ChatRequest, BTreeMap<u32, Recorded>>,
}

impl ReplayTable {
    pub fn parse(text: &str) -> Result<Self, ReplayError> {
        let mut table = Self::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ReplayRecord = serde_json::from_str(line).map_err(|e| ReplayError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if rec.parse_outcome == Some(ParseOutcome::BackendFailure) {
                continue;
            }
            let occurrence = rec.occurrence.unwrap_or(1);
            if occurrence == 0 {
                return Err(ReplayError::Parse {
                    line: line_no,
                    message: "occurrence must be at least 1".into(),
                });
            }
            let key = ChatRequest {
                system_prompt: rec.system_prompt,
                user_prompt: rec.user_prompt,
            };
            let slot = table.entries.entry(key).or_default();
            match slot.get(&occurrence) {
                Some(prev) if prev.response != rec.raw_response => {
                    return Err(ReplayError::Conflict {
                        line: line_no,
                        first_line: prev.line,
                    })
                }
                Some(_) => {}
                None => {
                    slot.insert(
                        occurrence,
                        Recorded {
                            response: rec.raw_response,
                            line: line_no,
                        },
                    );
                }
            }
        }
        Ok(table)
    }

    pub fn lookup(&self, request: &ChatRequest, occurrence: u32) -> Option<&str> {
        self.entries
            .get(request)?
            .range(..=occurrence.max(1))
            .next_back()
            .map(|(_, r)| r.response.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn load_replay(path: impl AsRef<Path>) -> Result<ReplayTable, ReplayError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ReplayError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ReplayTable::parse(&text)
}

pub struct ReplayBackend {
    table: ReplayTable,
    policy: MissingPolicy,
    fallback: ScriptedBackend,
}

impl ReplayBackend {
    pub fn new(table: ReplayTable, policy: MissingPolicy, catalog: PromptCatalog) -> Self {
        Self {
            table,
            policy,
            fallback: ScriptedBackend::new(catalog),
        }
    }
}

impl ChatBackend for ReplayBackend {
    fn chat(&self, request: &ChatRequest, occurrence: u32) -> Result<String, BackendError> {
        if let Some(hit) = self.table.lookup(request, occurrence) {
            return Ok(hit.to_string());
        }
        match self.policy {
            MissingPolicy::FallbackRule => self.fallback.chat(request, occurrence),
            MissingPolicy::Error => Err(BackendError::ReplayMiss {
                system_prompt: request.system_prompt.clone(),
                user_prompt: request.user_prompt.clone(),
                occurrence,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{save_transcript, ChatExchange};

    fn line(sys: &str, user: &str, resp: &str, occ: Option<u32>) -> String {
        let mut v = serde_json::json!({
            "seq": 1, "timestamp": "t", "system_prompt": sys, "user_prompt": user,
            "raw_response": resp, "parse_outcome": "ok"
        });
        if let Some(o) = occ {
            v["occurrence"] = o.into();
        }
        v.to_string()
    }

    fn req(sys: &str, user: &str) -> ChatRequest {
        ChatRequest::new(sys, user).unwrap()
    }

    #[test]
    fn exact_byte_lookup() {
        let t = ReplayTable::parse(&line("S", "Tom", "[\"Tom\"]", None)).unwrap();
        assert_eq!(t.lookup(&req("S", "Tom"), 1), Some("[\"Tom\"]"));
        assert_eq!(t.lookup(&req("S", "Tom "), 1), None);
        assert_eq!(t.lookup(&req("S", "tom"), 1), None);
    }

    #[test]
    fn occurrences_select_response() {
        let text = [
            line("S", "I", "[]", None),
            line("S", "I", "[ \"I\" ]", Some(2)),
        ]
        .join("\n");
        let t = ReplayTable::parse(&text).unwrap();
        assert_eq!(t.lookup(&req("S", "I"), 1), Some("[]"));
        assert_eq!(t.lookup(&req("S", "I"), 2), Some("[ \"I\" ]"));
        assert_eq!(t.lookup(&req("S", "I"), 5), Some("[ \"I\" ]"));
    }

    #[test]
    fn conflicting_duplicate_names_line() {
        let text = [
            line("S", "a", "x", None),
            line("S", "b", "y", None),
            line("S", "a", "z", None),
        ]
        .join("\n");
        let err = ReplayTable::parse(&text).unwrap_err();
        assert!(matches!(
            err,
            ReplayError::Conflict {
                line: 3,
                first_line: 1
            }
        ));
        // identical duplicates are harmless
        let text = [line("S", "a", "x", None), line("S", "a", "x", None)].join("\n");
        assert_eq!(ReplayTable::parse(&text).unwrap().len(), 1);
    }

    #[test]
    fn corrupt_line_is_reported() {
        let text = format!("{}\n{{not json\n", line("S", "a", "x", None));
        let err = ReplayTable::parse(&text).unwrap_err();
        assert!(matches!(err, ReplayError::Parse { line: 2, .. }));
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn miss_policy() {
        let catalog = PromptCatalog::builtin();
        let backend = ReplayBackend::new(
            ReplayTable::default(),
            MissingPolicy::Error,
            catalog.clone(),
        );
        let r = req("S", "x");
        assert!(matches!(
            backend.chat(&r, 1),
            Err(BackendError::ReplayMiss { .. })
        ));

        let backend = ReplayBackend::new(
            ReplayTable::default(),
            MissingPolicy::FallbackRule,
            catalog.clone(),
        );
        let sys = catalog
            .render(crate::prompts::PromptKind::SubjectListParse, None)
            .unwrap()
            .text;
        let reply = backend.chat(&req(&sys, "Bob and Steve"), 1).unwrap();
        assert_eq!(
            crate::payload::extract_items(&reply).unwrap(),
            vec!["Bob", "Steve"]
        );
    }

    #[test]
    fn transcript_round_trip_preserves_lookups() {
        let exchanges = vec![
            ChatExchange {
                seq: 1,
                timestamp: "t".into(),
                system_prompt: "S".into(),
                user_prompt: "u".into(),
                raw_response: "one".into(),
                parse_outcome: ParseOutcome::Malformed,
                occurrence: None,
            },
            ChatExchange {
                seq: 2,
                timestamp: "t".into(),
                system_prompt: "S".into(),
                user_prompt: "u".into(),
                raw_response: "two".into(),
                parse_outcome: ParseOutcome::Ok,
                occurrence: Some(2),
            },
            ChatExchange {
                seq: 3,
                timestamp: "t".into(),
                system_prompt: "S".into(),
                user_prompt: "v".into(),
                raw_response: String::new(),
                parse_outcome: ParseOutcome::BackendFailure,
                occurrence: None,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        save_transcript(&exchanges, &path).unwrap();
        let t = load_replay(&path).unwrap();
        assert_eq!(t.lookup(&req("S", "u"), 1), Some("one"));
        assert_eq!(t.lookup(&req("S", "u"), 2), Some("two"));
        assert_eq!(t.lookup(&req("S", "v"), 1), None);
    }
}
