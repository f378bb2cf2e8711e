use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest};
use crate::payload::{extract_payload, Payload, PayloadError, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseOutcome {
    Ok,
    Malformed,
    BackendFailure,
}

/// One recorded round trip. Also the replay file record format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub seq: u64,
    pub timestamp: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub raw_response: String,
    pub parse_outcome: ParseOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occurrence: Option<u32>,
}

/// Per-document conversation state: the transcript recorder plus the
/// occurrence counter that replay lookups need. Single owner, never shared.
pub struct Session<'b> {
    backend: &'b dyn ChatBackend,
    exchanges: Vec<ChatExchange>,
    asked: HashMap<ChatRequest, u32>,
}

impl<'b> Session<'b> {
    pub fn new(backend: &'b dyn ChatBackend) -> Self {
        Self {
            backend,
            exchanges: Vec::new(),
            asked: HashMap::new(),
        }
    }

    /// Send one request, record it, and try to extract a payload.
    /// The outer error is a transport failure; the inner one a parse failure.
    pub fn ask(
        &mut self,
        request: &ChatRequest,
        schema: Schema,
    ) -> Result<Result<Payload, PayloadError>, BackendError> {
        let occurrence = {
            let n = self.asked.entry(request.clone()).or_insert(0);
            *n += 1;
            *n
        };
        let reply = self.backend.chat(request, occurrence);
        let (raw, outcome, parsed) = match reply {
            Ok(raw) => {
                let parsed = extract_payload(&raw, schema);
                let outcome = if parsed.is_ok() {
                    ParseOutcome::Ok
                } else {
                    ParseOutcome::Malformed
                };
                (raw, outcome, Ok(parsed))
            }
            Err(e) => (String::new(), ParseOutcome::BackendFailure, Err(e)),
        };
        self.exchanges.push(ChatExchange {
            seq: self.exchanges.len() as u64 + 1,
            timestamp: chrono::Local::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, false),
            system_prompt: request.system_prompt.clone(),
            user_prompt: request.user_prompt.clone(),
            raw_response: raw,
            parse_outcome: outcome,
            occurrence: (occurrence > 1).then_some(occurrence),
        });
        parsed
    }

    pub fn exchanges(&self) -> &[ChatExchange] {
        &self.exchanges
    }

    pub fn into_transcript(self) -> Vec<ChatExchange> {
        self.exchanges
    }
}

pub fn save_transcript(exchanges: &[ChatExchange], path: impl AsRef<Path>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for ex in exchanges {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn load_transcript(path: impl AsRef<Path>) -> io::Result<Vec<ChatExchange>> {
    fs::read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;
    impl ChatBackend for Echo {
        fn chat(&self, r: &ChatRequest, occurrence: u32) -> Result<String, BackendError> {
            if r.user_prompt == "fail" {
                return Err(BackendError::Failure("down".into()));
            }
            Ok(format!("[\"{}\", \"{occurrence}\"]", r.user_prompt))
        }
    }

    #[test]
    fn seq_is_dense_and_occurrences_count() {
        let mut s = Session::new(&Echo);
        let a = ChatRequest::new("sys", "a").unwrap();
        let b = ChatRequest::new("sys", "b").unwrap();
        s.ask(&a, Schema::StringArray).unwrap().unwrap();
        s.ask(&b, Schema::StringArray).unwrap().unwrap();
        let again = s.ask(&a, Schema::StringArray).unwrap().unwrap();
        assert_eq!(again, Payload::Items(vec!["a".into(), "2".into()]));
        let seqs: Vec<u64> = s.exchanges().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![1, 2, 3]);
        assert_eq!(s.exchanges()[0].occurrence, None);
        assert_eq!(s.exchanges()[2].occurrence, Some(2));
    }

    #[test]
    fn outcomes_are_recorded() {
        let mut s = Session::new(&Echo);
        let r = ChatRequest::new("sys", "a").unwrap();
        assert!(s.ask(&r, Schema::SvoObject).unwrap().is_err());
        assert!(s
            .ask(
                &ChatRequest::new("sys", "fail").unwrap(),
                Schema::StringArray
            )
            .is_err());
        let t = s.into_transcript();
        assert_eq!(t[0].parse_outcome, ParseOutcome::Malformed);
        assert_eq!(t[1].parse_outcome, ParseOutcome::BackendFailure);
        assert_eq!(t[1].raw_response, "");
    }

    #[test]
    fn save_load_round_trip() {
        let mut s = Session::new(&Echo);
        s.ask(&ChatRequest::new("sys", "x").unwrap(), Schema::StringArray)
            .unwrap()
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        save_transcript(s.exchanges(), &path).unwrap();
        assert_eq!(load_transcript(&path).unwrap(), s.exchanges());
    }
}
