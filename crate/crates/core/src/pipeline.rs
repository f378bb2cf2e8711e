//! Document decomposition: clause check, sentence splitting, complexity
//! expansion, topic filter, SVO extraction and element enumeration.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatBackend, ChatExchange, ChatRequest, Session};
use crate::network::{ModelFile, TopicNetwork};
use crate::payload::{MalformedReason, Payload, PayloadError, SvoFields};
use crate::prompts::{PromptCatalog, PromptKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Strict,
    #[default]
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceOrigin {
    WholeInput,
    ParagraphSplit,
    ComplexSplit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceUnit {
    pub text: String,
    pub origin: SentenceOrigin,
    /// Index into [`DocumentResult::sentences`] of the unit this one was split from.
    pub parent_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SvoTriple {
    pub subject_phrase: String,
    pub object_phrase: String,
    pub action_verb: String,
    pub source: SentenceUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    MultiClause,
    ParagraphSplit,
    Complexity,
    ComplexSplit,
    TopicCheck,
    SvoExtract,
    SubjectParse,
    ObjectParse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Malformed,
    SchemaMismatch,
    NonEnumerableElement,
    BackendFailure,
    ReplayMiss,
    EmptyField,
}

/// What lenient mode did instead of the failed step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    SingleSentence,
    PunctuationSplit,
    AssumeSimple,
    KeepOriginal,
    DropSentence,
    DropTriple,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineError {
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence: Option<String>,
    pub cause: Cause,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<Fallback>,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {:?}: {}", self.cause, self.stage, self.detail)?;
        if let Some(s) = &self.sentence {
            write!(f, " [{s}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// Re-asks after a malformed or mismatched response.
    pub max_retries: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Lenient,
            max_retries: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DocumentResult {
    pub network: TopicNetwork,
    pub sentences: Vec<SentenceUnit>,
    pub triples: Vec<SvoTriple>,
    pub errors: Vec<PipelineError>,
    pub transcript: Vec<ChatExchange>,
    pub halted_early: bool,
}

impl DocumentResult {
    pub fn model_file(&self, id: Option<String>) -> ModelFile {
        ModelFile::new(id, &self.network, &self.errors, self.halted_early)
    }
}

#[derive(Debug, Error)]
pub enum InputError {
    #[error("document text is empty")]
    EmptyText,
    #[error("topic is empty")]
    EmptyTopic,
}

struct Failure {
    cause: Cause,
    detail: String,
}

impl From<BackendError> for Failure {
    fn from(e: BackendError) -> Self {
        let cause = match e {
            BackendError::ReplayMiss { .. } => Cause::ReplayMiss,
            _ => Cause::BackendFailure,
        };
        Failure {
            cause,
            detail: e.to_string(),
        }
    }
}

/// Signals that strict mode stopped the run.
struct Halt;

struct Run<'a> {
    catalog: &'a PromptCatalog,
    config: &'a PipelineConfig,
    topic: &'a str,
    session: Session<'a>,
    network: TopicNetwork,
    sentences: Vec<SentenceUnit>,
    triples: Vec<SvoTriple>,
    errors: Vec<PipelineError>,
}

impl<'a> Run<'a> {
    fn ask(&mut self, kind: PromptKind, user: &str) -> Result<Payload, Failure> {
        let topic = kind.requires_topic().then_some(self.topic);
        let prompt = self.catalog.render(kind, topic).map_err(|e| Failure {
            cause: Cause::Malformed,
            detail: e.to_string(),
        })?;
        let request = ChatRequest::new(prompt.text, user)?;
        let mut last: Option<PayloadError> = None;
        for _ in 0..=self.config.max_retries {
            match self.session.ask(&request, prompt.schema)? {
                Ok(payload) => return Ok(payload),
                Err(e) => last = Some(e),
            }
        }
        let err = last.expect("at least one attempt");
        let enumerating = matches!(
            kind,
            PromptKind::SubjectListParse | PromptKind::ObjectListParse
        );
        let cause = match &err {
            PayloadError::Malformed(MalformedReason::NoRegion) if enumerating => {
                Cause::NonEnumerableElement
            }
            PayloadError::SchemaMismatch { .. } if enumerating => Cause::NonEnumerableElement,
            PayloadError::SchemaMismatch { .. } => Cause::SchemaMismatch,
            PayloadError::Malformed(_) => Cause::Malformed,
        };
        Err(Failure {
            cause,
            detail: err.to_string(),
        })
    }

    /// Record a failure. Returns `Err(Halt)` in strict mode.
    fn fail(
        &mut self,
        stage: Stage,
        sentence: Option<&str>,
        failure: Failure,
        fallback: Fallback,
    ) -> Result<(), Halt> {
        let strict = self.config.mode == Mode::Strict;
        self.errors.push(PipelineError {
            stage,
            sentence: sentence.map(str::to_string),
            cause: failure.cause,
            detail: failure.detail,
            fallback: (!strict).then_some(fallback),
        });
        if strict {
            Err(Halt)
        } else {
            Ok(())
        }
    }

    fn yes_no(&mut self, kind: PromptKind, user: &str) -> Result<bool, Failure> {
        match self.ask(kind, user)? {
            Payload::YesNo(b) => Ok(b),
            _ => unreachable!("schema is yes/no"),
        }
    }

    fn items(&mut self, kind: PromptKind, user: &str) -> Result<Vec<String>, Failure> {
        match self.ask(kind, user)? {
            Payload::Items(v) => Ok(v
                .into_iter()
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()),
            _ => unreachable!("schema is a string array"),
        }
    }

    fn svo(&mut self, user: &str) -> Result<SvoFields, Failure> {
        match self.ask(PromptKind::SvoExtract, user)? {
            Payload::Svo(s) => Ok(s),
            _ => unreachable!("schema is svo"),
        }
    }

    fn push_unit(&mut self, text: &str, origin: SentenceOrigin, parent: Option<usize>) -> usize {
        self.sentences.push(SentenceUnit {
            text: text.trim().to_string(),
            origin,
            parent_index: parent,
        });
        self.sentences.len() - 1
    }

    fn run(&mut self, text: &str) -> Result<(), Halt> {
        let multi = match self.yes_no(PromptKind::MultiClauseCheck, text) {
            Ok(b) => b,
            Err(f) => {
                self.fail(Stage::MultiClause, None, f, Fallback::SingleSentence)?;
                false
            }
        };

        let mut main = Vec::new();
        if multi {
            let parts = match self.items(PromptKind::ParagraphSplit, text) {
                Ok(v) if !v.is_empty() => v,
                Ok(_) => {
                    let f = Failure {
                        cause: Cause::EmptyField,
                        detail: "paragraph split returned no sentences".into(),
                    };
                    self.fail(Stage::ParagraphSplit, None, f, Fallback::PunctuationSplit)?;
                    punctuation_split(text)
                }
                Err(f) => {
                    self.fail(Stage::ParagraphSplit, None, f, Fallback::PunctuationSplit)?;
                    punctuation_split(text)
                }
            };
            for p in parts {
                main.push(self.push_unit(&p, SentenceOrigin::ParagraphSplit, None));
            }
        } else {
            main.push(self.push_unit(text, SentenceOrigin::WholeInput, None));
        }

        // Expanded sentences wait until every original sentence is handled and
        // never see the complexity check again.
        let mut deferred = Vec::new();
        for idx in main {
            let sentence = self.sentences[idx].text.clone();
            let complex = match self.yes_no(PromptKind::ComplexityCheck, &sentence) {
                Ok(b) => b,
                Err(f) => {
                    self.fail(
                        Stage::Complexity,
                        Some(&sentence),
                        f,
                        Fallback::AssumeSimple,
                    )?;
                    false
                }
            };
            if !complex {
                self.process_simple(idx)?;
                continue;
            }
            match self.items(PromptKind::ComplexSplit, &sentence) {
                Ok(parts) if !parts.is_empty() => {
                    for p in parts {
                        deferred.push(self.push_unit(&p, SentenceOrigin::ComplexSplit, Some(idx)));
                    }
                }
                other => {
                    let f = other.err().unwrap_or(Failure {
                        cause: Cause::EmptyField,
                        detail: "complex split returned no sentences".into(),
                    });
                    self.fail(
                        Stage::ComplexSplit,
                        Some(&sentence),
                        f,
                        Fallback::KeepOriginal,
                    )?;
                    self.process_simple(idx)?;
                }
            }
        }
        for idx in deferred {
            self.process_simple(idx)?;
        }
        Ok(())
    }

    fn process_simple(&mut self, idx: usize) -> Result<(), Halt> {
        let unit = self.sentences[idx].clone();
        let s = unit.text.as_str();

        match self.yes_no(PromptKind::TopicCheck, s) {
            Ok(true) => {}
            Ok(false) => return Ok(()),
            Err(f) => return self.fail(Stage::TopicCheck, Some(s), f, Fallback::DropSentence),
        }

        let fields = match self.svo(s) {
            Ok(f) => f,
            Err(f) => return self.fail(Stage::SvoExtract, Some(s), f, Fallback::DropSentence),
        };
        let empty: Vec<&str> = [
            ("subject", &fields.subject),
            ("object", &fields.object),
            ("action", &fields.action),
        ]
        .iter()
        .filter(|(_, v)| v.trim().is_empty())
        .map(|(n, _)| *n)
        .collect();
        if !empty.is_empty() {
            let f = Failure {
                cause: Cause::EmptyField,
                detail: format!("empty {}", empty.join(", ")),
            };
            return self.fail(Stage::SvoExtract, Some(s), f, Fallback::DropSentence);
        }
        let triple = SvoTriple {
            subject_phrase: fields.subject.trim().to_string(),
            object_phrase: fields.object.trim().to_string(),
            action_verb: fields.action.trim().to_string(),
            source: unit.clone(),
        };
        self.triples.push(triple.clone());

        // Both sides are enumerated before anything is added, so a failure
        // on either side leaves the network untouched.
        let subjects = match self.items(PromptKind::SubjectListParse, &triple.subject_phrase) {
            Ok(v) => v,
            Err(f) => {
                let phrase = triple.subject_phrase.clone();
                return self.fail(Stage::SubjectParse, Some(&phrase), f, Fallback::DropTriple);
            }
        };
        let objects = match self.items(PromptKind::ObjectListParse, &triple.object_phrase) {
            Ok(v) => v,
            Err(f) => {
                let phrase = triple.object_phrase.clone();
                return self.fail(Stage::ObjectParse, Some(&phrase), f, Fallback::DropTriple);
            }
        };
        self.network
            .add_triple(&triple, &subjects, &objects)
            .expect("labels are non-empty and ids come from the network");
        Ok(())
    }
}

/// Split on sentence terminators followed by whitespace.
pub fn punctuation_split(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        let boundary =
            matches!(c, '.' | '!' | '?') && iter.peek().is_some_and(|(_, n)| n.is_whitespace());
        if boundary {
            let piece = text[start..i + c.len_utf8()].trim();
            if !piece.is_empty() {
                out.push(piece.to_string());
            }
            start = i + c.len_utf8();
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

pub fn process_document(
    text: &str,
    topic: &str,
    backend: &dyn ChatBackend,
    catalog: &PromptCatalog,
    config: &PipelineConfig,
) -> Result<DocumentResult, InputError> {
    let text = text.trim();
    let topic = topic.trim();
    if text.is_empty() {
        return Err(InputError::EmptyText);
    }
    if topic.is_empty() {
        return Err(InputError::EmptyTopic);
    }
    let mut run = Run {
        catalog,
        config,
        topic,
        session: Session::new(backend),
        network: TopicNetwork::new(topic),
        sentences: Vec::new(),
        triples: Vec::new(),
        errors: Vec::new(),
    };
    let halted_early = run.run(text).is_err();
    Ok(DocumentResult {
        network: run.network,
        sentences: run.sentences,
        triples: run.triples,
        errors: run.errors,
        transcript: run.session.into_transcript(),
        halted_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MissingPolicy;
    use crate::backend::{ReplayBackend, ReplayTable, ScriptedBackend};

    fn scripted() -> ScriptedBackend {
        ScriptedBackend::new(PromptCatalog::builtin())
    }

    fn run(text: &str, topic: &str, backend: &dyn ChatBackend, mode: Mode) -> DocumentResult {
        let config = PipelineConfig {
            mode,
            max_retries: 2,
        };
        process_document(text, topic, backend, &PromptCatalog::builtin(), &config).unwrap()
    }

    /// Scripted answers, with chosen prompts overridden.
    struct Overlay {
        inner: ScriptedBackend,
        catalog: PromptCatalog,
        overrides: Vec<(PromptKind, &'static str, &'static str)>,
    }

    impl Overlay {
        fn new(overrides: Vec<(PromptKind, &'static str, &'static str)>) -> Self {
            Self {
                inner: scripted(),
                catalog: PromptCatalog::builtin(),
                overrides,
            }
        }
    }

    impl ChatBackend for Overlay {
        fn chat(&self, r: &ChatRequest, occ: u32) -> Result<String, BackendError> {
            let (kind, _) = self.catalog.classify(&r.system_prompt).unwrap();
            for (k, user, reply) in &self.overrides {
                if *k == kind && (user.is_empty() || *user == r.user_prompt) {
                    return Ok(reply.to_string());
                }
            }
            self.inner.chat(r, occ)
        }
    }

    #[test]
    fn single_sentence_document() {
        let r = run(
            "Tom bought the bike.",
            "purchase",
            &scripted(),
            Mode::Strict,
        );
        assert!(!r.halted_early);
        assert_eq!(r.sentences[0].origin, SentenceOrigin::WholeInput);
        assert_eq!(
            r.network.results_summary(),
            "Results: Subjects: [1, Tom]\nObjects: [2, bike]\nActions: [1, bought, Tom, bike]\n"
        );
        // mc, complexity, topic, svo, subjects, objects
        assert_eq!(r.transcript.len(), 6);
    }

    #[test]
    fn complex_sentences_are_deferred() {
        let text = "Joe and John bought pencils and markers. Ann sold a lamp.";
        let r = run(text, "purchase", &scripted(), Mode::Strict);
        let order: Vec<&str> = r.triples.iter().map(|t| t.source.text.as_str()).collect();
        assert_eq!(
            order,
            vec![
                "Ann sold a lamp.",
                "Joe bought pencils",
                "Joe bought markers",
                "John bought pencils",
                "John bought markers"
            ]
        );
        assert_eq!(r.network.links.len(), 5);
        for u in r
            .sentences
            .iter()
            .filter(|u| u.origin == SentenceOrigin::ComplexSplit)
        {
            let parent = &r.sentences[u.parent_index.unwrap()];
            assert_ne!(parent.origin, SentenceOrigin::ComplexSplit);
        }
        let complexity_asks = r
            .transcript
            .iter()
            .filter(|e| {
                e.system_prompt
                    .starts_with("Does this prompt have multiple")
            })
            .count();
        assert_eq!(complexity_asks, 2);
    }

    #[test]
    fn off_topic_document_is_empty() {
        let r = run(
            "Ann ate a pear. Bo ate a plum.",
            "purchase",
            &scripted(),
            Mode::Strict,
        );
        assert!(r.network.is_empty());
        assert!(r.errors.is_empty());
        assert!(r.triples.is_empty());
    }

    #[test]
    fn non_enumerable_strict_halts() {
        let r = run(
            "Ann bought the entire set.",
            "purchase",
            &scripted(),
            Mode::Strict,
        );
        assert!(r.halted_early);
        assert_eq!(r.errors.len(), 1);
        assert_eq!(r.errors[0].cause, Cause::NonEnumerableElement);
        assert_eq!(r.errors[0].stage, Stage::ObjectParse);
        assert_eq!(r.errors[0].sentence.as_deref(), Some("the entire set"));
        assert!(r.network.is_empty());
    }

    #[test]
    fn non_enumerable_lenient_continues() {
        let r = run(
            "Ann bought the entire set. Bo bought a lamp.",
            "purchase",
            &scripted(),
            Mode::Lenient,
        );
        assert!(!r.halted_early);
        assert_eq!(r.errors.len(), 1);
        assert_eq!(r.errors[0].fallback, Some(Fallback::DropTriple));
        assert_eq!(r.network.links.len(), 1);
        assert!(r.network.find("Ann").is_none());
    }

    #[test]
    fn malformed_is_retried_then_falls_back() {
        let b = Overlay::new(vec![(PromptKind::MultiClauseCheck, "", "maybe")]);
        let r = run(
            "Tom bought a bike. Ann sold a lamp.",
            "purchase",
            &b,
            Mode::Lenient,
        );
        let mc = r
            .transcript
            .iter()
            .filter(|e| e.system_prompt.starts_with("Is the following input"))
            .count();
        assert_eq!(mc, 3);
        assert_eq!(r.errors[0].stage, Stage::MultiClause);
        assert_eq!(r.errors[0].cause, Cause::Malformed);
        assert_eq!(r.errors[0].fallback, Some(Fallback::SingleSentence));
        assert_eq!(r.sentences.len(), 1);
    }

    #[test]
    fn split_failure_uses_punctuation() {
        let b = Overlay::new(vec![(
            PromptKind::ParagraphSplit,
            "",
            "{\"response\": \"Yes\"}",
        )]);
        let r = run(
            "Tom bought a bike. Ann sold a lamp.",
            "purchase",
            &b,
            Mode::Lenient,
        );
        assert_eq!(r.errors[0].cause, Cause::SchemaMismatch);
        assert_eq!(r.errors[0].fallback, Some(Fallback::PunctuationSplit));
        assert_eq!(r.network.links.len(), 2);
    }

    #[test]
    fn empty_svo_field_drops_sentence() {
        let b = Overlay::new(vec![(
            PromptKind::SvoExtract,
            "",
            "{\"subject\": \"Tom\", \"object\": \"\", \"action\": \"bought\"}",
        )]);
        let r = run("Tom bought a bike.", "purchase", &b, Mode::Lenient);
        assert_eq!(r.errors[0].cause, Cause::EmptyField);
        assert!(r.network.is_empty());
        let r = run("Tom bought a bike.", "purchase", &b, Mode::Strict);
        assert!(r.halted_early);
    }

    #[test]
    fn replay_miss_is_recorded() {
        let b = ReplayBackend::new(
            ReplayTable::default(),
            MissingPolicy::Error,
            PromptCatalog::builtin(),
        );
        let r = run("Tom bought a bike.", "purchase", &b, Mode::Strict);
        assert!(r.halted_early);
        assert_eq!(r.errors[0].cause, Cause::ReplayMiss);
        // a transport failure is not re-asked
        assert_eq!(r.transcript.len(), 1);
    }

    #[test]
    fn empty_inputs_rejected() {
        let cat = PromptCatalog::builtin();
        let cfg = PipelineConfig::default();
        assert!(matches!(
            process_document(" ", "purchase", &scripted(), &cat, &cfg),
            Err(InputError::EmptyText)
        ));
        assert!(matches!(
            process_document("x", "", &scripted(), &cat, &cfg),
            Err(InputError::EmptyTopic)
        ));
    }

    #[test]
    fn punctuation_fallback() {
        assert_eq!(
            punctuation_split("One. Two!  Three"),
            vec!["One.", "Two!", "Three"]
        );
        assert_eq!(punctuation_split("3.5 apples"), vec!["3.5 apples"]);
    }
}
