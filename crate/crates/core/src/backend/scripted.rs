//! Deterministic rule backend. Recognises each catalog prompt and answers it
//! with shallow string rules over a fixed verb lexicon. Good enough for
//! generated documents of the form "A and B <verb> x and y." and as the
//! fallback for unrecorded replay requests.

use serde_json::json;

use super::{BackendError, ChatBackend, ChatRequest};
use crate::prompts::{PromptCatalog, PromptKind};

/// Verbs the rules can locate in a sentence.
pub const VERB_LEXICON: &[&str] = &[
    "approached",
    "ate",
    "bought",
    "buy",
    "buys",
    "carried",
    "chugged",
    "cooked",
    "drove",
    "explored",
    "floated",
    "found",
    "gave",
    "liked",
    "navigated",
    "ordered",
    "paid",
    "painted",
    "purchased",
    "purchase",
    "ran",
    "rode",
    "sailed",
    "saw",
    "sell",
    "sells",
    "sold",
    "soared",
    "traveled",
    "visited",
    "walked",
    "wanted",
    "washed",
    "watched",
    "wrote",
];

const PURCHASE_WORDS: &[&str] = &[
    "buy",
    "buys",
    "buying",
    "bought",
    "purchase",
    "purchased",
    "purchases",
    "purchasing",
    "sell",
    "sells",
    "selling",
    "sold",
    "paid",
    "pay",
    "ordered",
];

const TRAVEL_WORDS: &[&str] = &[
    "navigated",
    "sailed",
    "rode",
    "drove",
    "soared",
    "walked",
    "explored",
    "floated",
    "traveled",
    "travelled",
    "chugged",
    "visited",
    "flew",
    "journeyed",
    "toured",
    "hiked",
];

const NON_ENUMERABLE_PREFIXES: &[&str] = &["the entire ", "the whole ", "all of "];

pub struct ScriptedBackend {
    catalog: PromptCatalog,
}

impl ScriptedBackend {
    pub fn new(catalog: PromptCatalog) -> Self {
        Self { catalog }
    }
}

impl ChatBackend for ScriptedBackend {
    fn chat(&self, request: &ChatRequest, _occurrence: u32) -> Result<String, BackendError> {
        let Some((kind, topic)) = self.catalog.classify(&request.system_prompt) else {
            return Err(BackendError::Failure(
                "scripted backend does not recognise the system prompt".into(),
            ));
        };
        let text = request.user_prompt.trim();
        Ok(match kind {
            PromptKind::MultiClauseCheck => yes_no(has_multiple_sentences(text)),
            PromptKind::ParagraphSplit => json!(split_sentences(text)).to_string(),
            PromptKind::ComplexityCheck => yes_no(is_complex(text)),
            PromptKind::ComplexSplit => json!(split_complex(text)).to_string(),
            PromptKind::TopicCheck => yes_no(mentions_topic(text, topic.as_deref().unwrap_or(""))),
            PromptKind::SvoExtract => {
                let (subject, action, object) = parse_svo(text).unwrap_or_default();
                json!({ "subject": subject, "object": object, "action": action }).to_string()
            }
            PromptKind::SubjectListParse | PromptKind::ObjectListParse => {
                let lower = text.to_lowercase();
                if NON_ENUMERABLE_PREFIXES.iter().any(|p| lower.starts_with(p)) {
                    format!(
                        "I'm sorry, but \"{text}\" does not name any individual items, so it cannot be split into an array."
                    )
                } else {
                    json!(enumerate(text)).to_string()
                }
            }
        })
    }
}

fn yes_no(b: bool) -> String {
    format!("{{ \"response\": \"{}\" }}", if b { "Yes" } else { "No" })
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn has_multiple_sentences(text: &str) -> bool {
    split_sentences(text).len() > 1
}

fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        cur.push(c);
        if is_terminator(c) && chars.peek().is_some_and(|n| n.is_whitespace()) {
            let s = cur.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            cur.clear();
        }
    }
    let s = cur.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    out
}

fn bare(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// (subject, verb, object) with the sentence terminator removed.
fn parse_svo(sentence: &str) -> Option<(String, String, String)> {
    let sentence = sentence.trim().trim_end_matches(is_terminator);
    let words: Vec<&str> = sentence.split_whitespace().collect();
    let at = words
        .iter()
        .position(|w| VERB_LEXICON.contains(&bare(w).as_str()))?;
    Some((
        words[..at].join(" "),
        bare(words[at]),
        words[at + 1..].join(" "),
    ))
}

fn conjuncts(phrase: &str) -> Vec<String> {
    phrase
        .replace(", and ", ", ")
        .replace(" and ", ", ")
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn is_complex(sentence: &str) -> bool {
    match parse_svo(sentence) {
        Some((s, _, o)) => conjuncts(&s).len() > 1 || conjuncts(&o).len() > 1,
        None => false,
    }
}

fn split_complex(sentence: &str) -> Vec<String> {
    let Some((s, v, o)) = parse_svo(sentence) else {
        return vec![sentence.trim().to_string()];
    };
    let subjects = conjuncts(&s);
    let objects = conjuncts(&o);
    let mut out = Vec::new();
    for subj in &subjects {
        if objects.is_empty() {
            out.push(format!("{subj} {v}"));
        }
        for obj in &objects {
            out.push(format!("{subj} {v} {obj}"));
        }
    }
    out
}

fn mentions_topic(sentence: &str, topic: &str) -> bool {
    let lexicon: Vec<String> = match topic.trim().to_lowercase().as_str() {
        "purchase" => PURCHASE_WORDS.iter().map(|s| s.to_string()).collect(),
        "travel experience" | "travel" => TRAVEL_WORDS.iter().map(|s| s.to_string()).collect(),
        other => other.split_whitespace().map(str::to_string).collect(),
    };
    sentence
        .split_whitespace()
        .map(bare)
        .any(|w| lexicon.contains(&w))
}

fn strip_article(s: &str) -> &str {
    for article in ["a ", "an ", "the "] {
        if s.len() > article.len()
            && s.get(..article.len())
                .is_some_and(|h| h.eq_ignore_ascii_case(article))
        {
            return s[article.len()..].trim_start();
        }
    }
    s
}

fn enumerate(phrase: &str) -> Vec<String> {
    conjuncts(phrase)
        .iter()
        .map(|p| strip_article(p).to_string())
        .filter(|p| !p.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payload::{extract_items, extract_svo, extract_yes_no};

    fn ask(kind: PromptKind, topic: Option<&str>, user: &str) -> String {
        let catalog = PromptCatalog::builtin();
        let sys = catalog.render(kind, topic).unwrap().text;
        ScriptedBackend::new(catalog)
            .chat(&ChatRequest::new(sys, user).unwrap(), 1)
            .unwrap()
    }

    #[test]
    fn multi_clause_rule() {
        assert!(extract_yes_no(&ask(
            PromptKind::MultiClauseCheck,
            None,
            "Dillan ate an apple. He thought it tasted good."
        ))
        .unwrap());
        assert!(!extract_yes_no(&ask(PromptKind::MultiClauseCheck, None, "Hello")).unwrap());
    }

    #[test]
    fn paragraph_split_rule() {
        let r = ask(PromptKind::ParagraphSplit, None, "One. Two.");
        assert_eq!(extract_items(&r).unwrap(), vec!["One.", "Two."]);
    }

    #[test]
    fn complex_rules() {
        let s = "Joe and John bought pencils and markers";
        assert!(extract_yes_no(&ask(PromptKind::ComplexityCheck, None, s)).unwrap());
        assert_eq!(
            extract_items(&ask(PromptKind::ComplexSplit, None, s)).unwrap(),
            vec![
                "Joe bought pencils",
                "Joe bought markers",
                "John bought pencils",
                "John bought markers"
            ]
        );
        assert_eq!(
            extract_items(&ask(PromptKind::ComplexSplit, None, "Ann and Bo ran")).unwrap(),
            vec!["Ann ran", "Bo ran"]
        );
        assert!(!extract_yes_no(&ask(
            PromptKind::ComplexityCheck,
            None,
            "Tom bought a bike."
        ))
        .unwrap());
    }

    #[test]
    fn unparsable_sentence_is_returned_whole() {
        assert_eq!(split_complex("Ann and Bo swam"), vec!["Ann and Bo swam"]);
    }

    #[test]
    fn topic_rule() {
        assert!(extract_yes_no(&ask(
            PromptKind::TopicCheck,
            Some("purchase"),
            "Tom bought a bike."
        ))
        .unwrap());
        assert!(!extract_yes_no(&ask(
            PromptKind::TopicCheck,
            Some("purchase"),
            "My name is Joe."
        ))
        .unwrap());
        assert!(extract_yes_no(&ask(
            PromptKind::TopicCheck,
            Some("travel experience"),
            "We sailed the bay."
        ))
        .unwrap());
    }

    #[test]
    fn svo_rule() {
        let s = extract_svo(&ask(PromptKind::SvoExtract, None, "Tom bought the bike.")).unwrap();
        assert_eq!(
            (s.subject.as_str(), s.action.as_str(), s.object.as_str()),
            ("Tom", "bought", "the bike")
        );
        let s = extract_svo(&ask(PromptKind::SvoExtract, None, "Hello")).unwrap();
        assert!(s.subject.is_empty() && s.action.is_empty());
    }

    #[test]
    fn enumeration_rules() {
        let items = |k, p| extract_items(&ask(k, None, p)).unwrap();
        assert_eq!(
            items(PromptKind::SubjectListParse, "Bob and Steve"),
            vec!["Bob", "Steve"]
        );
        assert_eq!(
            items(PromptKind::ObjectListParse, "tape measure and book"),
            vec!["tape measure", "book"]
        );
        assert_eq!(items(PromptKind::ObjectListParse, "the bike"), vec!["bike"]);
        assert_eq!(
            items(PromptKind::ObjectListParse, "sushi and Uncrustables"),
            vec!["sushi", "Uncrustables"]
        );
        let r = ask(PromptKind::ObjectListParse, None, "the entire set");
        assert!(extract_items(&r).unwrap_err().is_no_region());
    }

    #[test]
    fn unknown_prompt_fails() {
        let b = ScriptedBackend::new(PromptCatalog::builtin());
        assert!(b
            .chat(&ChatRequest::new("Summarize.", "x").unwrap(), 1)
            .is_err());
    }
}
