//! Tolerant extraction of structured payloads from free-form model output.
//!
//! Models wrap JSON in prose or code fences, forget commas between array
//! items and emit raw newlines inside strings. Extraction scans for balanced
//! `{...}`/`[...]` regions, tries each in order, and applies a small repair
//! pass before giving up.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schema {
    YesNoObject,
    StringArray,
    SvoObject,
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schema::YesNoObject => "yes_no_object",
            Schema::StringArray => "string_array",
            Schema::SvoObject => "svo_object",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SvoFields {
    pub subject: String,
    pub object: String,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    YesNo(bool),
    Items(Vec<String>),
    Svo(SvoFields),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MalformedReason {
    NoRegion,
    Unparsable(String),
    MissingField(&'static str),
}

impl fmt::Display for MalformedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MalformedReason::NoRegion => f.write_str("no JSON region found"),
            MalformedReason::Unparsable(e) => write!(f, "unparsable JSON: {e}"),
            MalformedReason::MissingField(name) => write!(f, "missing field `{name}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PayloadError {
    #[error("malformed response: {0}")]
    Malformed(MalformedReason),
    #[error("expected {expected}, found {found}")]
    SchemaMismatch { expected: Schema, found: String },
}

impl PayloadError {
    pub fn is_no_region(&self) -> bool {
        matches!(self, PayloadError::Malformed(MalformedReason::NoRegion))
    }
}

pub fn extract_payload(raw: &str, expected: Schema) -> Result<Payload, PayloadError> {
    if expected == Schema::YesNoObject {
        if let Some(b) = bare_yes_no(raw) {
            return Ok(Payload::YesNo(b));
        }
    }

    let mut first_err: Option<PayloadError> = None;
    for region in candidate_regions(raw) {
        let value = match parse_lenient(region) {
            Ok(v) => v,
            Err(e) => {
                first_err.get_or_insert(PayloadError::Malformed(MalformedReason::Unparsable(e)));
                continue;
            }
        };
        match shape(value, expected) {
            Ok(p) => return Ok(p),
            Err(e) => {
                // a parsed region that disagrees with the schema outranks an
                // earlier unparsable one
                if !matches!(first_err, Some(PayloadError::SchemaMismatch { .. })) {
                    first_err = Some(e);
                }
            }
        }
    }
    Err(first_err.unwrap_or(PayloadError::Malformed(MalformedReason::NoRegion)))
}

pub fn extract_yes_no(raw: &str) -> Result<bool, PayloadError> {
    match extract_payload(raw, Schema::YesNoObject)? {
        Payload::YesNo(b) => Ok(b),
        _ => unreachable!("schema guarantees shape"),
    }
}

pub fn extract_items(raw: &str) -> Result<Vec<String>, PayloadError> {
    match extract_payload(raw, Schema::StringArray)? {
        Payload::Items(v) => Ok(v),
        _ => unreachable!("schema guarantees shape"),
    }
}

pub fn extract_svo(raw: &str) -> Result<SvoFields, PayloadError> {
    match extract_payload(raw, Schema::SvoObject)? {
        Payload::Svo(s) => Ok(s),
        _ => unreachable!("schema guarantees shape"),
    }
}

fn yes_no_word(s: &str) -> Option<bool> {
    let t = s
        .trim()
        .trim_matches(|c: char| c == '"' || c == '\'' || c == '`')
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    if t.eq_ignore_ascii_case("yes") {
        Some(true)
    } else if t.eq_ignore_ascii_case("no") {
        Some(false)
    } else {
        None
    }
}

fn bare_yes_no(raw: &str) -> Option<bool> {
    yes_no_word(raw)
}

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn mismatch(expected: Schema, v: &Value) -> PayloadError {
    PayloadError::SchemaMismatch {
        expected,
        found: kind_name(v).to_string(),
    }
}

fn field<'a>(map: &'a serde_json::Map<String, Value>, name: &str) -> Option<&'a Value> {
    map.get(name).or_else(|| {
        map.iter()
            .find(|(k, _)| k.trim().eq_ignore_ascii_case(name))
            .map(|(_, v)| v)
    })
}

fn shape(value: Value, expected: Schema) -> Result<Payload, PayloadError> {
    match expected {
        Schema::YesNoObject => {
            let Value::Object(map) = &value else {
                return Err(mismatch(expected, &value));
            };
            match field(map, "response") {
                Some(Value::Bool(b)) => Ok(Payload::YesNo(*b)),
                Some(Value::String(s)) => {
                    yes_no_word(s)
                        .map(Payload::YesNo)
                        .ok_or(PayloadError::Malformed(MalformedReason::MissingField(
                            "response",
                        )))
                }
                Some(other) => Err(mismatch(expected, other)),
                None => Err(PayloadError::Malformed(MalformedReason::MissingField(
                    "response",
                ))),
            }
        }
        Schema::StringArray => {
            let Value::Array(items) = &value else {
                return Err(mismatch(expected, &value));
            };
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Value::String(s) => out.push(s.clone()),
                    other => return Err(mismatch(expected, other)),
                }
            }
            Ok(Payload::Items(out))
        }
        Schema::SvoObject => {
            let Value::Object(map) = &value else {
                return Err(mismatch(expected, &value));
            };
            let get = |name: &'static str| -> Result<String, PayloadError> {
                match field(map, name) {
                    Some(Value::String(s)) => Ok(s.clone()),
                    Some(Value::Null) | None => {
                        Err(PayloadError::Malformed(MalformedReason::MissingField(name)))
                    }
                    Some(other) => Err(mismatch(expected, other)),
                }
            };
            Ok(Payload::Svo(SvoFields {
                subject: get("subject")?,
                object: get("object")?,
                action: get("action")?,
            }))
        }
    }
}

/// Balanced bracket regions in order of their opening position. An
/// unterminated region runs to the end of the text.
fn candidate_regions(raw: &str) -> Vec<&str> {
    let bytes = raw.as_bytes();
    let mut out = Vec::new();
    for (start, &b) in bytes.iter().enumerate() {
        if b != b'{' && b != b'[' {
            continue;
        }
        let end = region_end(bytes, start).unwrap_or(bytes.len());
        out.push(&raw[start..end]);
    }
    out
}

fn region_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_str = false;
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' | b'[' => depth += 1,
            b'}' | b']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_lenient(region: &str) -> Result<Value, String> {
    match serde_json::from_str::<Value>(region) {
        Ok(v) => Ok(v),
        Err(first) => serde_json::from_str::<Value>(&repair(region)).map_err(|_| first.to_string()),
    }
}

/// Fix the common defects: missing commas between values, trailing commas,
/// invalid escapes, raw control characters inside strings, and unclosed
/// brackets.
pub(crate) fn repair(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 8);
    let mut stack: Vec<char> = Vec::new();
    let mut in_str = false;
    // true when the last significant token closed a value
    let mut after_value = false;
    let mut chars = text.chars().peekable();

    while let Some(c) = chars.next() {
        if in_str {
            match c {
                '\\' => match chars.peek().copied() {
                    Some(n @ ('"' | '\\' | '/' | 'b' | 'f' | 'n' | 'r' | 't' | 'u')) => {
                        out.push('\\');
                        out.push(n);
                        chars.next();
                    }
                    Some(_) => {}
                    None => {}
                },
                '"' => {
                    in_str = false;
                    after_value = true;
                    out.push('"');
                }
                '\n' => out.push_str("\\n"),
                '\r' => out.push_str("\\r"),
                '\t' => out.push_str("\\t"),
                c if (c as u32) < 0x20 => {}
                c => out.push(c),
            }
            continue;
        }
        match c {
            '"' | '{' | '[' | '0'..='9' | '-' | 't' | 'f' | 'n' => {
                let continues_token = matches!(c, '0'..='9' | '-' | 't' | 'f' | 'n')
                    && out
                        .chars()
                        .last()
                        .is_some_and(|p| p.is_alphanumeric() || matches!(p, '.' | '-' | '+'));
                if after_value && !continues_token {
                    out.push(',');
                }
                match c {
                    '"' => {
                        in_str = true;
                        after_value = false;
                    }
                    '{' | '[' => {
                        stack.push(c);
                        after_value = false;
                    }
                    _ => after_value = true,
                }
                out.push(c);
            }
            '}' | ']' => {
                strip_trailing_comma(&mut out);
                stack.pop();
                after_value = true;
                out.push(c);
            }
            ',' | ':' => {
                after_value = false;
                out.push(c);
            }
            c if c.is_whitespace() => out.push(c),
            c => {
                if c.is_alphanumeric() || c == '.' || c == '+' {
                    after_value = true;
                }
                out.push(c);
            }
        }
    }
    if in_str {
        out.push('"');
    }
    strip_trailing_comma(&mut out);
    while let Some(open) = stack.pop() {
        out.push(if open == '{' { '}' } else { ']' });
    }
    out
}

fn strip_trailing_comma(out: &mut String) {
    let trimmed = out.trim_end().len();
    if out[..trimmed].ends_with(',') {
        out.remove(trimmed - 1);
    }
}
