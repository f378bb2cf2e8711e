//! The topic network: deduplicated subject/object containers joined by
//! action links, plus the canonical model-file format and prose rendering.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{PipelineError, SentenceOrigin, SvoTriple};

pub const EMPTY_PROSE: &str = "No topic-related activity was modeled.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Subject,
    Object,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Container {
    pub id: u32,
    pub label: String,
    #[serde(skip)]
    pub normalized_label: String,
    pub roles: BTreeSet<Role>,
    pub first_seen: u32,
}

impl Container {
    pub fn has_role(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub id: u32,
    pub action: String,
    pub subject_id: u32,
    pub object_id: u32,
    /// Id of the triple that produced this link; `None` for links added by hand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triple: Option<u32>,
}

/// A triple as stored in the network, with the containers its enumerated
/// subjects and objects resolved to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleRecord {
    pub id: u32,
    pub sentence: String,
    pub origin: SentenceOrigin,
    pub subject_phrase: String,
    pub object_phrase: String,
    pub action: String,
    pub subject_ids: Vec<u32>,
    pub object_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("container label is empty")]
    EmptyLabel,
    #[error("action verb is empty")]
    EmptyAction,
    #[error("unknown container id {0}")]
    UnknownContainer(u32),
    #[error("container {id} does not have role {role:?}")]
    RoleViolation { id: u32, role: Role },
    #[error("invalid model file: {0}")]
    Parse(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Case-fold, drop one leading article, collapse whitespace. The article is
/// kept when nothing else would remain.
pub fn normalize_label(label: &str) -> String {
    let words: Vec<String> = label.split_whitespace().map(str::to_lowercase).collect();
    let rest = match words.first().map(String::as_str) {
        Some("a" | "an" | "the") if words.len() > 1 => &words[1..],
        _ => &words[..],
    };
    rest.join(" ")
}

#[derive(Debug, Clone, Default)]
pub struct TopicNetwork {
    pub topic: String,
    pub containers: Vec<Container>,
    pub links: Vec<Link>,
    pub triples: Vec<TripleRecord>,
    index: HashMap<String, u32>,
    mentions: u32,
}

// The lookup index and mention counter are derived state.
impl PartialEq for TopicNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.topic == other.topic
            && self.containers == other.containers
            && self.links == other.links
            && self.triples == other.triples
    }
}

impl Eq for TopicNetwork {}

impl TopicNetwork {
    pub fn new(topic: impl Into<String>) -> Self {
        Self {
            topic: topic.into(),
            ..Self::default()
        }
    }

    pub fn container(&self, id: u32) -> Option<&Container> {
        id.checked_sub(1)
            .and_then(|i| self.containers.get(i as usize))
    }

    pub fn find(&self, label: &str) -> Option<&Container> {
        self.index
            .get(&normalize_label(label))
            .and_then(|id| self.container(*id))
    }

    pub fn upsert_container(&mut self, label: &str, role: Role) -> Result<u32, NetworkError> {
        let key = normalize_label(label);
        if key.is_empty() {
            return Err(NetworkError::EmptyLabel);
        }
        self.mentions += 1;
        if let Some(&id) = self.index.get(&key) {
            self.containers[id as usize - 1].roles.insert(role);
            return Ok(id);
        }
        let id = self.containers.len() as u32 + 1;
        self.containers.push(Container {
            id,
            label: label.trim().to_string(),
            normalized_label: key.clone(),
            roles: BTreeSet::from([role]),
            first_seen: self.mentions,
        });
        self.index.insert(key, id);
        Ok(id)
    }

    pub fn add_link(
        &mut self,
        action: &str,
        subject_id: u32,
        object_id: u32,
        provenance: Option<u32>,
    ) -> Result<u32, NetworkError> {
        let action = action.trim();
        if action.is_empty() {
            return Err(NetworkError::EmptyAction);
        }
        self.check_role(subject_id, Role::Subject)?;
        self.check_role(object_id, Role::Object)?;
        if let Some(t) = provenance {
            if self.triple(t).is_none() {
                return Err(NetworkError::Invalid(format!("unknown triple {t}")));
            }
        }
        let id = self.links.len() as u32 + 1;
        self.links.push(Link {
            id,
            action: action.to_string(),
            subject_id,
            object_id,
            triple: provenance,
        });
        Ok(id)
    }

    fn check_role(&self, id: u32, role: Role) -> Result<(), NetworkError> {
        let c = self
            .container(id)
            .ok_or(NetworkError::UnknownContainer(id))?;
        if !c.has_role(role) {
            return Err(NetworkError::RoleViolation { id, role });
        }
        Ok(())
    }

    pub fn triple(&self, id: u32) -> Option<&TripleRecord> {
        id.checked_sub(1).and_then(|i| self.triples.get(i as usize))
    }

    /// Add one enumerated triple: containers for every subject then every
    /// object label, then one link per (subject, object) pair, subject-major.
    /// Returns the triple id.
    pub fn add_triple(
        &mut self,
        triple: &SvoTriple,
        subjects: &[String],
        objects: &[String],
    ) -> Result<u32, NetworkError> {
        if triple.action_verb.trim().is_empty() {
            return Err(NetworkError::EmptyAction);
        }
        if subjects
            .iter()
            .chain(objects)
            .any(|l| normalize_label(l).is_empty())
        {
            return Err(NetworkError::EmptyLabel);
        }
        let subject_ids = subjects
            .iter()
            .map(|s| self.upsert_container(s, Role::Subject))
            .collect::<Result<Vec<_>, _>>()?;
        let object_ids = objects
            .iter()
            .map(|o| self.upsert_container(o, Role::Object))
            .collect::<Result<Vec<_>, _>>()?;
        let id = self.triples.len() as u32 + 1;
        self.triples.push(TripleRecord {
            id,
            sentence: triple.source.text.clone(),
            origin: triple.source.origin,
            subject_phrase: triple.subject_phrase.clone(),
            object_phrase: triple.object_phrase.clone(),
            action: triple.action_verb.clone(),
            subject_ids: subject_ids.clone(),
            object_ids: object_ids.clone(),
        });
        for &s in &subject_ids {
            for &o in &object_ids {
                self.add_link(&triple.action_verb, s, o, Some(id))?;
            }
        }
        Ok(id)
    }

    pub fn containers_with(&self, role: Role) -> impl Iterator<Item = &Container> {
        self.containers.iter().filter(move |c| c.has_role(role))
    }

    pub fn is_empty(&self) -> bool {
        self.containers.is_empty() && self.links.is_empty()
    }

    fn label_of(&self, id: u32) -> &str {
        self.container(id).map_or("?", |c| c.label.as_str())
    }

    /// Check every structural invariant. Used after deserialization.
    pub fn validate(&self) -> Result<(), NetworkError> {
        let mut seen = HashMap::new();
        for (i, c) in self.containers.iter().enumerate() {
            if c.id as usize != i + 1 {
                return Err(NetworkError::Invalid(format!(
                    "container ids must be dense from 1; position {} has id {}",
                    i + 1,
                    c.id
                )));
            }
            if c.normalized_label.is_empty() {
                return Err(NetworkError::Invalid(format!(
                    "container {} has an empty label",
                    c.id
                )));
            }
            if c.roles.is_empty() {
                return Err(NetworkError::Invalid(format!(
                    "container {} has no role",
                    c.id
                )));
            }
            if let Some(prev) = seen.insert(c.normalized_label.as_str(), c.id) {
                return Err(NetworkError::Invalid(format!(
                    "containers {prev} and {} share the label {:?}",
                    c.id, c.normalized_label
                )));
            }
        }
        for (i, t) in self.triples.iter().enumerate() {
            if t.id as usize != i + 1 {
                return Err(NetworkError::Invalid(format!(
                    "triple ids must be dense from 1; position {} has id {}",
                    i + 1,
                    t.id
                )));
            }
            for &c in t.subject_ids.iter().chain(&t.object_ids) {
                if self.container(c).is_none() {
                    return Err(NetworkError::Invalid(format!(
                        "triple {} refers to missing container {c}",
                        t.id
                    )));
                }
            }
        }
        for (i, l) in self.links.iter().enumerate() {
            let fail = |what: String| NetworkError::Invalid(format!("link {}: {what}", l.id));
            if l.id as usize != i + 1 {
                return Err(fail(format!("expected id {}", i + 1)));
            }
            if l.action.trim().is_empty() {
                return Err(fail("empty action".into()));
            }
            for (id, role) in [(l.subject_id, Role::Subject), (l.object_id, Role::Object)] {
                match self.container(id) {
                    None => return Err(fail(format!("missing endpoint container {id}"))),
                    Some(c) if !c.has_role(role) => {
                        return Err(fail(format!("container {id} lacks role {role:?}")))
                    }
                    Some(_) => {}
                }
            }
            if let Some(t) = l.triple {
                let Some(tr) = self.triple(t) else {
                    return Err(fail(format!("unknown triple {t}")));
                };
                if !tr.subject_ids.contains(&l.subject_id) || !tr.object_ids.contains(&l.object_id)
                {
                    return Err(fail(format!("endpoints not produced by triple {t}")));
                }
            }
        }
        Ok(())
    }

    fn rebuild_index(&mut self) {
        self.index.clear();
        for c in &mut self.containers {
            c.normalized_label = normalize_label(&c.label);
            self.index.insert(c.normalized_label.clone(), c.id);
        }
        self.mentions = self
            .containers
            .iter()
            .map(|c| c.first_seen)
            .max()
            .unwrap_or(0);
    }

    /// Standardized prose: a header with the topic and container inventory,
    /// then one sentence per link.
    pub fn to_prose(&self) -> String {
        if self.is_empty() {
            return EMPTY_PROSE.to_string();
        }
        let mut out = format!("Topic: {}\n", self.topic);
        let inventory: Vec<String> = self
            .containers
            .iter()
            .map(|c| {
                let roles: Vec<&str> = c
                    .roles
                    .iter()
                    .map(|r| match r {
                        Role::Subject => "subject",
                        Role::Object => "object",
                    })
                    .collect();
                format!("{} ({})", c.label, roles.join(" and "))
            })
            .collect();
        let _ = writeln!(out, "Containers: {}.", inventory.join(", "));
        if self.links.is_empty() {
            out.push_str(EMPTY_PROSE);
            out.push('\n');
        }
        for l in &self.links {
            let _ = writeln!(
                out,
                "{} {} {}.",
                self.label_of(l.subject_id),
                l.action,
                self.label_of(l.object_id)
            );
        }
        out
    }

    /// Console summary in the style "Results: Subjects: [1, Tom] ...".
    pub fn results_summary(&self) -> String {
        fn list(items: Vec<String>) -> String {
            if items.is_empty() {
                "--".to_string()
            } else {
                items.join(", ")
            }
        }
        let subjects = list(
            self.containers_with(Role::Subject)
                .map(|c| format!("[{}, {}]", c.id, c.label))
                .collect(),
        );
        let objects = list(
            self.containers_with(Role::Object)
                .map(|c| format!("[{}, {}]", c.id, c.label))
                .collect(),
        );
        let actions = list(
            self.links
                .iter()
                .map(|l| {
                    format!(
                        "[{}, {}, {}, {}]",
                        l.id,
                        l.action,
                        self.label_of(l.subject_id),
                        self.label_of(l.object_id)
                    )
                })
                .collect(),
        );
        format!("Results: Subjects: {subjects}\nObjects: {objects}\nActions: {actions}\n")
    }
}

/// On-disk model: the network plus the run's errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub topic: String,
    pub containers: Vec<Container>,
    pub links: Vec<Link>,
    #[serde(default)]
    pub triples: Vec<TripleRecord>,
    #[serde(default)]
    pub errors: Vec<PipelineError>,
    #[serde(default)]
    pub halted_early: bool,
}

impl ModelFile {
    pub fn new(
        id: Option<String>,
        network: &TopicNetwork,
        errors: &[PipelineError],
        halted_early: bool,
    ) -> Self {
        Self {
            id,
            topic: network.topic.clone(),
            containers: network.containers.clone(),
            links: network.links.clone(),
            triples: network.triples.clone(),
            errors: errors.to_vec(),
            halted_early,
        }
    }

    pub fn network(&self) -> Result<TopicNetwork, NetworkError> {
        let mut net = TopicNetwork {
            topic: self.topic.clone(),
            containers: self.containers.clone(),
            links: self.links.clone(),
            triples: self.triples.clone(),
            ..TopicNetwork::default()
        };
        net.rebuild_index();
        net.validate()?;
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| NetworkError::Parse(e.to_string()))?;
        file.network()?;
        Ok(file)
    }
}

pub fn serialize(network: &TopicNetwork) -> String {
    ModelFile::new(None, network, &[], false).to_json()
}

pub fn deserialize(text: &str) -> Result<TopicNetwork, NetworkError> {
    ModelFile::from_json(text)?.network()
}
