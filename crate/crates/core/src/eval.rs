//! Per-test metrics rows, expected-result judgment, aggregates, the CSV
//! table, and divergence notes against a published table.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{ModelFile, Role, TopicNetwork};

pub const TABLE_HEADER: [&str; 8] = [
    "Example",
    "Got Expected Results",
    "Errors Thrown",
    "# of Subjects Found",
    "# of Objects Found",
    "# of Subjects Used in Actions",
    "# of Objects used in Actions",
    "# of Actions",
];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("topic mismatch for {test_id}: model has {model:?}, gold has {gold:?}")]
    TopicMismatch {
        test_id: String,
        model: String,
        gold: String,
    },
    #[error("no rows to aggregate")]
    Empty,
    #[error("{test_id}: {violated}")]
    Invariant { test_id: String, violated: String },
    #[error("no gold annotation for {0}")]
    MissingGold(String),
    #[error("gold annotation {0} has no qualifying actions")]
    EmptyGold(String),
    #[error("table row {line}: {message}")]
    Table { line: usize, message: String },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub test_id: String,
    pub topic: String,
    pub qualifying_actions: Vec<String>,
    #[serde(default)]
    pub notes: String,
}

pub fn load_gold(path: impl AsRef<Path>) -> Result<Vec<GoldAnnotation>, EvalError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let gold: Vec<GoldAnnotation> = serde_json::from_str(&text).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    for g in &gold {
        if g.qualifying_actions.iter().all(|a| a.trim().is_empty()) {
            return Err(EvalError::EmptyGold(g.test_id.clone()));
        }
    }
    Ok(gold)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub test_id: String,
    pub got_expected: bool,
    pub errors_thrown: bool,
    pub subjects_found: u32,
    pub objects_found: u32,
    pub subjects_in_actions: u32,
    pub objects_in_actions: u32,
    pub actions: u32,
}

impl MetricsRow {
    pub fn counts(&self) -> [u32; 5] {
        [
            self.subjects_found,
            self.objects_found,
            self.subjects_in_actions,
            self.objects_in_actions,
            self.actions,
        ]
    }

    /// Every violated inequality, in column order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, what: &str| {
            if !ok {
                out.push(what.to_string());
            }
        };
        check(
            self.subjects_in_actions <= self.subjects_found,
            "subjects used in actions exceeds subjects found",
        );
        check(
            self.objects_in_actions <= self.objects_found,
            "objects used in actions exceeds objects found",
        );
        check(
            self.subjects_in_actions <= self.actions,
            "subjects used in actions exceeds actions",
        );
        check(
            self.objects_in_actions <= self.actions,
            "objects used in actions exceeds actions",
        );
        out
    }

    pub fn check_invariants(&self) -> Result<(), EvalError> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some(violated) => Err(EvalError::Invariant {
                test_id: self.test_id.clone(),
                violated,
            }),
        }
    }

    fn cells(&self) -> [String; 8] {
        let yn = |b: bool| if b { "Yes" } else { "No" }.to_string();
        [
            self.test_id.clone(),
            yn(self.got_expected),
            yn(self.errors_thrown),
            self.subjects_found.to_string(),
            self.objects_found.to_string(),
            self.subjects_in_actions.to_string(),
            self.objects_in_actions.to_string(),
            self.actions.to_string(),
        ]
    }

    /// Names of the columns where `self` and `other` disagree.
    pub fn differing_columns(&self, other: &MetricsRow) -> Vec<&'static str> {
        let a = self.cells();
        let b = other.cells();
        (1..8)
            .filter(|&i| a[i] != b[i])
            .map(|i| TABLE_HEADER[i])
            .collect()
    }
}

fn stem(word: &str) -> String {
    let w = word.trim().to_lowercase();
    for suffix in ["ing", "ed", "s"] {
        if let Some(base) = w.strip_suffix(suffix) {
            if base.chars().count() >= 3 {
                return base.to_string();
            }
        }
    }
    w
}

/// Stems match when equal, or when one extends the other by one character
/// ("purchas" vs "purchase").
pub fn action_qualifies(action: &str, gold: &GoldAnnotation) -> bool {
    let a = stem(action);
    if a.is_empty() {
        return false;
    }
    gold.qualifying_actions.iter().any(|q| {
        let q = stem(q);
        if q.is_empty() {
            return false;
        }
        let (short, long) = if a.len() <= q.len() {
            (&a, &q)
        } else {
            (&q, &a)
        };
        long.starts_with(short.as_str()) && long.chars().count() - short.chars().count() <= 1
    })
}

pub fn judge_expected(network: &TopicNetwork, gold: &GoldAnnotation) -> bool {
    network
        .links
        .iter()
        .any(|l| action_qualifies(&l.action, gold))
}

pub fn compute_metrics(
    network: &TopicNetwork,
    errors_thrown: bool,
    gold: &GoldAnnotation,
) -> Result<MetricsRow, EvalError> {
    if network.topic != gold.topic {
        return Err(EvalError::TopicMismatch {
            test_id: gold.test_id.clone(),
            model: network.topic.clone(),
            gold: gold.topic.clone(),
        });
    }
    let distinct = |f: fn(&crate::network::Link) -> u32| {
        network.links.iter().map(f).collect::<BTreeSet<_>>().len() as u32
    };
    Ok(MetricsRow {
        test_id: gold.test_id.clone(),
        got_expected: judge_expected(network, gold),
        errors_thrown,
        subjects_found: network.containers_with(Role::Subject).count() as u32,
        objects_found: network.containers_with(Role::Object).count() as u32,
        subjects_in_actions: distinct(|l| l.subject_id),
        objects_in_actions: distinct(|l| l.object_id),
        actions: network.links.len() as u32,
    })
}

pub fn compute_model_metrics(
    model: &ModelFile,
    gold: &GoldAnnotation,
) -> Result<MetricsRow, EvalError> {
    let network = model.network().map_err(|e| EvalError::Invariant {
        test_id: gold.test_id.clone(),
        violated: e.to_string(),
    })?;
    compute_metrics(&network, !model.errors.is_empty(), gold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub n_tests: usize,
    pub full_successes: usize,
    pub partial_successes: usize,
    pub full_success_rate: f64,
    pub partial_success_rate: f64,
}

pub fn aggregate(rows: &[MetricsRow]) -> Result<AggregateSummary, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::Empty);
    }
    let full = rows.iter().filter(|r| r.got_expected).count();
    let partial = rows
        .iter()
        .filter(|r| r.got_expected || r.counts().iter().any(|&c| c > 0))
        .count();
    let n = rows.len();
    Ok(AggregateSummary {
        n_tests: n,
        full_successes: full,
        partial_successes: partial,
        full_success_rate: full as f64 / n as f64,
        partial_success_rate: partial as f64 / n as f64,
    })
}

pub fn emit_table(rows: &[MetricsRow]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(TABLE_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record(r.cells()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Parse a table in the [`emit_table`] layout. Rows are not invariant-checked.
pub fn parse_table(text: &str) -> Result<Vec<MetricsRow>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| EvalError::Table {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != TABLE_HEADER.len() {
            return Err(EvalError::Table {
                line,
                message: format!(
                    "expected {} fields, found {}",
                    TABLE_HEADER.len(),
                    rec.len()
                ),
            });
        }
        let flag = |s: &str| match s {
            "Yes" => Ok(true),
            "No" => Ok(false),
            other => Err(EvalError::Table {
                line,
                message: format!("expected Yes or No, found {other:?}"),
            }),
        };
        let count = |s: &str| {
            s.parse::<u32>().map_err(|e| EvalError::Table {
                line,
                message: format!("bad count {s:?}: {e}"),
            })
        };
        rows.push(MetricsRow {
            test_id: rec[0].to_string(),
            got_expected: flag(&rec[1])?,
            errors_thrown: flag(&rec[2])?,
            subjects_found: count(&rec[3])?,
            objects_found: count(&rec[4])?,
            subjects_in_actions: count(&rec[5])?,
            objects_in_actions: count(&rec[6])?,
            actions: count(&rec[7])?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Divergence {
    /// The computed row disagrees with the published one.
    RowMismatch { columns: Vec<String> },
    /// A triple with a qualifying action produced links, yet the published
    /// row says the expected result was not obtained.
    UnreportedQualifyingTriple { action: String, sentence: String },
    /// The published row breaks a metrics inequality.
    PublishedInvariant { violated: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivergenceNote {
    pub test_id: String,
    pub findings: Vec<Divergence>,
}

impl DivergenceNote {
    pub fn summary(&self) -> String {
        let parts: Vec<String> = self
            .findings
            .iter()
            .map(|f| match f {
                Divergence::RowMismatch { columns } => {
                    format!("replayed row differs from published in {}", columns.join("; "))
                }
                Divergence::UnreportedQualifyingTriple { action, sentence } => format!(
                    "transcript yields qualifying action {action:?} ({sentence:?}) but published result is No"
                ),
                Divergence::PublishedInvariant { violated } => {
                    format!("published row is inconsistent: {violated}")
                }
            })
            .collect();
        format!("{}: {}", self.test_id, parts.join(" | "))
    }
}

/// Compare a computed row against its published counterpart.
pub fn divergence(
    computed: &MetricsRow,
    published: &MetricsRow,
    network: &TopicNetwork,
    gold: &GoldAnnotation,
) -> Option<DivergenceNote> {
    let mut findings = Vec::new();
    let columns = computed.differing_columns(published);
    if !columns.is_empty() {
        findings.push(Divergence::RowMismatch {
            columns: columns.into_iter().map(str::to_string).collect(),
        });
    }
    if !published.got_expected {
        if let Some(t) = network.triples.iter().find(|t| {
            !t.subject_ids.is_empty()
                && !t.object_ids.is_empty()
                && action_qualifies(&t.action, gold)
        }) {
            findings.push(Divergence::UnreportedQualifyingTriple {
                action: t.action.clone(),
                sentence: t.sentence.clone(),
            });
        }
    }
    for violated in published.violations() {
        findings.push(Divergence::PublishedInvariant { violated });
    }
    (!findings.is_empty()).then(|| DivergenceNote {
        test_id: computed.test_id.clone(),
        findings,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub replayed: AggregateSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published: Option<AggregateSummary>,
    pub rows: Vec<MetricsRow>,
    pub divergences: Vec<DivergenceNote>,
}

/// Score model files against gold annotations and, when given, a published
/// table. Computed rows must satisfy the metrics inequalities; published rows
/// are only compared.
pub fn evaluate(
    models: &[ModelFile],
    gold: &[GoldAnnotation],
    published: Option<&[MetricsRow]>,
) -> Result<EvalReport, EvalError> {
    let mut rows = Vec::with_capacity(models.len());
    let mut divergences = Vec::new();
    for model in models {
        let id = model.id.clone().unwrap_or_default();
        let g = gold
            .iter()
            .find(|g| g.test_id == id)
            .ok_or_else(|| EvalError::MissingGold(id.clone()))?;
        let network = model.network().map_err(|e| EvalError::Invariant {
            test_id: id.clone(),
            violated: e.to_string(),
        })?;
        let row = compute_metrics(&network, !model.errors.is_empty(), g)?;
        row.check_invariants()?;
        if let Some(p) = published.and_then(|p| p.iter().find(|r| r.test_id == id)) {
            divergences.extend(divergence(&row, p, &network, g));
        }
        rows.push(row);
    }
    Ok(EvalReport {
        replayed: aggregate(&rows)?,
        published: match published {
            Some(p) => Some(aggregate(p)?),
            None => None,
        },
        rows,
        divergences,
    })
}
