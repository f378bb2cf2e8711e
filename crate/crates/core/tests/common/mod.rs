#![allow(dead_code)]

use std::path::PathBuf;

use stbam_core::corpus::Corpus;
use stbam_core::eval::{load_gold, parse_table, GoldAnnotation, MetricsRow};

pub fn corpus_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus")
}

pub fn corpus() -> Corpus {
    Corpus::load(corpus_root()).expect("fixture manifest")
}

pub fn gold() -> Vec<GoldAnnotation> {
    load_gold(corpus_root().join("gold.json")).expect("gold file")
}

pub fn published() -> Vec<MetricsRow> {
    let text = std::fs::read_to_string(corpus_root().join("table1.csv")).expect("table file");
    parse_table(&text).expect("table parses")
}

pub fn test_id(n: usize) -> String {
    format!("Test {n} (A{n})")
}
