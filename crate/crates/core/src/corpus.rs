//! Domain records and their JSONL stores.
//!
//! `pairs.jsonl` holds one denormalized pair per line:
//!
//! ```json
//! {"pair_id":"p1","publication":{"pub_id":"PMC1","title":"…","publisher":"…",
//!   "pub_year":2018,"char_count":52011},"identifier":{"accession":"CP000046.1",
//!   "identifier_class":"nucleotide-sequence","source_db":"…","metadata":{"organism":"…"}}}
//! ```
//!
//! Publications and identifiers repeated across lines must agree field for
//! field. `annotations.jsonl` and `transcripts.jsonl` hold one
//! [`AnnotationRecord`] / [`ChatTranscript`] per line.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use indexmap::IndexMap;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::jsonl::{self, JsonlError};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("line {line}: invalid `{field}`: {message}")]
    Validation {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate pair (publication {pub_id}, accession {accession})")]
    DuplicatePair {
        line: usize,
        pub_id: String,
        accession: String,
    },
    #[error("record for pair `{0}` does not resolve to a loaded pair")]
    DanglingPair(String),
}

fn invalid(line: usize, field: &str, message: impl Into<String>) -> CorpusError {
    CorpusError::Validation {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

/// Insertion-ordered metadata map that rejects repeated keys on input.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Metadata(pub IndexMap<String, String>);

impl Metadata {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.0.insert(key.into(), value.into());
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Metadata {
    fn from_iter<T: IntoIterator<Item = (K, V)>>(iter: T) -> Self {
        Metadata(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

impl<'de> Deserialize<'de> for Metadata {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct MetaVisitor;

        impl<'de> Visitor<'de> for MetaVisitor {
            type Value = Metadata;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of metadata strings")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Metadata, A::Error> {
                let mut out = IndexMap::new();
                while let Some((k, v)) = map.next_entry::<String, String>()? {
                    if out.contains_key(&k) {
                        return Err(serde::de::Error::custom(format!(
                            "duplicate metadata key `{k}`"
                        )));
                    }
                    out.insert(k, v);
                }
                Ok(Metadata(out))
            }
        }

        deserializer.deserialize_map(MetaVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identifier {
    pub accession: String,
    pub identifier_class: String,
    pub source_db: String,
    #[serde(default)]
    pub metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Publication {
    pub pub_id: String,
    pub title: String,
    pub publisher: String,
    pub pub_year: i32,
    pub char_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pub_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_text_path: Option<PathBuf>,
}

/// A publication/accession linkage. References point into [`Corpus`] by key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub pub_id: String,
    pub accession: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    AnnotatorA,
    AnnotatorB,
    Consensus,
    Machine,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub pair_id: String,
    pub origin: Origin,
    pub data_accessed: bool,
    #[serde(default)]
    pub use_cases: Vec<String>,
    #[serde(default)]
    pub tools: Vec<String>,
}

/// Trim plus case-fold; the equivalence used for duplicate label detection.
pub fn normalize_label(s: &str) -> String {
    s.trim().to_lowercase()
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.pair_id.is_empty() {
            return Err(("pair_id".into(), "must not be empty".into()));
        }
        if !self.data_accessed && !(self.use_cases.is_empty() && self.tools.is_empty()) {
            return Err((
                "data_accessed".into(),
                "use_cases and tools must be empty when data_accessed is false".into(),
            ));
        }
        for (field, list) in [("use_cases", &self.use_cases), ("tools", &self.tools)] {
            let mut seen = HashSet::new();
            for item in list {
                if item.trim().is_empty() {
                    return Err((field.into(), "entries must be non-empty".into()));
                }
                if !seen.insert(normalize_label(item)) {
                    return Err((field.into(), format!("duplicate entry `{item}`")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub content: String,
}

impl Turn {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Turn {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTranscript {
    pub pair_id: String,
    pub turns: Vec<Turn>,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub node_trace: Vec<String>,
}

impl ChatTranscript {
    /// Checks turn alternation: optional leading system turn, then
    /// user/assistant strictly alternating starting with user.
    pub fn validate_turns(&self) -> Result<(), String> {
        let body = match self.turns.first() {
            Some(t) if t.role == Role::System => &self.turns[1..],
            _ => &self.turns[..],
        };
        for (i, turn) in body.iter().enumerate() {
            let want = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if turn.role != want {
                return Err(format!("turn {i} has role {:?}, expected {want:?}", turn.role));
            }
        }
        Ok(())
    }
}

/// Restricts which identifier class tags a corpus may contain.
#[derive(Debug, Clone, Default)]
pub struct CorpusConfig {
    pub identifier_classes: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PairLine {
    pair_id: String,
    publication: Publication,
    identifier: Identifier,
}

/// Pairs plus the publications and identifiers they reference. Immutable
/// once loaded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub publications: BTreeMap<String, Publication>,
    pub identifiers: BTreeMap<String, Identifier>,
    pub pairs: Vec<PairRecord>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, pair_id: &str) -> Option<&PairRecord> {
        self.pairs.iter().find(|p| p.pair_id == pair_id)
    }

    pub fn publication_of(&self, pair: &PairRecord) -> &Publication {
        &self.publications[&pair.pub_id]
    }

    pub fn identifier_of(&self, pair: &PairRecord) -> &Identifier {
        &self.identifiers[&pair.accession]
    }

    /// Adds one pair, enforcing every corpus invariant. `line` is only used
    /// for error reporting.
    pub fn insert(
        &mut self,
        line: usize,
        pair_id: String,
        publication: Publication,
        identifier: Identifier,
        config: &CorpusConfig,
    ) -> Result<(), CorpusError> {
        if pair_id.is_empty() {
            return Err(invalid(line, "pair_id", "must not be empty"));
        }
        if publication.pub_id.is_empty() {
            return Err(invalid(line, "publication.pub_id", "must not be empty"));
        }
        if identifier.accession.is_empty() {
            return Err(invalid(line, "identifier.accession", "must not be empty"));
        }
        if let Some(classes) = &config.identifier_classes {
            if !classes.contains(&identifier.identifier_class) {
                return Err(invalid(
                    line,
                    "identifier.identifier_class",
                    format!("`{}` is not a configured class", identifier.identifier_class),
                ));
            }
        }
        if self.pairs.iter().any(|p| p.pair_id == pair_id) {
            return Err(invalid(line, "pair_id", format!("`{pair_id}` repeated")));
        }
        if self
            .pairs
            .iter()
            .any(|p| p.pub_id == publication.pub_id && p.accession == identifier.accession)
        {
            return Err(CorpusError::DuplicatePair {
                line,
                pub_id: publication.pub_id,
                accession: identifier.accession,
            });
        }
        match self.publications.get(&publication.pub_id) {
            Some(existing) if *existing != publication => {
                return Err(invalid(
                    line,
                    "publication",
                    format!("conflicts with earlier record for `{}`", publication.pub_id),
                ))
            }
            _ => {}
        }
        match self.identifiers.get(&identifier.accession) {
            Some(existing) if *existing != identifier => {
                return Err(invalid(
                    line,
                    "identifier",
                    format!("conflicts with earlier record for `{}`", identifier.accession),
                ))
            }
            _ => {}
        }
        self.pairs.push(PairRecord {
            pair_id,
            pub_id: publication.pub_id.clone(),
            accession: identifier.accession.clone(),
        });
        self.publications
            .insert(publication.pub_id.clone(), publication);
        self.identifiers
            .insert(identifier.accession.clone(), identifier);
        Ok(())
    }

    /// Fails on the first record whose pair id is not in this corpus.
    pub fn check_refs<'a>(
        &self,
        pair_ids: impl IntoIterator<Item = &'a str>,
    ) -> Result<(), CorpusError> {
        let known: HashSet<&str> = self.pairs.iter().map(|p| p.pair_id.as_str()).collect();
        for id in pair_ids {
            if !known.contains(id) {
                return Err(CorpusError::DanglingPair(id.to_string()));
            }
        }
        Ok(())
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    load_corpus_with(path, &CorpusConfig::default())
}

pub fn load_corpus_with(path: &Path, config: &CorpusConfig) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::default();
    for (line, rec) in jsonl::read::<PairLine>(path)? {
        corpus.insert(line, rec.pair_id, rec.publication, rec.identifier, config)?;
    }
    Ok(corpus)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let lines: Vec<PairLine> = corpus
        .pairs
        .iter()
        .map(|p| PairLine {
            pair_id: p.pair_id.clone(),
            publication: corpus.publication_of(p).clone(),
            identifier: corpus.identifier_of(p).clone(),
        })
        .collect();
    Ok(jsonl::write(path, &lines)?)
}

pub fn save_annotations(records: &[AnnotationRecord], path: &Path) -> Result<(), CorpusError> {
    for (i, r) in records.iter().enumerate() {
        r.validate()
            .map_err(|(field, message)| invalid(i + 1, &field, message))?;
    }
    Ok(jsonl::write(path, records)?)
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, CorpusError> {
    let mut out = Vec::new();
    for (line, r) in jsonl::read::<AnnotationRecord>(path)? {
        r.validate()
            .map_err(|(field, message)| invalid(line, &field, message))?;
        out.push(r);
    }
    Ok(out)
}

pub fn save_transcripts(records: &[ChatTranscript], path: &Path) -> Result<(), CorpusError> {
    for (i, t) in records.iter().enumerate() {
        t.validate_turns().map_err(|m| invalid(i + 1, "turns", m))?;
    }
    Ok(jsonl::write(path, records)?)
}

pub fn load_transcripts(path: &Path) -> Result<Vec<ChatTranscript>, CorpusError> {
    let mut out = Vec::new();
    for (line, t) in jsonl::read::<ChatTranscript>(path)? {
        t.validate_turns().map_err(|m| invalid(line, "turns", m))?;
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    const PAIR_LINE: &str = r#"{"pair_id":"p1","publication":{"pub_id":"PMC6000001","title":"Invasive lineage","publisher":"ASM","pub_year":2018,"char_count":41234},"identifier":{"accession":"CP000046.1","identifier_class":"nucleotide-sequence","source_db":"NCBI GenBank Nucleotide Database","metadata":{"organism":"Staphylococcus aureus COL","strain":"COL"}}}"#;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let c = load_corpus(&write(&dir, "pairs.jsonl", "")).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn one_pair_line_field_by_field() {
        let dir = tempfile::tempdir().unwrap();
        let c = load_corpus(&write(&dir, "pairs.jsonl", PAIR_LINE)).unwrap();
        assert_eq!(c.len(), 1);
        let pair = &c.pairs[0];
        assert_eq!(pair.pair_id, "p1");
        assert_eq!(pair.pub_id, "PMC6000001");
        assert_eq!(pair.accession, "CP000046.1");
        let publication = c.publication_of(pair);
        assert_eq!(publication.title, "Invasive lineage");
        assert_eq!(publication.publisher, "ASM");
        assert_eq!(publication.pub_year, 2018);
        assert_eq!(publication.char_count, 41234);
        assert_eq!(publication.full_text_path, None);
        let id = c.identifier_of(pair);
        assert_eq!(id.identifier_class, "nucleotide-sequence");
        assert_eq!(id.source_db, "NCBI GenBank Nucleotide Database");
        let keys: Vec<_> = id.metadata.0.keys().cloned().collect();
        assert_eq!(keys, ["organism", "strain"]);
        assert_eq!(id.metadata.get("strain"), Some("COL"));
    }

    #[test]
    fn duplicate_pair_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let second = PAIR_LINE.replace("\"p1\"", "\"p2\"");
        let body = format!("{PAIR_LINE}\n{second}\n");
        let err = load_corpus(&write(&dir, "pairs.jsonl", &body)).unwrap_err();
        match err {
            CorpusError::DuplicatePair {
                line,
                pub_id,
                accession,
            } => {
                assert_eq!(line, 2);
                assert_eq!(pub_id, "PMC6000001");
                assert_eq!(accession, "CP000046.1");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_line_carries_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{PAIR_LINE}\nnot json\n");
        let err = load_corpus(&write(&dir, "pairs.jsonl", &body)).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn duplicate_metadata_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = PAIR_LINE.replace(r#""strain":"COL""#, r#""strain":"COL","strain":"X""#);
        let err = load_corpus(&write(&dir, "pairs.jsonl", &body)).unwrap_err();
        assert!(err.to_string().contains("duplicate metadata key"), "{err}");
    }

    #[test]
    fn unconfigured_class_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CorpusConfig {
            identifier_classes: Some(["assembly".to_string()].into()),
        };
        let err = load_corpus_with(&write(&dir, "pairs.jsonl", PAIR_LINE), &cfg).unwrap_err();
        assert!(matches!(err, CorpusError::Validation { ref field, .. } if field == "identifier.identifier_class"));
    }

    #[test]
    fn empty_accession_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = PAIR_LINE.replace("CP000046.1", "");
        let err = load_corpus(&write(&dir, "pairs.jsonl", &body)).unwrap_err();
        assert!(err.to_string().contains("identifier.accession"));
    }

    fn record(pair: &str, accessed: bool, uses: &[&str], tools: &[&str]) -> AnnotationRecord {
        AnnotationRecord {
            pair_id: pair.into(),
            origin: Origin::Consensus,
            data_accessed: accessed,
            use_cases: uses.iter().map(|s| s.to_string()).collect(),
            tools: tools.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn save_empty_annotations_gives_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        save_annotations(&[], &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "");
    }

    #[test]
    fn three_annotations_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        let recs = vec![
            record("p1", true, &["Phylogenetic analysis"], &["PhyML", "RAxML"]),
            record("p2", false, &[], &[]),
            AnnotationRecord {
                origin: Origin::Machine,
                ..record("p3", true, &[], &["BLAST"])
            },
        ];
        save_annotations(&recs, &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 3);
        assert_eq!(load_annotations(&p).unwrap(), recs);
    }

    #[test]
    fn not_accessed_with_use_cases_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        let err = save_annotations(&[record("p1", false, &["x"], &[])], &p).unwrap_err();
        assert!(matches!(err, CorpusError::Validation { ref field, .. } if field == "data_accessed"));
    }

    #[test]
    fn case_folded_duplicates_rejected() {
        let r = record("p1", true, &[], &["BLAST", " blast "]);
        assert_eq!(r.validate().unwrap_err().0, "tools");
        let r = record("p1", true, &["", "x"], &[]);
        assert_eq!(r.validate().unwrap_err().0, "use_cases");
    }

    #[test]
    fn transcript_alternation() {
        let mut t = ChatTranscript {
            pair_id: "p1".into(),
            turns: vec![
                Turn::new(Role::System, "s"),
                Turn::new(Role::User, "u"),
                Turn::new(Role::Assistant, "a"),
            ],
            input_tokens: 0,
            output_tokens: 0,
            node_trace: vec![],
        };
        assert!(t.validate_turns().is_ok());
        t.turns.push(Turn::new(Role::Assistant, "again"));
        assert!(t.validate_turns().is_err());
    }

    #[test]
    fn dangling_reference_detected() {
        let dir = tempfile::tempdir().unwrap();
        let c = load_corpus(&write(&dir, "pairs.jsonl", PAIR_LINE)).unwrap();
        assert!(c.check_refs(["p1"]).is_ok());
        assert!(matches!(
            c.check_refs(["p1", "p9"]),
            Err(CorpusError::DanglingPair(ref id)) if id == "p9"
        ));
    }
}
