use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::normalize_label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Boolean,
    Text,
    StringArray,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Bool(bool),
    List(Vec<String>),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("expected exactly one of TRUE or FALSE in a short reply, got {0:?}")]
    Ambiguous(String),
}

/// Boolean replies longer than this many words are treated as ambiguous.
pub const MAX_BOOLEAN_WORDS: usize = 40;

static BOOL_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(true|false)\b").unwrap());
static BULLET: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:[-*•]|\d+[.)]|\(\d+\))\s+").unwrap());

const EMPTY_MARKERS: &[&str] = &["none", "n/a", "na", "not applicable", "[]"];

pub fn parse_answer(raw: &str, kind: AnswerKind) -> Result<Answer, ParseError> {
    match kind {
        AnswerKind::Text => Ok(Answer::Text(raw.to_string())),
        AnswerKind::Boolean => parse_bool(raw).map(Answer::Bool),
        AnswerKind::StringArray => Ok(Answer::List(parse_list(raw))),
    }
}

fn parse_bool(raw: &str) -> Result<bool, ParseError> {
    if raw.split_whitespace().count() > MAX_BOOLEAN_WORDS {
        return Err(ParseError::Ambiguous(raw.to_string()));
    }
    let found: HashSet<bool> = BOOL_TOKEN
        .find_iter(raw)
        .map(|m| m.as_str().eq_ignore_ascii_case("true"))
        .collect();
    match found.len() {
        1 => Ok(*found.iter().next().unwrap()),
        _ => Err(ParseError::Ambiguous(raw.to_string())),
    }
}

fn clean_item(s: &str) -> Option<String> {
    let s = s.trim();
    let s = s.strip_suffix('.').unwrap_or(s).trim();
    let s = s
        .strip_prefix('"')
        .and_then(|x| x.strip_suffix('"'))
        .unwrap_or(s)
        .trim();
    if s.is_empty() || EMPTY_MARKERS.contains(&s.to_lowercase().as_str()) {
        None
    } else {
        Some(s.to_string())
    }
}

fn parse_list(raw: &str) -> Vec<String> {
    let trimmed = raw.trim();
    let items: Vec<String> = if let Ok(arr) = serde_json::from_str::<Vec<String>>(trimmed) {
        arr
    } else {
        let lines: Vec<&str> = trimmed.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if lines.len() == 1 && !BULLET.is_match(lines[0]) {
            let sep = if lines[0].contains(';') { ';' } else { ',' };
            lines[0].split(sep).map(str::to_string).collect()
        } else {
            lines
                .iter()
                .map(|l| BULLET.replace(l, "").into_owned())
                .collect()
        }
    };

    let mut seen = HashSet::new();
    items
        .iter()
        .filter_map(|s| clean_item(s))
        .filter(|s| seen.insert(normalize_label(s)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(raw: &str) -> Vec<String> {
        match parse_answer(raw, AnswerKind::StringArray).unwrap() {
            Answer::List(v) => v,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bare_true() {
        assert_eq!(parse_answer("TRUE", AnswerKind::Boolean), Ok(Answer::Bool(true)));
    }

    #[test]
    fn embedded_in_sentence() {
        assert_eq!(
            parse_answer("The answer is false.", AnswerKind::Boolean),
            Ok(Answer::Bool(false))
        );
        assert_eq!(parse_answer("**True**", AnswerKind::Boolean), Ok(Answer::Bool(true)));
    }

    #[test]
    fn ambiguous_booleans() {
        for raw in ["maybe", "TRUE or FALSE", "", "untrue"] {
            assert!(
                parse_answer(raw, AnswerKind::Boolean).is_err(),
                "{raw:?} should be ambiguous"
            );
        }
        let long = format!("TRUE {}", "word ".repeat(MAX_BOOLEAN_WORDS));
        assert!(parse_answer(&long, AnswerKind::Boolean).is_err());
    }

    #[test]
    fn numbered_list() {
        assert_eq!(list("1. PhyML\n2. RAxML"), vec!["PhyML", "RAxML"]);
    }

    #[test]
    fn other_list_shapes() {
        assert_eq!(list("- BLAST\n* MUMmer\n• GLIMMER\n"), vec!["BLAST", "MUMmer", "GLIMMER"]);
        assert_eq!(list("BLAST, MUMmer"), vec!["BLAST", "MUMmer"]);
        assert_eq!(
            list("Outgroup selection, rooted tree; dating"),
            vec!["Outgroup selection, rooted tree", "dating"]
        );
        assert_eq!(list(r#"["PhyML", "RAxML 8.2.11"]"#), vec!["PhyML", "RAxML 8.2.11"]);
        assert_eq!(list("1) Rooting of the tree.\n(2) \"BEAST\""), vec!["Rooting of the tree", "BEAST"]);
    }

    #[test]
    fn empty_and_none_lists() {
        assert!(list("").is_empty());
        assert!(list("None").is_empty());
        assert!(list("\n\n").is_empty());
    }

    #[test]
    fn duplicates_collapse() {
        assert_eq!(list("BLAST\nblast \nMUMmer"), vec!["BLAST", "MUMmer"]);
    }

    #[test]
    fn text_passthrough() {
        let raw = "  The accession appears in Methods.\n";
        assert_eq!(parse_answer(raw, AnswerKind::Text), Ok(Answer::Text(raw.into())));
    }
}
