//! Context statements describing a cited accession.
//!
//! Each identifier class has a template. Placeholders are written `{key}` and
//! resolve against the identifier's `accession`, `source_db` and
//! `identifier_class` fields first, then its metadata. `{key|a}` prefixes the
//! value with the indefinite article ("a Prokaryote", "an Assembly").
//! Text wrapped in `[[ … ]]` is rendered only when every placeholder directly
//! inside it resolves; segments may nest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Identifier;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("no statement template for identifier class `{0}`")]
    UnknownClass(String),
    #[error("accession {accession}: metadata key `{key}` is required but missing")]
    IncompleteMetadata { accession: String, key: String },
    #[error("template for `{class}`: {message}")]
    InvalidTemplate { class: String, message: String },
    #[error("template registry: {0}")]
    Registry(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementTemplate {
    #[serde(rename = "class")]
    pub identifier_class: String,
    pub template: String,
    pub required_keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Part {
    Literal(String),
    Slot { key: String, article: bool },
    Optional(Vec<Part>),
}

fn template_error(class: &str, message: impl Into<String>) -> ContextError {
    ContextError::InvalidTemplate {
        class: class.to_string(),
        message: message.into(),
    }
}

fn parse_template(class: &str, src: &str) -> Result<Vec<Part>, ContextError> {
    let mut stack: Vec<Vec<Part>> = vec![Vec::new()];
    let mut lit = String::new();
    let mut rest = src;

    fn flush(lit: &mut String, parts: &mut Vec<Part>) {
        if !lit.is_empty() {
            parts.push(Part::Literal(std::mem::take(lit)));
        }
    }

    while let Some(c) = rest.chars().next() {
        if let Some(after) = rest.strip_prefix("[[") {
            flush(&mut lit, stack.last_mut().unwrap());
            stack.push(Vec::new());
            rest = after;
        } else if let Some(after) = rest.strip_prefix("]]") {
            flush(&mut lit, stack.last_mut().unwrap());
            if stack.len() < 2 {
                return Err(template_error(class, "unmatched `]]`"));
            }
            let inner = stack.pop().unwrap();
            stack.last_mut().unwrap().push(Part::Optional(inner));
            rest = after;
        } else if c == '{' {
            let end = rest
                .find('}')
                .ok_or_else(|| template_error(class, "unclosed `{`"))?;
            let body = &rest[1..end];
            let (key, article) = match body.split_once('|') {
                Some((k, "a")) => (k, true),
                Some((_, f)) => return Err(template_error(class, format!("unknown filter `{f}`"))),
                None => (body, false),
            };
            if key.is_empty() || key.contains(['{', '[', ']']) {
                return Err(template_error(class, format!("bad placeholder `{{{body}}}`")));
            }
            flush(&mut lit, stack.last_mut().unwrap());
            stack.last_mut().unwrap().push(Part::Slot {
                key: key.to_string(),
                article,
            });
            rest = &rest[end + 1..];
        } else if c == '}' {
            return Err(template_error(class, "unmatched `}`"));
        } else {
            lit.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    flush(&mut lit, stack.last_mut().unwrap());
    if stack.len() != 1 {
        return Err(template_error(class, "unclosed `[[`"));
    }
    Ok(stack.pop().unwrap())
}

fn unconditional_keys(parts: &[Part]) -> impl Iterator<Item = &str> {
    parts.iter().filter_map(|p| match p {
        Part::Slot { key, .. } => Some(key.as_str()),
        _ => None,
    })
}

impl StatementTemplate {
    /// Placeholders outside conditional segments must be listed in
    /// `required_keys`, and that list must be non-empty.
    fn compile(&self) -> Result<Vec<Part>, ContextError> {
        let parts = parse_template(&self.identifier_class, &self.template)?;
        if self.required_keys.is_empty() {
            return Err(template_error(&self.identifier_class, "required_keys is empty"));
        }
        for key in unconditional_keys(&parts) {
            if !self.required_keys.iter().any(|k| k == key) {
                return Err(template_error(
                    &self.identifier_class,
                    format!("placeholder `{key}` is not in required_keys"),
                ));
            }
        }
        Ok(parts)
    }
}

/// Templates keyed by identifier class. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, (StatementTemplate, Vec<Part>)>,
}

const BUILTIN_TEMPLATES: &str = include_str!("../config/templates.json");

impl TemplateRegistry {
    pub fn new(templates: Vec<StatementTemplate>) -> Result<Self, ContextError> {
        let mut map = BTreeMap::new();
        for t in templates {
            let parts = t.compile()?;
            let class = t.identifier_class.clone();
            if map.insert(class.clone(), (t, parts)).is_some() {
                return Err(ContextError::Registry(format!("class `{class}` defined twice")));
            }
        }
        Ok(TemplateRegistry { templates: map })
    }

    pub fn from_json(json: &str) -> Result<Self, ContextError> {
        let templates: Vec<StatementTemplate> =
            serde_json::from_str(json).map_err(|e| ContextError::Registry(e.to_string()))?;
        Self::new(templates)
    }

    pub fn from_file(path: &Path) -> Result<Self, ContextError> {
        let json = std::fs::read_to_string(path)
            .map_err(|e| ContextError::Registry(format!("{}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    /// The shipped registry covering nucleotide-sequence and assembly records.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_TEMPLATES).expect("shipped templates are valid")
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn get(&self, class: &str) -> Option<&StatementTemplate> {
        self.templates.get(class).map(|(t, _)| t)
    }
}

fn lookup<'a>(id: &'a Identifier, key: &str) -> Option<&'a str> {
    let v = match key {
        "accession" => Some(id.accession.as_str()),
        "source_db" => Some(id.source_db.as_str()),
        "identifier_class" => Some(id.identifier_class.as_str()),
        _ => id.metadata.get(key),
    };
    v.filter(|s| !s.trim().is_empty())
}

fn with_article(value: &str) -> String {
    let vowel = value
        .chars()
        .next()
        .is_some_and(|c| "aeiouAEIOU".contains(c));
    format!("{} {value}", if vowel { "an" } else { "a" })
}

fn render(parts: &[Part], id: &Identifier, out: &mut String) {
    for p in parts {
        match p {
            Part::Literal(s) => out.push_str(s),
            Part::Slot { key, article } => {
                let v = lookup(id, key).unwrap_or_default();
                if *article {
                    out.push_str(&with_article(v));
                } else {
                    out.push_str(v);
                }
            }
            Part::Optional(inner) => {
                if unconditional_keys(inner).all(|k| lookup(id, k).is_some()) {
                    render(inner, id, out);
                }
            }
        }
    }
}

pub fn build_statement(id: &Identifier, templates: &TemplateRegistry) -> Result<String, ContextError> {
    let (template, parts) = templates
        .templates
        .get(&id.identifier_class)
        .ok_or_else(|| ContextError::UnknownClass(id.identifier_class.clone()))?;
    for key in &template.required_keys {
        if lookup(id, key).is_none() {
            return Err(ContextError::IncompleteMetadata {
                accession: id.accession.clone(),
                key: key.clone(),
            });
        }
    }
    let mut out = String::new();
    render(parts, id, &mut out);
    Ok(out)
}
