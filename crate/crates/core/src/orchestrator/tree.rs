use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::parse::{Answer, AnswerKind};
use super::OrchestratorError;

pub const PLACEHOLDERS: &[&str] = &["full_text", "context_statement", "accession"];
pub const DEFAULT_REPROMPT: &str = "Answer only TRUE or FALSE.";

const BUILTIN_TREE: &str = include_str!("../../config/tree.json");

pub(super) static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").unwrap());

/// Which annotation field a node's answer fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputField {
    DataAccessed,
    UseCases,
    Tools,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptNode {
    pub prompt: String,
    pub answer_kind: AnswerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputField>,
    /// Boolean nodes route on `"true"` / `"false"`; other kinds on `"any"`.
    /// A `null` target ends the chat.
    pub edges: BTreeMap<String, Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTree {
    pub root: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    #[serde(default = "default_reprompt")]
    pub reprompt: String,
    pub nodes: BTreeMap<String, PromptNode>,
}

fn default_reprompt() -> String {
    DEFAULT_REPROMPT.to_string()
}

pub fn edge_key(answer: &Answer) -> &'static str {
    match answer {
        Answer::Bool(true) => "true",
        Answer::Bool(false) => "false",
        _ => "any",
    }
}

fn invalid(msg: impl Into<String>) -> OrchestratorError {
    OrchestratorError::InvalidTree(msg.into())
}

impl PromptTree {
    pub fn from_json(json: &str) -> Result<Self, OrchestratorError> {
        let tree: PromptTree = serde_json::from_str(json).map_err(|e| invalid(e.to_string()))?;
        tree.validate()?;
        Ok(tree)
    }

    pub fn from_file(path: &Path) -> Result<Self, OrchestratorError> {
        let json = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    /// The shipped tree with placeholder prompt wording.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_TREE).expect("shipped tree is valid")
    }

    pub fn node(&self, id: &str) -> Option<&PromptNode> {
        self.nodes.get(id)
    }

    /// Structural checks: known edge targets, edge keys matching answer
    /// kinds, known placeholders, full text in the root prompt, output
    /// fields bound to the right answer kind, every node reachable, no
    /// cycles, and on every path the use-case and tool questions are only
    /// reachable after data access resolved true.
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let root = self
            .nodes
            .get(&self.root)
            .ok_or_else(|| invalid(format!("root `{}` is not a node", self.root)))?;
        if !root.prompt.contains("{full_text}") {
            return Err(invalid("root prompt must contain {full_text}"));
        }

        for (id, node) in &self.nodes {
            let want: &[&str] = match node.answer_kind {
                AnswerKind::Boolean => &["false", "true"],
                _ => &["any"],
            };
            let keys: Vec<&str> = node.edges.keys().map(String::as_str).collect();
            if keys != want {
                return Err(invalid(format!("node `{id}` must have edges {want:?}, has {keys:?}")));
            }
            for target in node.edges.values().flatten() {
                if !self.nodes.contains_key(target) {
                    return Err(invalid(format!("node `{id}` points to unknown node `{target}`")));
                }
            }
            for cap in PLACEHOLDER.captures_iter(&node.prompt) {
                if !PLACEHOLDERS.contains(&&cap[1]) {
                    return Err(invalid(format!("node `{id}` uses unknown placeholder `{}`", &cap[0])));
                }
            }
            let kind_ok = match node.output {
                None => true,
                Some(OutputField::DataAccessed) => node.answer_kind == AnswerKind::Boolean,
                Some(_) => node.answer_kind == AnswerKind::StringArray,
            };
            if !kind_ok {
                return Err(invalid(format!("node `{id}` output does not match its answer kind")));
            }
        }

        let mut visiting = BTreeSet::new();
        let mut done = BTreeSet::new();
        self.check_acyclic(&self.root, &mut visiting, &mut done)?;
        if done.len() != self.nodes.len() {
            let orphan = self.nodes.keys().find(|k| !done.contains(*k)).unwrap();
            return Err(invalid(format!("node `{orphan}` is unreachable from the root")));
        }

        self.check_paths(&self.root, None, &mut BTreeSet::new())
    }

    fn check_acyclic(
        &self,
        id: &str,
        visiting: &mut BTreeSet<String>,
        done: &mut BTreeSet<String>,
    ) -> Result<(), OrchestratorError> {
        if done.contains(id) {
            return Ok(());
        }
        if !visiting.insert(id.to_string()) {
            return Err(invalid(format!("cycle through node `{id}`")));
        }
        for target in self.nodes[id].edges.values().flatten() {
            self.check_acyclic(target, visiting, done)?;
        }
        visiting.remove(id);
        done.insert(id.to_string());
        Ok(())
    }

    fn check_paths(
        &self,
        id: &str,
        accessed: Option<bool>,
        bound: &mut BTreeSet<OutputField>,
    ) -> Result<(), OrchestratorError> {
        let node = &self.nodes[id];
        if let Some(field) = node.output {
            if bound.contains(&field) {
                return Err(invalid(format!("`{field:?}` is asked twice on a path through `{id}`")));
            }
            if field != OutputField::DataAccessed && accessed != Some(true) {
                return Err(invalid(format!(
                    "node `{id}` elicits {field:?} on a path where data access is not established"
                )));
            }
        }
        for (key, target) in &node.edges {
            let Some(target) = target else { continue };
            let next_accessed = if node.output == Some(OutputField::DataAccessed) {
                Some(key == "true")
            } else {
                accessed
            };
            let inserted = node.output.is_some_and(|f| bound.insert(f));
            let r = self.check_paths(target, next_accessed, bound);
            if inserted {
                bound.remove(&node.output.unwrap());
            }
            r?;
        }
        Ok(())
    }

    /// Whether `trace` starts at the root, follows edges, and ends on a node
    /// with a terminal edge.
    pub fn is_valid_path(&self, trace: &[String]) -> bool {
        let Some(first) = trace.first() else {
            return false;
        };
        if *first != self.root {
            return false;
        }
        for pair in trace.windows(2) {
            let Some(node) = self.nodes.get(&pair[0]) else {
                return false;
            };
            if !node.edges.values().flatten().any(|t| *t == pair[1]) {
                return false;
            }
        }
        self.nodes
            .get(trace.last().unwrap())
            .is_some_and(|n| n.edges.values().any(Option::is_none))
    }
}
