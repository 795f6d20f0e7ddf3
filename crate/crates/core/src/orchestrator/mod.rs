//! Decision-tree chat for one publication/accession pair.
//!
//! The conversation starts with the root prompt (which carries the full text)
//! and then follows the tree one question at a time. The whole history is
//! resent on every turn because chat endpoints keep no state. A boolean reply
//! that cannot be read gets one follow-up asking for TRUE or FALSE only.

mod parse;
mod tree;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationRecord, ChatTranscript, Origin, PairRecord, Role, Turn};
use crate::jats::PlainText;
use crate::llm::{ChatBackend, GenerationConfig, LlmError};

pub use parse::{parse_answer, Answer, AnswerKind, ParseError, MAX_BOOLEAN_WORDS};
pub use tree::{edge_key, OutputField, PromptNode, PromptTree, DEFAULT_REPROMPT, PLACEHOLDERS};

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("invalid prompt tree: {0}")]
    InvalidTree(String),
    #[error("pair {0}: publication text is empty")]
    EmptyText(String),
    #[error("node `{node}`: could not read the model's answer: {raw:?}")]
    ParseFailure { node: String, raw: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineOutput {
    pub record: AnnotationRecord,
    pub transcript: ChatTranscript,
}

impl MachineOutput {
    pub fn node_trace(&self) -> &[String] {
        &self.transcript.node_trace
    }
}

/// Single-pass substitution, so substituted text is never re-expanded.
fn render(template: &str, full_text: &str, context: &str, accession: &str) -> String {
    tree::PLACEHOLDER
        .replace_all(template, |caps: &regex::Captures| match &caps[1] {
            "full_text" => full_text.to_string(),
            "context_statement" => context.to_string(),
            "accession" => accession.to_string(),
            _ => caps[0].to_string(),
        })
        .into_owned()
}

struct Conversation<'a> {
    client: &'a dyn ChatBackend,
    cfg: &'a GenerationConfig,
    turns: Vec<Turn>,
    input_tokens: u64,
    output_tokens: u64,
}

impl Conversation<'_> {
    fn ask(&mut self, prompt: String) -> Result<String, LlmError> {
        self.turns.push(Turn::new(Role::User, prompt));
        let resp = self.client.chat(&self.turns, self.cfg)?;
        self.input_tokens += resp.input_tokens;
        self.output_tokens += resp.output_tokens;
        self.turns.push(Turn::new(Role::Assistant, resp.content.clone()));
        Ok(resp.content)
    }
}

pub fn run_chat(
    pair: &PairRecord,
    full_text: &PlainText,
    context: &str,
    tree: &PromptTree,
    client: &dyn ChatBackend,
    cfg: &GenerationConfig,
) -> Result<MachineOutput, OrchestratorError> {
    if full_text.text.trim().is_empty() {
        return Err(OrchestratorError::EmptyText(pair.pair_id.clone()));
    }
    cfg.check_deterministic()?;
    tree.validate()?;

    let mut convo = Conversation {
        client,
        cfg,
        turns: Vec::new(),
        input_tokens: 0,
        output_tokens: 0,
    };
    if let Some(system) = &tree.system_prompt {
        convo.turns.push(Turn::new(Role::System, system.clone()));
    }

    let mut trace = Vec::new();
    let mut data_accessed = None;
    let mut use_cases = Vec::new();
    let mut tools = Vec::new();

    let mut current = Some(tree.root.clone());
    while let Some(id) = current {
        let node = &tree.nodes[&id];
        trace.push(id.clone());

        let raw = convo.ask(render(&node.prompt, &full_text.text, context, &pair.accession))?;
        let answer = match parse_answer(&raw, node.answer_kind) {
            Ok(a) => a,
            Err(_) => {
                let retry = convo.ask(tree.reprompt.clone())?;
                parse_answer(&retry, node.answer_kind).map_err(|_| {
                    OrchestratorError::ParseFailure {
                        node: id.clone(),
                        raw: retry.clone(),
                    }
                })?
            }
        };

        match (node.output, &answer) {
            (Some(OutputField::DataAccessed), Answer::Bool(b)) => data_accessed = Some(*b),
            (Some(OutputField::UseCases), Answer::List(v)) => use_cases = v.clone(),
            (Some(OutputField::Tools), Answer::List(v)) => tools = v.clone(),
            _ => {}
        }

        current = node.edges.get(edge_key(&answer)).cloned().flatten();
    }

    let data_accessed = data_accessed.unwrap_or(false);
    if !data_accessed {
        use_cases.clear();
        tools.clear();
    }

    Ok(MachineOutput {
        record: AnnotationRecord {
            pair_id: pair.pair_id.clone(),
            origin: Origin::Machine,
            data_accessed,
            use_cases,
            tools,
        },
        transcript: ChatTranscript {
            pair_id: pair.pair_id.clone(),
            turns: convo.turns,
            input_tokens: convo.input_tokens,
            output_tokens: convo.output_tokens,
            node_trace: trace,
        },
    })
}
