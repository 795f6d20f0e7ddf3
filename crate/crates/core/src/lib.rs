//! Classification and evaluation harness for data citation function analysis.
//!
//! The crate covers the whole path from a publication's full-text XML to a
//! scored, pooled metrics report:
//!
//! * [`jats`] turns JATS article XML into block-structured plain text.
//! * [`context`] renders a natural-language statement about a cited accession
//!   from its metadata.
//! * [`llm`] talks to a chat-completions endpoint (or a scripted mock) with
//!   rate limiting, retries and token accounting.
//! * [`orchestrator`] walks a configurable decision tree of prompts for one
//!   publication/accession pair and parses the answers into an annotation.
//! * [`sargo`] aligns machine annotations with gold annotations, applies
//!   reviewer aggregation decisions and tallies confusion counts.
//! * [`metrics`] pools counts into precision, recall, F1 and hallucination
//!   rate, and estimates API cost from token statistics.
//! * [`sampler`] draws reproducible stratified samples for annotation.
//! * [`pipeline`] and [`review`] wire the stages together for the CLI and the
//!   adjudication HTTP service.

pub mod context;
pub mod corpus;
pub mod jats;
pub mod jsonl;
pub mod llm;
pub mod metrics;
pub mod orchestrator;
pub mod pipeline;
pub mod review;
pub mod sampler;
pub mod sargo;

pub use context::{build_statement, StatementTemplate, TemplateRegistry};
pub use corpus::{
    AnnotationRecord, ChatTranscript, Corpus, Identifier, Origin, PairRecord, Publication, Role,
    Turn,
};
pub use jats::{chunk_text, extract_text, Chunk, ExtractionParams, PlainText};
pub use metrics::{compute_metrics, estimate_cost, pool_and_report, CostEstimate, MetricSet};
pub use orchestrator::{parse_answer, run_chat, AnswerKind, MachineOutput, PromptTree};
pub use sargo::{
    apply_decisions, auto_match, score_pair, Category, ConfusionCounts, EvaluationMatrix,
    PairScore,
};
