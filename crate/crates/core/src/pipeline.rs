//! Stage runner: extract, context, classify, auto-match.
//!
//! Every stage writes its artifacts into one output directory, and those
//! artifacts double as checkpoints: a stage whose output already exists is
//! skipped, and classification resumes after the last pair it recorded. A
//! rerun over complete outputs therefore leaves every file untouched.
//!
//! ```text
//! out/
//!   text/<pub_id>.txt     extracted plain text
//!   mentions.jsonl        accession offsets in that text, per pair
//!   contexts.jsonl        context statement per pair
//!   machine.jsonl         machine annotation per pair
//!   transcripts.jsonl     chat transcript per pair
//!   matches.jsonl         auto-matched evaluation matrix per pair
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::context::{build_statement, TemplateRegistry};
use crate::corpus::{AnnotationRecord, ChatTranscript, Corpus, Origin};
use crate::jats::{extract_text, find_mentions, ExtractionParams, PlainText};
use crate::jsonl;
use crate::llm::{ChatBackend, GenerationConfig};
use crate::orchestrator::{run_chat, PromptTree};
use crate::sargo::{apply_partial, auto_match, normalize_for_match, score_pair, EvaluationMatrix, PairAdjudication, PairScore};

pub const TEXT_DIR: &str = "text";
pub const MENTIONS_FILE: &str = "mentions.jsonl";
pub const CONTEXTS_FILE: &str = "contexts.jsonl";
pub const MACHINE_FILE: &str = "machine.jsonl";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const MATCHES_FILE: &str = "matches.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Extract,
    Context,
    Classify,
    AutoMatch,
    Score,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Extract => "extract",
            Stage::Context => "context",
            Stage::Classify => "classify",
            Stage::AutoMatch => "auto-match",
            Stage::Score => "score",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed{}: {message}", .pair_id.as_ref().map(|p| format!(" for pair `{p}`")).unwrap_or_default())]
pub struct PipelineError {
    pub stage: Stage,
    pub pair_id: Option<String>,
    pub message: String,
}

impl PipelineError {
    fn new(stage: Stage, pair_id: Option<&str>, err: impl fmt::Display) -> Self {
        PipelineError {
            stage,
            pair_id: pair_id.map(str::to_string),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub pair_id: String,
    pub accession: String,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub pair_id: String,
    pub pub_id: String,
    pub accession: String,
    /// Character offsets `[start, end)` into the extracted text.
    pub offsets: Vec<(usize, usize)>,
}

pub struct PipelineConfig<'a> {
    pub out_dir: PathBuf,
    /// Directory that relative `full_text_path` entries resolve against.
    pub base_dir: PathBuf,
    pub params: ExtractionParams,
    pub templates: &'a TemplateRegistry,
    pub tree: &'a PromptTree,
    pub generation: GenerationConfig,
    /// Consensus annotations; the auto-match stage runs only when given.
    pub gold: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub extracted: usize,
    pub contexts: usize,
    pub classified: usize,
    pub matched: usize,
    pub skipped_stages: Vec<String>,
}

/// Writes through a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_data()?;
    }
    fs::rename(tmp, path)
}

pub fn text_path(out_dir: &Path, pub_id: &str) -> PathBuf {
    out_dir.join(TEXT_DIR).join(format!("{pub_id}.txt"))
}

pub fn extract_file(path: &Path, params: &ExtractionParams) -> anyhow::Result<PlainText> {
    let xml = fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    Ok(extract_text(&xml, params)?)
}

pub fn run_extract(
    corpus: &Corpus,
    base_dir: &Path,
    out_dir: &Path,
    params: &ExtractionParams,
) -> Result<usize, PipelineError> {
    let stage = Stage::Extract;
    fs::create_dir_all(out_dir.join(TEXT_DIR)).map_err(|e| PipelineError::new(stage, None, e))?;
    let mut written = 0;
    let mut seen = BTreeSet::new();
    for pair in &corpus.pairs {
        let publication = corpus.publication_of(pair);
        if !seen.insert(publication.pub_id.as_str()) {
            continue;
        }
        let dest = text_path(out_dir, &publication.pub_id);
        if dest.exists() {
            continue;
        }
        let pid = Some(pair.pair_id.as_str());
        let src = publication
            .full_text_path
            .as_ref()
            .ok_or_else(|| PipelineError::new(stage, pid, "publication has no full_text_path"))?;
        let src = base_dir.join(src);
        if !src.is_file() {
            return Err(PipelineError::new(
                stage,
                pid,
                format!("full text not found at {}", src.display()),
            ));
        }
        let text = extract_file(&src, params).map_err(|e| PipelineError::new(stage, pid, e))?;
        write_atomic(&dest, text.text.as_bytes()).map_err(|e| PipelineError::new(stage, pid, e))?;
        written += 1;
    }

    let mentions_path = out_dir.join(MENTIONS_FILE);
    if !mentions_path.exists() {
        let mut mentions = Vec::new();
        for pair in &corpus.pairs {
            let text = read_text(corpus, out_dir, &pair.pair_id, stage)?;
            mentions.push(MentionRecord {
                pair_id: pair.pair_id.clone(),
                pub_id: pair.pub_id.clone(),
                accession: pair.accession.clone(),
                offsets: find_mentions(&text.text, &pair.accession),
            });
        }
        jsonl::write(&mentions_path, &mentions).map_err(|e| PipelineError::new(stage, None, e))?;
    }
    Ok(written)
}

fn read_text(corpus: &Corpus, out_dir: &Path, pair_id: &str, stage: Stage) -> Result<PlainText, PipelineError> {
    let pair = corpus
        .pair(pair_id)
        .ok_or_else(|| PipelineError::new(stage, Some(pair_id), "pair is not in the corpus"))?;
    let path = text_path(out_dir, &pair.pub_id);
    let text = fs::read_to_string(&path).map_err(|e| {
        PipelineError::new(stage, Some(pair_id), format!("{}: {e}", path.display()))
    })?;
    Ok(PlainText::from_text(&text))
}

pub fn run_context(
    corpus: &Corpus,
    out_dir: &Path,
    templates: &TemplateRegistry,
) -> Result<Option<usize>, PipelineError> {
    let path = out_dir.join(CONTEXTS_FILE);
    if path.exists() {
        return Ok(None);
    }
    let mut records = Vec::new();
    for pair in &corpus.pairs {
        let statement = build_statement(corpus.identifier_of(pair), templates)
            .map_err(|e| PipelineError::new(Stage::Context, Some(&pair.pair_id), e))?;
        records.push(ContextRecord {
            pair_id: pair.pair_id.clone(),
            accession: pair.accession.clone(),
            statement,
        });
    }
    jsonl::write(&path, &records).map_err(|e| PipelineError::new(Stage::Context, None, e))?;
    Ok(Some(records.len()))
}

fn load_or_empty<T: serde::de::DeserializeOwned>(path: &Path, stage: Stage) -> Result<Vec<T>, PipelineError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    Ok(jsonl::read(path)
        .map_err(|e| PipelineError::new(stage, None, e))?
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

/// Classifies every pair without a machine record yet, appending one line to
/// each of the machine and transcript stores per pair.
pub fn run_classify(
    corpus: &Corpus,
    out_dir: &Path,
    tree: &PromptTree,
    backend: &dyn ChatBackend,
    generation: &GenerationConfig,
) -> Result<usize, PipelineError> {
    let stage = Stage::Classify;
    let contexts: BTreeMap<String, String> = load_or_empty::<ContextRecord>(&out_dir.join(CONTEXTS_FILE), stage)?
        .into_iter()
        .map(|c| (c.pair_id, c.statement))
        .collect();
    let machine_path = out_dir.join(MACHINE_FILE);
    let transcripts_path = out_dir.join(TRANSCRIPTS_FILE);
    let done: BTreeSet<String> = load_or_empty::<AnnotationRecord>(&machine_path, stage)?
        .into_iter()
        .map(|r| r.pair_id)
        .collect();

    // A crash between the two appends can leave a transcript with no
    // machine record; drop it so the pair is redone cleanly.
    let transcripts: Vec<ChatTranscript> = load_or_empty(&transcripts_path, stage)?;
    if transcripts.iter().any(|t| !done.contains(&t.pair_id)) {
        let kept: Vec<&ChatTranscript> = transcripts.iter().filter(|t| done.contains(&t.pair_id)).collect();
        jsonl::write(&transcripts_path, kept).map_err(|e| PipelineError::new(stage, None, e))?;
    }

    let mut n = 0;
    for pair in &corpus.pairs {
        if done.contains(&pair.pair_id) {
            continue;
        }
        let pid = Some(pair.pair_id.as_str());
        let context = contexts
            .get(&pair.pair_id)
            .ok_or_else(|| PipelineError::new(stage, pid, "no context statement; run the context stage"))?;
        let text = read_text(corpus, out_dir, &pair.pair_id, stage)?;
        let out = run_chat(pair, &text, context, tree, backend, generation)
            .map_err(|e| PipelineError::new(stage, pid, e))?;
        jsonl::append(&transcripts_path, &out.transcript).map_err(|e| PipelineError::new(stage, pid, e))?;
        jsonl::append(&machine_path, &out.record).map_err(|e| PipelineError::new(stage, pid, e))?;
        n += 1;
    }
    Ok(n)
}

fn index_annotations(
    records: Vec<AnnotationRecord>,
    origin: Origin,
    stage: Stage,
) -> Result<IndexMap<String, AnnotationRecord>, PipelineError> {
    let mut out = IndexMap::new();
    for r in records {
        if r.origin != origin {
            return Err(PipelineError::new(
                stage,
                Some(&r.pair_id),
                format!("expected {origin:?} annotations, found {:?}", r.origin),
            ));
        }
        if out.contains_key(&r.pair_id) {
            return Err(PipelineError::new(stage, Some(&r.pair_id), "duplicate annotation"));
        }
        out.insert(r.pair_id.clone(), r);
    }
    Ok(out)
}

pub fn load_gold_and_machine(
    gold: &Path,
    machine: &Path,
    stage: Stage,
) -> Result<Vec<(AnnotationRecord, AnnotationRecord)>, PipelineError> {
    let load = |p: &Path| crate::corpus::load_annotations(p).map_err(|e| PipelineError::new(stage, None, e));
    let gold = index_annotations(load(gold)?, Origin::Consensus, stage)?;
    let mut machine = index_annotations(load(machine)?, Origin::Machine, stage)?;
    let mut out = Vec::new();
    for (id, g) in gold {
        let m = machine
            .shift_remove(&id)
            .ok_or_else(|| PipelineError::new(stage, Some(&id), "gold annotation has no machine annotation"))?;
        out.push((g, m));
    }
    if let Some(id) = machine.keys().next() {
        return Err(PipelineError::new(stage, Some(id), "machine annotation has no gold annotation"));
    }
    Ok(out)
}

pub fn run_auto_match(gold: &Path, out_dir: &Path) -> Result<Option<usize>, PipelineError> {
    let stage = Stage::AutoMatch;
    let path = out_dir.join(MATCHES_FILE);
    if path.exists() {
        return Ok(None);
    }
    let pairs = load_gold_and_machine(gold, &out_dir.join(MACHINE_FILE), stage)?;
    let mut matrices = Vec::new();
    for (g, m) in &pairs {
        matrices.push(auto_match(g, m, &normalize_for_match).map_err(|e| PipelineError::new(stage, Some(&g.pair_id), e))?);
    }
    jsonl::write(&path, &matrices).map_err(|e| PipelineError::new(stage, None, e))?;
    Ok(Some(matrices.len()))
}

pub fn run_pipeline(
    corpus: &Corpus,
    cfg: &PipelineConfig,
    backend: &dyn ChatBackend,
) -> Result<RunSummary, PipelineError> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| PipelineError::new(Stage::Load, None, e))?;
    let mut summary = RunSummary {
        extracted: run_extract(corpus, &cfg.base_dir, &cfg.out_dir, &cfg.params)?,
        ..RunSummary::default()
    };
    match run_context(corpus, &cfg.out_dir, cfg.templates)? {
        Some(n) => summary.contexts = n,
        None => summary.skipped_stages.push(Stage::Context.to_string()),
    }
    summary.classified = run_classify(corpus, &cfg.out_dir, cfg.tree, backend, &cfg.generation)?;
    if let Some(gold) = &cfg.gold {
        match run_auto_match(gold, &cfg.out_dir)? {
            Some(n) => summary.matched = n,
            None => summary.skipped_stages.push(Stage::AutoMatch.to_string()),
        }
    }
    Ok(summary)
}

/// Reviewer submissions grouped by pair, in file order. A missing file means
/// no decisions yet.
pub fn load_decisions(path: &Path) -> Result<IndexMap<String, Vec<PairAdjudication>>, PipelineError> {
    let mut out: IndexMap<String, Vec<PairAdjudication>> = IndexMap::new();
    for adj in load_or_empty::<PairAdjudication>(path, Stage::Score)? {
        out.entry(adj.pair_id.clone()).or_default().push(adj);
    }
    Ok(out)
}

/// Applies submissions in order on top of an auto-matched matrix.
pub fn replay(
    base: &EvaluationMatrix,
    submissions: &[PairAdjudication],
) -> Result<EvaluationMatrix, crate::sargo::SargoError> {
    let mut m = base.clone();
    for s in submissions {
        m = apply_partial(&m, s)?;
    }
    Ok(m)
}

/// Scores every gold/machine pair; each must be fully adjudicated.
pub fn score_files(
    gold: &Path,
    machine: &Path,
    decisions: &Path,
    set: Option<&str>,
) -> Result<Vec<PairScore>, PipelineError> {
    let stage = Stage::Score;
    let pairs = load_gold_and_machine(gold, machine, stage)?;
    let mut decisions = load_decisions(decisions)?;
    let mut scores = Vec::new();
    for (g, m) in &pairs {
        let pid = Some(g.pair_id.as_str());
        let err = |e| PipelineError::new(stage, pid, e);
        let base = auto_match(g, m, &normalize_for_match).map_err(err)?;
        let subs = decisions.shift_remove(&g.pair_id).unwrap_or_default();
        let matrix = replay(&base, &subs).map_err(err)?;
        let mut score = score_pair(&matrix).map_err(err)?;
        score.set = set.map(str::to_string);
        scores.push(score);
    }
    if let Some(id) = decisions.keys().next() {
        return Err(PipelineError::new(stage, Some(id), "decisions refer to a pair with no annotations"));
    }
    Ok(scores)
}
