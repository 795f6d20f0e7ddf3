use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use citefn::context::TemplateRegistry;
use citefn::corpus::{load_corpus, save_corpus, Corpus, Identifier, Metadata};
use citefn::jats::{chunk_text, ExtractionParams, JatsVersion};
use citefn::jsonl;
use citefn::llm::{ChatBackend, ChatClient, ClientConfig, GenerationConfig, MockScript, MockTransport, SystemClock, ENV_MODEL};
use citefn::metrics::{estimate_cost, median_tokens, pool_and_report, CostInputs, Grouping, ReportFormat};
use citefn::orchestrator::PromptTree;
use citefn::pipeline::{self, PipelineConfig};
use citefn::review::{self, ReviewInputs, ReviewState};
use citefn::sampler::{stratified_sample, StrataSpec};
use citefn::sargo::PairScore;

#[derive(Parser)]
#[command(name = "citefn", version, about = "Classify data citation functions and score them against gold annotations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert JATS XML to plain text (one file, or every publication in a corpus)
    Extract(ExtractArgs),
    /// Render the context statement for an accession (one, or every pair)
    Context(ContextArgs),
    /// Run the decision-tree chat for every pair not yet classified
    Classify(ClassifyArgs),
    /// Run extract, context, classify and auto-match in order, resuming from existing outputs
    Run(RunArgs),
    /// Score adjudicated pairs into per-pair confusion counts
    Score(ScoreArgs),
    /// Draw a stratified sample of pairs
    Sample(SampleArgs),
    /// Pool scores into a metrics table
    Report(ReportArgs),
    /// Estimate API cost from token counts
    EstimateCost(CostArgs),
    /// Serve the review API (and optionally the review UI's static files)
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
struct ExtractFlags {
    /// Drop tables
    #[arg(long)]
    no_tables: bool,
    /// Drop figure captions
    #[arg(long)]
    no_figures: bool,
    /// Keep section labels and titles
    #[arg(long)]
    keep_headers: bool,
    /// Keep front and back matter
    #[arg(long)]
    keep_front_back: bool,
    /// Expected JATS version; a mismatch with the document is an error
    #[arg(long, value_parser = ["1.2", "1.3"])]
    jats_version: Option<String>,
}

impl ExtractFlags {
    fn params(&self) -> ExtractionParams {
        ExtractionParams {
            include_tables: !self.no_tables,
            include_figure_text: !self.no_figures,
            drop_section_headers: !self.keep_headers,
            drop_front_back_matter: !self.keep_front_back,
            jats_version_hint: self.jats_version.as_deref().and_then(JatsVersion::parse),
        }
    }
}

#[derive(Args)]
struct ExtractArgs {
    /// One JATS XML file
    #[arg(long = "in", conflicts_with = "pairs", requires = "out")]
    input: Option<PathBuf>,
    /// Output text file (or JSONL of chunks with --chunks)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Split into block-aligned chunks of at most this many characters
    #[arg(long)]
    chunks: Option<usize>,
    /// Corpus file; extracts every publication into RUN_DIR/text
    #[arg(long, requires = "run_dir")]
    pairs: Option<PathBuf>,
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[command(flatten)]
    flags: ExtractFlags,
}

#[derive(Args)]
struct ContextArgs {
    #[arg(long, conflicts_with = "pairs", requires = "metadata")]
    accession: Option<String>,
    /// JSON object with identifier_class, source_db and metadata
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// Corpus file; writes RUN_DIR/contexts.jsonl
    #[arg(long, requires = "run_dir")]
    pairs: Option<PathBuf>,
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Template registry JSON; the shipped templates by default
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ChatFlags {
    /// Prompt tree JSON; the shipped tree by default
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Scripted replies (JSON array or JSONL) instead of a live endpoint
    #[arg(long)]
    mock: Option<PathBuf>,
    #[arg(long, env = ENV_MODEL, default_value = "llama-3.1-405b-instruct")]
    model: String,
    #[arg(long, default_value_t = 1024)]
    max_output_tokens: u32,
    /// Per-request timeout in seconds
    #[arg(long, default_value_t = 600.0)]
    timeout: f64,
}

impl ChatFlags {
    fn tree(&self) -> Result<PromptTree> {
        Ok(match &self.tree {
            Some(p) => PromptTree::from_file(p)?,
            None => PromptTree::builtin(),
        })
    }

    fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            model_name: self.model.clone(),
            sampling_enabled: false,
            max_output_tokens: self.max_output_tokens,
            request_timeout: std::time::Duration::from_secs_f64(self.timeout),
        }
    }

    fn backend(&self) -> Result<Box<dyn ChatBackend>> {
        Ok(match &self.mock {
            Some(p) => Box::new(ChatClient::new(
                MockTransport::new(MockScript::from_file(p)?),
                Arc::new(SystemClock::default()),
            )),
            None => Box::new(ChatClient::http(&ClientConfig::from_env()?)?),
        })
    }
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Directory holding extracted text and contexts; machine output goes here too
    #[arg(long)]
    run_dir: PathBuf,
    #[command(flatten)]
    chat: ChatFlags,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Consensus annotations; enables the auto-match stage
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    templates: Option<PathBuf>,
    #[command(flatten)]
    chat: ChatFlags,
    #[command(flatten)]
    flags: ExtractFlags,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    machine: PathBuf,
    /// Decisions log; a missing file means no decisions
    #[arg(long)]
    decisions: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Set label carried into reports, e.g. "Evaluation"
    #[arg(long)]
    set: Option<String>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupingArg {
    ByCategory,
    Overall,
}

#[derive(Args)]
struct ReportArgs {
    /// One or more score files
    #[arg(long, required = true, num_args = 1..)]
    scores: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
    #[arg(long, value_enum, default_value = "by-category")]
    grouping: GroupingArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long)]
    pairs: u64,
    #[arg(long, required_unless_present = "transcripts")]
    in_tokens: Option<u64>,
    #[arg(long, required_unless_present = "transcripts")]
    out_tokens: Option<u64>,
    /// Take median token counts from a transcripts file instead
    #[arg(long, conflicts_with_all = ["in_tokens", "out_tokens"])]
    transcripts: Option<PathBuf>,
    /// Price per 1,000 input tokens
    #[arg(long)]
    in_price: f64,
    /// Price per 1,000 output tokens
    #[arg(long)]
    out_price: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    machine: PathBuf,
    #[arg(long)]
    decisions: PathBuf,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    set: Option<String>,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Directory of static UI assets
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
}

fn templates(path: &Option<PathBuf>) -> Result<TemplateRegistry> {
    Ok(match path {
        Some(p) => TemplateRegistry::from_file(p)?,
        None => TemplateRegistry::builtin(),
    })
}

fn base_dir(pairs: &Path) -> PathBuf {
    pairs.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load(pairs: &Path) -> Result<Corpus> {
    load_corpus(pairs).with_context(|| format!("loading {}", pairs.display()))
}

fn extract(a: ExtractArgs) -> Result<()> {
    let params = a.flags.params();
    if let Some(pairs) = &a.pairs {
        let corpus = load(pairs)?;
        let dir = a.run_dir.as_ref().unwrap();
        let n = pipeline::run_extract(&corpus, &base_dir(pairs), dir, &params)?;
        eprintln!("extracted {n} publications");
        return Ok(());
    }
    let (Some(input), Some(out)) = (&a.input, &a.out) else {
        bail!("give either --in and --out, or --pairs and --run-dir");
    };
    let text = pipeline::extract_file(input, &params)?;
    match a.chunks {
        Some(max) => jsonl::write(out, &chunk_text(&text, max)?)?,
        None => pipeline::write_atomic(out, text.text.as_bytes())?,
    }
    Ok(())
}

#[derive(Deserialize)]
struct MetadataFile {
    identifier_class: String,
    source_db: String,
    #[serde(default)]
    metadata: Metadata,
}

fn context(a: ContextArgs) -> Result<()> {
    let reg = templates(&a.templates)?;
    if let Some(pairs) = &a.pairs {
        let corpus = load(pairs)?;
        let dir = a.run_dir.as_ref().unwrap();
        fs::create_dir_all(dir)?;
        match pipeline::run_context(&corpus, dir, &reg)? {
            Some(n) => eprintln!("wrote {n} context statements"),
            None => eprintln!("{} exists; skipped", pipeline::CONTEXTS_FILE),
        }
        return Ok(());
    }
    let (Some(accession), Some(meta)) = (a.accession, a.metadata) else {
        bail!("give either --accession and --metadata, or --pairs and --run-dir");
    };
    let m: MetadataFile = serde_json::from_str(&fs::read_to_string(&meta)?)
        .with_context(|| format!("reading {}", meta.display()))?;
    let id = Identifier {
        accession,
        identifier_class: m.identifier_class,
        source_db: m.source_db,
        metadata: m.metadata,
    };
    println!("{}", citefn::build_statement(&id, &reg)?);
    Ok(())
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let corpus = load(&a.pairs)?;
    let backend = a.chat.backend()?;
    let n = pipeline::run_classify(&corpus, &a.run_dir, &a.chat.tree()?, backend.as_ref(), &a.chat.generation())?;
    eprintln!("classified {n} pairs");
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let corpus = load(&a.pairs)?;
    let reg = templates(&a.templates)?;
    let tree = a.chat.tree()?;
    let cfg = PipelineConfig {
        out_dir: a.out_dir.clone(),
        base_dir: base_dir(&a.pairs),
        params: a.flags.params(),
        templates: &reg,
        tree: &tree,
        generation: a.chat.generation(),
        gold: a.gold.clone(),
    };
    let backend = a.chat.backend()?;
    let summary = pipeline::run_pipeline(&corpus, &cfg, backend.as_ref())?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let scores = pipeline::score_files(&a.gold, &a.machine, &a.decisions, a.set.as_deref())?;
    jsonl::write(&a.out, &scores)?;
    eprintln!("scored {} pairs", scores.len());
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let corpus = load(&a.pairs)?;
    let spec: StrataSpec = serde_json::from_str(&fs::read_to_string(&a.spec)?)
        .with_context(|| format!("reading {}", a.spec.display()))?;
    let picked = stratified_sample(&corpus, &spec)?;
    let mut sub = Corpus::default();
    for p in &picked {
        sub.publications.insert(p.pub_id.clone(), corpus.publication_of(p).clone());
        sub.identifiers.insert(p.accession.clone(), corpus.identifier_of(p).clone());
        sub.pairs.push(p.clone());
    }
    save_corpus(&sub, &a.out)?;
    eprintln!("sampled {} of {} pairs", picked.len(), corpus.len());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut scores: Vec<PairScore> = Vec::new();
    for p in &a.scores {
        scores.extend(jsonl::read::<PairScore>(p)?.into_iter().map(|(_, s)| s));
    }
    let grouping = match a.grouping {
        GroupingArg::ByCategory => Grouping::ByCategory,
        GroupingArg::Overall => Grouping::Overall,
    };
    let format = match a.format {
        FormatArg::Table => ReportFormat::Table,
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Json => ReportFormat::Json,
    };
    let out = pool_and_report(&scores, grouping)?.render(format)?;
    match &a.out {
        Some(p) => pipeline::write_atomic(p, out.as_bytes())?,
        None => print!("{out}"),
    }
    Ok(())
}

fn estimate(a: CostArgs) -> Result<()> {
    let (median_in, median_out) = match &a.transcripts {
        Some(p) => median_tokens(&citefn::corpus::load_transcripts(p)?),
        None => (a.in_tokens.unwrap(), a.out_tokens.unwrap()),
    };
    let est = estimate_cost(&CostInputs {
        pair_count: a.pairs,
        median_input_tokens: median_in,
        median_output_tokens: median_out,
        input_price: a.in_price,
        output_price: a.out_price,
    })?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&est)?);
    } else {
        println!(
            "{} pairs x ({} in x {} + {} out x {}) / 1000 = {}",
            est.pair_count, est.median_input_tokens, est.input_price, est.median_output_tokens, est.output_price,
            est.display_total()
        );
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let state = ReviewState::load(&ReviewInputs {
        gold: a.gold,
        machine: a.machine,
        decisions: Some(a.decisions),
        pairs: a.pairs,
        run_dir: a.run_dir,
        set: a.set,
    })?;
    let app = review::router(Arc::new(Mutex::new(state)), a.static_dir.as_deref());
    let addr = std::net::SocketAddr::new(a.host, a.port);
    eprintln!("listening on http://{addr}");
    tokio::runtime::Runtime::new()?.block_on(review::serve(addr, app))?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Extract(a) => extract(a),
        Command::Context(a) => context(a),
        Command::Classify(a) => classify(a),
        Command::Run(a) => run(a),
        Command::Score(a) => score(a),
        Command::Sample(a) => sample(a),
        Command::Report(a) => report(a),
        Command::EstimateCost(a) => estimate(a),
        Command::Serve(a) => serve(a),
    }
}
