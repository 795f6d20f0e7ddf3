//! HTTP review API for adjudicating unresolved values.
//!
//! State lives in memory behind one mutex and is persisted only through the
//! append-only decisions file, the same file `citefn score` reads. On start
//! the file is replayed over freshly auto-matched matrices.
//!
//! | method | path                          |                                       |
//! |--------|-------------------------------|---------------------------------------|
//! | GET    | `/api/queue`                  | pairs with unresolved counts          |
//! | GET    | `/api/pairs/{id}`             | values, matrix, queue, text excerpts  |
//! | POST   | `/api/pairs/{id}/decisions`   | apply verdicts and groups atomically  |
//! | GET    | `/api/metrics`                | pooled report over finished pairs     |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::corpus::{load_corpus, AnnotationRecord};
use crate::jats::find_mentions;
use crate::jsonl;
use crate::metrics::{compute_metrics, pool_and_report, Grouping, MetricSet, Report};
use crate::pipeline::{load_decisions, load_gold_and_machine, replay, text_path, PipelineError, Stage};
use crate::sargo::{
    apply_partial, auto_match, normalize_for_match, score_pair, tally, AggregationDecision, Category,
    EvaluationMatrix, PairAdjudication, SargoError, UnresolvedItem, Verdict,
};

/// Characters of context kept on each side of a mention.
pub const EXCERPT_RADIUS: usize = 400;
pub const MAX_EXCERPTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Open,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excerpt {
    /// Character offset of the excerpt in the full text.
    pub offset: usize,
    pub text: String,
    /// Mention offsets relative to `text`.
    pub mentions: Vec<(usize, usize)>,
}

struct PairState {
    gold: AnnotationRecord,
    machine: AnnotationRecord,
    matrix: EvaluationMatrix,
    submissions: usize,
    accession: Option<String>,
    text: Option<String>,
}

impl PairState {
    fn status(&self) -> SessionStatus {
        if self.matrix.is_complete() {
            SessionStatus::Complete
        } else {
            SessionStatus::Open
        }
    }
}

pub struct ReviewState {
    pairs: IndexMap<String, PairState>,
    decisions_path: Option<PathBuf>,
    set: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ReviewInputs {
    pub gold: PathBuf,
    pub machine: PathBuf,
    /// Append-only decisions log; created on first submission.
    pub decisions: Option<PathBuf>,
    /// Corpus and pipeline output directory, for text excerpts.
    pub pairs: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub set: Option<String>,
}

impl ReviewState {
    pub fn empty() -> Self {
        ReviewState {
            pairs: IndexMap::new(),
            decisions_path: None,
            set: None,
        }
    }

    pub fn load(inputs: &ReviewInputs) -> Result<Self, PipelineError> {
        let err = |pid: Option<&str>, e: &dyn std::fmt::Display| PipelineError {
            stage: Stage::Load,
            pair_id: pid.map(str::to_string),
            message: e.to_string(),
        };
        let annotated = load_gold_and_machine(&inputs.gold, &inputs.machine, Stage::Load)?;
        let mut decisions = match &inputs.decisions {
            Some(p) => load_decisions(p)?,
            None => IndexMap::new(),
        };
        let corpus = match &inputs.pairs {
            Some(p) => Some(load_corpus(p).map_err(|e| err(None, &e))?),
            None => None,
        };

        let mut pairs = IndexMap::new();
        for (gold, machine) in annotated {
            let id = gold.pair_id.clone();
            let base = auto_match(&gold, &machine, &normalize_for_match).map_err(|e| err(Some(&id), &e))?;
            let subs = decisions.shift_remove(&id).unwrap_or_default();
            let matrix = replay(&base, &subs).map_err(|e| err(Some(&id), &e))?;
            let pair = corpus.as_ref().and_then(|c| c.pair(&id));
            let text = match (pair, &inputs.run_dir) {
                (Some(p), Some(dir)) => std::fs::read_to_string(text_path(dir, &p.pub_id)).ok(),
                _ => None,
            };
            pairs.insert(
                id,
                PairState {
                    gold,
                    machine,
                    matrix,
                    submissions: subs.len(),
                    accession: pair.map(|p| p.accession.clone()),
                    text,
                },
            );
        }
        if let Some(id) = decisions.keys().next() {
            return Err(err(Some(id), &"decisions refer to a pair with no annotations"));
        }
        Ok(ReviewState {
            pairs,
            decisions_path: inputs.decisions.clone(),
            set: inputs.set.clone(),
        })
    }

    /// Pooled report over pairs whose queue is empty.
    pub fn report(&self) -> Option<Report> {
        let scores: Vec<_> = self
            .pairs
            .values()
            .filter_map(|p| score_pair(&p.matrix).ok())
            .map(|mut s| {
                s.set = self.set.clone();
                s
            })
            .collect();
        pool_and_report(&scores, Grouping::ByCategory).ok()
    }
}

pub type SharedState = Arc<Mutex<ReviewState>>;

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<SargoError> for ApiError {
    fn from(e: SargoError) -> Self {
        let status = match e {
            SargoError::Conflict { .. } => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError(status, e.to_string())
    }
}

fn not_found(id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("unknown pair `{id}`"))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueueEntry {
    pub pair_id: String,
    pub unresolved: usize,
    pub status: SessionStatus,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub pair_id: String,
    pub status: SessionStatus,
    pub submissions: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Preview {
    pub overall: MetricSet,
    pub by_category: BTreeMap<Category, MetricSet>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PairView {
    pub session: Session,
    pub gold: AnnotationRecord,
    pub machine: AnnotationRecord,
    pub matrix: EvaluationMatrix,
    pub unresolved: Vec<UnresolvedItem>,
    pub preview: Preview,
    pub excerpts: Vec<Excerpt>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub session: Session,
    pub matrix: EvaluationMatrix,
    pub preview: Preview,
}

/// Body of a decisions POST; the pair comes from the URL.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct DecisionRequest {
    #[serde(default)]
    pub verdicts: Vec<Verdict>,
    #[serde(default)]
    pub aggregations: Vec<AggregationDecision>,
}

fn session(id: &str, p: &PairState) -> Session {
    Session {
        session_id: format!("{id}#{}", p.submissions),
        pair_id: id.to_string(),
        status: p.status(),
        submissions: p.submissions,
    }
}

/// Metrics over the rows resolved so far.
pub fn preview(matrix: &EvaluationMatrix) -> Preview {
    let counts = tally(matrix);
    Preview {
        overall: compute_metrics(&counts.total()),
        by_category: Category::ALL
            .into_iter()
            .map(|c| (c, compute_metrics(&counts.get(c))))
            .collect(),
    }
}

/// Windows of text around each mention, merged when they overlap.
pub fn excerpts(text: &str, accession: &str) -> Vec<Excerpt> {
    let chars: Vec<char> = text.chars().collect();
    let mentions = find_mentions(text, accession);
    let slice = |a: usize, b: usize| chars[a..b].iter().collect::<String>();
    if mentions.is_empty() {
        let end = chars.len().min(2 * EXCERPT_RADIUS);
        return if end == 0 {
            Vec::new()
        } else {
            vec![Excerpt {
                offset: 0,
                text: slice(0, end),
                mentions: Vec::new(),
            }]
        };
    }
    // (start, end, mentions inside)
    type Window = (usize, usize, Vec<(usize, usize)>);
    let mut windows: Vec<Window> = Vec::new();
    for (s, e) in mentions {
        let lo = s.saturating_sub(EXCERPT_RADIUS);
        let hi = (e + EXCERPT_RADIUS).min(chars.len());
        match windows.last_mut() {
            Some(w) if lo <= w.1 => {
                w.1 = w.1.max(hi);
                w.2.push((s, e));
            }
            _ => windows.push((lo, hi, vec![(s, e)])),
        }
    }
    windows
        .into_iter()
        .take(MAX_EXCERPTS)
        .map(|(lo, hi, ms)| Excerpt {
            offset: lo,
            text: slice(lo, hi),
            mentions: ms.into_iter().map(|(s, e)| (s - lo, e - lo)).collect(),
        })
        .collect()
}

async fn get_queue(State(state): State<SharedState>) -> Json<Vec<QueueEntry>> {
    let st = state.lock().unwrap();
    Json(
        st.pairs
            .iter()
            .map(|(id, p)| QueueEntry {
                pair_id: id.clone(),
                unresolved: p.matrix.unresolved.len(),
                status: p.status(),
            })
            .collect(),
    )
}

async fn get_pair(
    State(state): State<SharedState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<PairView>, ApiError> {
    let st = state.lock().unwrap();
    let p = st.pairs.get(&id).ok_or_else(|| not_found(&id))?;
    let excerpts = match (&p.text, &p.accession) {
        (Some(t), Some(a)) => excerpts(t, a),
        _ => Vec::new(),
    };
    Ok(Json(PairView {
        session: session(&id, p),
        gold: p.gold.clone(),
        machine: p.machine.clone(),
        matrix: p.matrix.clone(),
        unresolved: p.matrix.unresolved.clone(),
        preview: preview(&p.matrix),
        excerpts,
    }))
}

async fn post_decisions(
    State(state): State<SharedState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<DecisionRequest>, JsonRejection>,
) -> Result<Json<DecisionResponse>, ApiError> {
    let mut st = state.lock().unwrap();
    let decisions_path = st.decisions_path.clone();
    let p = st.pairs.get_mut(&id).ok_or_else(|| not_found(&id))?;
    let Json(req) = body.map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
    if p.status() == SessionStatus::Complete {
        return Err(ApiError(
            StatusCode::CONFLICT,
            format!("pair `{id}` is already fully adjudicated"),
        ));
    }
    let adj = PairAdjudication {
        pair_id: id.clone(),
        verdicts: req.verdicts,
        aggregations: req.aggregations,
    };
    if adj.is_empty() {
        return Err(ApiError(StatusCode::UNPROCESSABLE_ENTITY, "no decisions submitted".into()));
    }
    let next = apply_partial(&p.matrix, &adj)?;
    if let Some(path) = &decisions_path {
        jsonl::append(path, &adj).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    }
    p.matrix = next;
    p.submissions += 1;
    Ok(Json(DecisionResponse {
        session: session(&id, p),
        matrix: p.matrix.clone(),
        preview: preview(&p.matrix),
    }))
}

async fn get_metrics(State(state): State<SharedState>) -> Json<serde_json::Value> {
    let st = state.lock().unwrap();
    let complete = st.pairs.values().filter(|p| p.status() == SessionStatus::Complete).count();
    let report = st.report();
    Json(json!({
        "complete_pairs": complete,
        "open_pairs": st.pairs.len() - complete,
        "report": report,
    }))
}

pub fn router(state: SharedState, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/queue", get(get_queue))
        .route("/api/pairs/{id}", get(get_pair))
        .route("/api/pairs/{id}/decisions", post(post_decisions))
        .route("/api/metrics", get(get_metrics))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(addr: std::net::SocketAddr, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app).await
}
