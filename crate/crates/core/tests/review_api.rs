use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use citefn::review::{router, ReviewInputs, ReviewState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn tables() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/tables")
}

/// Decision-file lines for one pair, minus the pair id, as a POST body.
fn fixture_decisions(pair: &str) -> Value {
    let text = std::fs::read_to_string(tables().join("decisions.jsonl")).unwrap();
    let mut line: Value = text
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .find(|v| v["pair_id"] == pair)
        .unwrap();
    line.as_object_mut().unwrap().remove("pair_id");
    line
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn loaded(decisions: PathBuf) -> Router {
    let inputs = ReviewInputs {
        gold: tables().join("gold.jsonl"),
        machine: tables().join("machine.jsonl"),
        decisions: Some(decisions),
        set: Some("Evaluation".into()),
        ..Default::default()
    };
    router(Arc::new(Mutex::new(ReviewState::load(&inputs).unwrap())), None)
}

fn approx(v: &Value, want: f64) -> bool {
    (v.as_f64().unwrap() - want).abs() < 1e-3
}

#[tokio::test]
async fn empty_queue_is_an_empty_list() {
    let app = router(Arc::new(Mutex::new(ReviewState::empty())), None);
    let (status, body) = call(&app, "GET", "/api/queue", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([]));
    let (_, metrics) = call(&app, "GET", "/api/metrics", None).await;
    assert_eq!(metrics["report"], Value::Null);
}

#[tokio::test]
async fn adjudication_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("decisions.jsonl");
    let app = loaded(log.clone());

    let (_, queue) = call(&app, "GET", "/api/queue", None).await;
    assert_eq!(queue[0]["pair_id"], "xoo-2018");
    assert_eq!(queue[0]["status"], "open");
    // 8 gold tools, 1 machine tool, 2 gold and 2 machine use cases
    assert_eq!(queue[0]["unresolved"], 13);

    let (status, view) = call(&app, "GET", "/api/pairs/xoo-2018", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["session"]["session_id"], "xoo-2018#0");
    assert_eq!(view["gold"]["tools"].as_array().unwrap().len(), 9);

    let body = fixture_decisions("xoo-2018").to_string();
    let (status, resp) = call(&app, "POST", "/api/pairs/xoo-2018/decisions", Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    assert_eq!(resp["session"]["status"], "complete");
    let overall = &resp["preview"]["overall"];
    assert!(approx(&overall["precision"], 1.0) && approx(&overall["recall"], 0.333), "{overall}");
    assert!(approx(&overall["f1"], 0.5));

    // a completed pair accepts nothing more
    let (status, _) = call(&app, "POST", "/api/pairs/xoo-2018/decisions", Some(body)).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, _) = call(&app, "GET", "/api/pairs/no-such-pair", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "POST", "/api/pairs/no-such-pair/decisions", Some("{}".into())).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = call(&app, "POST", "/api/pairs/brucella-2009/decisions", Some("{\"verdicts\": [".into())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", "/api/pairs/brucella-2009/decisions", Some("{}".into())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    // partial submission, then a second one that reuses an item
    let fp = json!({"verdicts": [{"kind": "false_positive", "category": "tools", "machine": "GLIMMER"}]});
    let (status, resp) = call(&app, "POST", "/api/pairs/brucella-2009/decisions", Some(fp.to_string())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(resp["session"]["session_id"], "brucella-2009#1");
    let (status, _) = call(&app, "POST", "/api/pairs/brucella-2009/decisions", Some(fp.to_string())).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (_, metrics) = call(&app, "GET", "/api/metrics", None).await;
    assert_eq!((metrics["complete_pairs"].clone(), metrics["open_pairs"].clone()), (json!(1), json!(1)));
    let rows = metrics["report"]["rows"].as_array().unwrap();
    let overall = rows.iter().find(|r| r["category"] == "Overall").unwrap();
    assert_eq!(overall["set"], "Evaluation");
    assert_eq!(overall["counts"], json!({"tp": 4, "fp": 0, "tn": 0, "fn": 8}));

    // accepted submissions are in the log and survive a restart
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 2);
    let restarted = loaded(log);
    let (_, queue) = call(&restarted, "GET", "/api/queue", None).await;
    assert_eq!(queue[0]["status"], "complete");
    assert_eq!(queue[1]["unresolved"], 5);
    let (_, view) = call(&restarted, "GET", "/api/pairs/brucella-2009", None).await;
    assert_eq!(view["session"]["submissions"], 1);
}

#[tokio::test]
async fn excerpts_come_from_the_run_directory() {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(tmp.path().join("text")).unwrap();
    std::fs::write(
        tmp.path().join("text/PMC-F.txt"),
        std::fs::read_to_string(fixtures.join("jats/v1_3.expected.txt")).unwrap(),
    )
    .unwrap();
    let inputs = ReviewInputs {
        gold: tables().join("gold.jsonl"),
        machine: tables().join("machine.jsonl"),
        pairs: Some(fixtures.join("pipeline/pairs.jsonl")),
        run_dir: Some(tmp.path().to_path_buf()),
        ..Default::default()
    };
    let app = router(Arc::new(Mutex::new(ReviewState::load(&inputs).unwrap())), None);
    let (_, view) = call(&app, "GET", "/api/pairs/xoo-2018", None).await;
    let ex = view["excerpts"].as_array().unwrap();
    assert_eq!(ex.len(), 1);
    let text = ex[0]["text"].as_str().unwrap();
    let (s, e) = (ex[0]["mentions"][0][0].as_u64().unwrap(), ex[0]["mentions"][0][1].as_u64().unwrap());
    let hit: String = text.chars().skip(s as usize).take((e - s) as usize).collect();
    assert_eq!(hit, "CP000046.1");
}
