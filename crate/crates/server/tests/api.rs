use std::path::Path;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use pivotrec_core::embedding::{embed_pivot, pairwise_distance, BaselineEmbedder};
use pivotrec_core::pivot::{PivotGrid, PivotSpec};
use pivotrec_core::recommend::RecommendConfig;
use pivotrec_core::semantics::{
    Direction, Likert, OracleQuery, Payload, Provider, RemoteConfig, SemanticOracle,
};
use pivotrec_server::{build_embedder, build_oracle, router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

const EMPLOYEES: &str = include_str!("../../core/tests/fixtures/employees.csv");

fn app_at(dir: Option<&Path>) -> Router {
    let state = AppState::new(
        build_oracle(None, None).unwrap(),
        build_embedder(None),
        RecommendConfig::default(),
        dir,
    )
    .unwrap();
    router(state)
}

fn app() -> Router {
    app_at(None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<(&str, String)>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some((content_type, text)) => {
            req = req.header("content-type", content_type);
            Body::from(text)
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (
        status,
        to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec(),
    )
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(
        app,
        method,
        uri,
        body.map(|b| ("application/json", b.to_string())),
    )
    .await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn upload(app: &Router) -> String {
    let (status, bytes) = call(
        app,
        "POST",
        "/datasets",
        Some(("text/csv", EMPLOYEES.to_string())),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    v["dataset_id"].as_str().unwrap().to_string()
}

async fn session(app: &Router, dataset: &str, config: Value) -> String {
    let mut body = config;
    body["dataset_id"] = json!(dataset);
    let (status, v) = call_json(app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

fn assert_error(v: &Value, code: &str) {
    assert_eq!(v["code"], code, "{v}");
    assert!(v["message"].as_str().is_some_and(|m| !m.is_empty()));
}

#[tokio::test]
async fn health_and_not_found() {
    let app = app();
    let (status, v) = call_json(&app, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    let (status, v) = call_json(&app, "GET", "/sessions/nope/recommendations", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&v, "not_found");
}

#[tokio::test]
async fn dataset_upload() {
    let app = app();
    let a = upload(&app).await;
    let b = upload(&app).await;
    assert_ne!(a, b, "identical uploads get distinct ids");

    let (status, v) = call_json(&app, "POST", "/datasets", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&v, "bad_request");

    let ragged = "a,b\n1,2\n3\n".to_string();
    let (status, bytes) = call(&app, "POST", "/datasets", Some(("text/csv", ragged))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_error(&v, "bad_request");
    // Zero-based data row.
    assert_eq!(v["detail"]["row"], 1);

    let body = json!({
        "csv": "Year,Region,Sales\n2020,N,1\n2021,S,2\n",
        "types": [{"attribute": "Year", "data_type": "text"}]
    });
    let (status, v) = call_json(&app, "POST", "/datasets", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    assert_eq!(v["attributes"][0]["data_type"], "text");

    let (status, _) = call(
        &app,
        "POST",
        "/datasets",
        Some(("application/json", "{oops".into())),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn session_creation_validates() {
    let app = app();
    let d = upload(&app).await;
    session(&app, &d, json!({"k": 5, "theta": 0.3})).await;

    let (status, v) = call_json(&app, "POST", "/sessions", Some(json!({"dataset_id": d, "k": 0}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&v, "bad_request");

    let (status, v) = call_json(
        &app,
        "POST",
        "/sessions",
        Some(json!({"dataset_id": d, "focus_attrs": ["Salary", "Wage"]})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["detail"]["unknown_attributes"], json!(["Wage"]));

    let (status, _) = call_json(&app, "POST", "/sessions", Some(json!({"dataset_id": "missing"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call_json(
        &app,
        "POST",
        "/sessions",
        Some(json!({"dataset_id": d, "kay": 2})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call_json(
        &app,
        "POST",
        "/sessions",
        Some(json!({"dataset_id": d, "theta": 2.0})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn batches_are_feasible_and_adaptive() {
    let app = app();
    let d = upload(&app).await;
    let s = session(&app, &d, json!({"k": 3, "theta": 0.1})).await;
    let uri = format!("/sessions/{s}/recommendations");
    let (status, first) = call_json(&app, "GET", &uri, None).await;
    assert_eq!(status, StatusCode::OK);
    let recs = first["recommendations"].as_array().unwrap();
    assert_eq!(recs.len(), 3);
    assert!(first["diversity"].as_f64().unwrap() >= 0.1);

    let embedder = BaselineEmbedder::default();
    let embeddings: Vec<_> = recs
        .iter()
        .map(|r| {
            let spec: PivotSpec = serde_json::from_value(r["spec"].clone()).unwrap();
            let grid: PivotGrid = serde_json::from_value(r["grid"].clone()).unwrap();
            embed_pivot(&embedder, &spec, &grid).unwrap()
        })
        .collect();
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            assert!(pairwise_distance(&embeddings[i], &embeddings[j]).unwrap() >= 0.1);
        }
    }

    let feedback = format!("/sessions/{s}/feedback");
    let served = recs[0]["spec"].clone();
    let (status, v) = call_json(
        &app,
        "POST",
        &feedback,
        Some(json!({"spec": served, "verdict": "accepted"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["explored"], 3);
    let (status, _) = call_json(
        &app,
        "POST",
        &feedback,
        Some(json!({"spec": served, "verdict": "accepted"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);

    let never = json!({"fn": "COUNT", "attr": "Age", "groups": ["Degree", "Department", "Gender"]});
    let (status, v) = call_json(
        &app,
        "POST",
        &feedback,
        Some(json!({"spec": never, "verdict": "rejected"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_error(&v, "bad_request");
    let (status, _) = call_json(
        &app,
        "POST",
        &feedback,
        Some(json!({"spec": {"fn": "AVG", "attr": "Salary", "groups": ["Salary", "Degree"]}, "verdict": "accepted"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call_json(
        &app,
        "POST",
        &feedback,
        Some(json!({"spec": served, "verdict": "maybe"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (_, second) = call_json(&app, "GET", &uri, None).await;
    let first_specs: Vec<&Value> = recs.iter().map(|r| &r["spec"]).collect();
    for r in second["recommendations"].as_array().unwrap() {
        assert!(!first_specs.contains(&&r["spec"]));
    }

    let (status, v) = call_json(&app, "GET", &format!("/sessions/{s}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["accepted"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn exhausted_candidate_space_returns_empty_batch() {
    let app = app();
    let d = upload(&app).await;
    let s = session(
        &app,
        &d,
        json!({"k": 5, "theta": 0.0, "g_max": 2, "focus_attrs": ["Salary", "Degree", "Department"]}),
    )
    .await;
    let uri = format!("/sessions/{s}/recommendations");
    let mut last = Value::Null;
    for _ in 0..6 {
        let (status, v) = call_json(&app, "GET", &uri, None).await;
        assert_eq!(status, StatusCode::OK);
        last = v;
    }
    assert_eq!(last["recommendations"], json!([]));
    assert_eq!(last["exhausted"], true);
}

#[tokio::test]
async fn pool_cap_and_patch() {
    let app = app();
    let d = upload(&app).await;
    let s = session(&app, &d, json!({"pool_cap": 1})).await;
    let (status, v) = call_json(&app, "GET", &format!("/sessions/{s}/recommendations"), None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_error(&v, "infeasible");

    let (status, v) = call_json(
        &app,
        "PATCH",
        &format!("/sessions/{s}"),
        Some(json!({"pool_cap": null, "k": 2, "scoring": {"alpha": 0.7}})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["config"]["k"], 2);
    assert_eq!(v["config"]["scoring"]["alpha"], 0.7);
    assert_eq!(v["config"]["scoring"]["tau_c"], 16.0);
    let (status, v) = call_json(&app, "GET", &format!("/sessions/{s}/recommendations"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["recommendations"].as_array().unwrap().len(), 2);

    let (status, _) = call_json(&app, "PATCH", &format!("/sessions/{s}"), Some(json!({"k": 0}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

#[tokio::test]
async fn restart_reproduces_batches() {
    let root = tempfile::tempdir().unwrap();
    let (live, snapshot) = (root.path().join("live"), root.path().join("snapshot"));
    let app = app_at(Some(&live));
    let d = upload(&app).await;
    let s = session(&app, &d, json!({"k": 3, "theta": 0.2})).await;
    copy_dir(&live, &snapshot);

    let uri = format!("/sessions/{s}/recommendations");
    let (_, before) = call(&app, "GET", &uri, None).await;
    let restarted = app_at(Some(&snapshot));
    let (status, after) = call(&restarted, "GET", &uri, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(before, after);

    // The live store remembers what it served.
    let reopened = app_at(Some(&live));
    let (_, v) = call_json(&reopened, "GET", &format!("/sessions/{s}"), None).await;
    assert_eq!(v["explored"], 3);
}

async fn stub_oracle(status: StatusCode) -> String {
    async fn reply(status: StatusCode, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
        let text = match body["kind"].as_str().unwrap_or("") {
            "significance" => "Yes",
            "aggregate_ranking" => "AVG, SUM, MAX, MIN, COUNT",
            "attribute_naming" => "Hire Year",
            _ => "This is very unlikely.",
        };
        (status, Json(json!({ "text": text })))
    }
    let app = Router::new().route("/llm", post(move |body| reply(status, body)));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}/llm")
}

fn correlation() -> OracleQuery {
    OracleQuery::CorrelationUnlikelihood {
        aggregate: "Average Salary".into(),
        first: "BS".into(),
        second: "PhD".into(),
        direction: Direction::Positive,
        across: vec!["IT".into(), "Sales".into()],
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn remote_oracle_against_stub() {
    let ok = stub_oracle(StatusCode::OK).await;
    let failing = stub_oracle(StatusCode::INTERNAL_SERVER_ERROR).await;
    let cache_dir = tempfile::tempdir().unwrap();
    let cache = cache_dir.path().join("oracle.jsonl");
    let (good, bad, cache2) = (ok.clone(), failing.clone(), cache.clone());
    tokio::task::spawn_blocking(move || {
        let oracle = build_oracle(
            Some(&RemoteConfig::new(good)),
            Some((&cache2, pivotrec_server::CacheFileMode::Record)),
        )
        .unwrap();
        let r = oracle.ask(&correlation());
        assert_eq!(r.payload, Payload::Likert(Likert::VeryUnlikely));
        assert_eq!(r.provider, Provider::Remote);
        assert!(!r.flagged);
        assert!(oracle.ask(&correlation()).cached);

        let fallback = build_oracle(Some(&RemoteConfig::new(bad)), None).unwrap();
        let r = fallback.ask(&correlation());
        assert_eq!(r.payload, Payload::Likert(Likert::Neutral));
        assert_eq!(r.provider, Provider::RuleBased);
        assert!(r.flagged);
    })
    .await
    .unwrap();
    let recorded = std::fs::read_to_string(&cache).unwrap();
    assert_eq!(recorded.lines().count(), 1);

    // A whole service run against the stub completes and stays in bounds.
    let state = AppState::new(
        build_oracle(Some(&RemoteConfig::new(ok)), None).unwrap(),
        build_embedder(None),
        RecommendConfig::default(),
        None,
    )
    .unwrap();
    let app = router(Arc::clone(&state));
    let d = upload(&app).await;
    let s = session(&app, &d, json!({"k": 2, "g_max": 2})).await;
    let (status, v) = call_json(&app, "GET", &format!("/sessions/{s}/recommendations"), None).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    for r in v["recommendations"].as_array().unwrap() {
        let u = r["scorecard"]["utility"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&u));
    }
}
