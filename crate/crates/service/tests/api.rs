use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use codeaudit_core::annotation::{concepts_by_code, load_sessions};
use codeaudit_core::audit::{Bucket, PartitionRecord, SpanEvidence};
use codeaudit_core::corpus::{default_vocabulary, vocabulary_dictionary};
use codeaudit_core::pipeline::ReviewInputs;
use codeaudit_core::taxonomy::CodeId;
use codeaudit_service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn code(c: &str) -> CodeId {
    CodeId::parse(c).unwrap()
}

fn inputs() -> ReviewInputs {
    let dictionary = vocabulary_dictionary(&default_vocabulary()).unwrap();
    let mut documents = BTreeMap::new();
    let mut records = Vec::new();
    for i in 0..12 {
        let adm = format!("{}", 100_001 + i);
        documents.insert(adm.clone(), "1. Hypertension\n2. HTN".to_string());
        records.push(PartitionRecord {
            admission_id: adm.clone(),
            code: code("4019"),
            bucket: Bucket::PredictedAssigned,
            evidence: Some(SpanEvidence {
                start: 3,
                end: 15,
                text: "Hypertension".into(),
            }),
        });
        if i < 3 {
            records.push(PartitionRecord {
                admission_id: adm,
                code: code("4280"),
                bucket: Bucket::AssignedNotPredicted,
                evidence: None,
            });
        }
    }
    ReviewInputs {
        records,
        documents,
        predictions: BTreeMap::new(),
        code_concepts: concepts_by_code(&dictionary),
        dictionary,
    }
}

fn app(dir: Option<&std::path::Path>) -> Router {
    let state = AppState::new(inputs(), dir.map(|d| d.to_path_buf())).unwrap();
    router(Arc::new(state), None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder()
        .method(method)
        .uri(uri)
        .header("x-annotator-id", "alice");
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn open(app: &Router, seed: u64) -> (String, Vec<String>) {
    let (status, body) = call(app, "POST", "/api/v1/sessions", Some(json!({"dataset": "P_A", "seed": seed}))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let ids = body["tasks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["task_id"].as_str().unwrap().to_string())
        .collect();
    (body["session_id"].as_str().unwrap().to_string(), ids)
}

#[tokio::test]
async fn session_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Some(dir.path()));
    let (id, tasks) = open(&app, 7).await;
    assert_eq!(tasks.len(), 10);

    let (status, listed) = call(&app, "GET", &format!("/api/v1/sessions/{id}/tasks"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(listed.as_array().unwrap().len(), 10);
    assert_eq!(listed[0]["span"]["text"], "Hypertension");

    let marks = format!("/api/v1/sessions/{id}/marks");
    let (status, ack) = call(&app, "POST", &marks, Some(json!({"task_id": tasks[0], "mark": "correct"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["percent_correct"], 1.0);
    call(&app, "POST", &marks, Some(json!({"task_id": tasks[0], "mark": "incorrect"}))).await;

    let (status, err) = call(&app, "POST", &marks, Some(json!({"task_id": "nope", "mark": "correct"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"]["code"], "unknown_task");

    let annotations = format!("/api/v1/sessions/{id}/annotations");
    let body = json!({"span": {"admission_id": "100001", "start": 19, "end": 22}, "concept_id": "SYN-4019", "correct": true});
    let (status, ack) = call(&app, "POST", &annotations, Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{ack}");
    assert_eq!(ack["annotation"]["surface"], "HTN");
    assert_eq!(ack["annotation"]["annotator_id"], "alice");

    let bad = json!({"span": {"admission_id": "100001", "start": 19, "end": 99}, "concept_id": "SYN-4019", "correct": true});
    assert_eq!(call(&app, "POST", &annotations, Some(bad)).await.1["error"]["code"], "invalid_span");
    let unknown = json!({"span": {"admission_id": "100001", "start": 19, "end": 22}, "concept_id": "X", "correct": true});
    assert_eq!(call(&app, "POST", &annotations, Some(unknown)).await.1["error"]["code"], "unknown_concept");

    let (status, _) = call(&app, "POST", &format!("/api/v1/sessions/{id}/finalize"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, err) = call(&app, "POST", &marks, Some(json!({"task_id": tasks[1], "mark": "correct"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"]["code"], "session_finalized");

    let saved = load_sessions(dir.path()).unwrap();
    assert_eq!(saved.len(), 1);
    assert!(saved[0].finalized);
    assert_eq!(saved[0].annotations.len(), 1);

    // A restarted service resumes the stored session.
    let again = self::app(Some(dir.path()));
    let (status, body) = call(&again, "GET", &format!("/api/v1/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["finalized"], true);
}

#[tokio::test]
async fn agreement_and_failing_codes() {
    let app = app(None);
    let (a, tasks) = open(&app, 1).await;
    let (b, tasks_b) = open(&app, 1).await;
    assert_eq!(tasks, tasks_b);
    for (i, t) in tasks.iter().enumerate() {
        let mark = if i % 2 == 0 { "correct" } else { "incorrect" };
        for s in [&a, &b] {
            call(&app, "POST", &format!("/api/v1/sessions/{s}/marks"), Some(json!({"task_id": t, "mark": mark}))).await;
        }
    }
    let uri = format!("/api/v1/agreement?a={a}&b={b}");
    let (status, err) = call(&app, "GET", &uri, None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"]["code"], "session_open");
    for s in [&a, &b] {
        call(&app, "POST", &format!("/api/v1/sessions/{s}/finalize"), None).await;
    }
    let (status, body) = call(&app, "GET", &uri, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["kappa"], 1.0);
    assert_eq!(body["percent_correct_a"], 0.5);

    let (_, body) = call(&app, "GET", "/api/v1/failing-codes?threshold=0.5", None).await;
    assert_eq!(body["passing"], json!(["4019"]));
    let (_, body) = call(&app, "GET", "/api/v1/failing-codes?threshold=0.6", None).await;
    assert_eq!(body["failing"], json!(["4019"]));
    let (status, body) = call(&app, "GET", "/api/v1/failing-codes?threshold=2", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "invalid_threshold");
}

#[tokio::test]
async fn review_of_missing_predictions_and_documents() {
    let app = app(None);
    let (status, body) = call(&app, "POST", "/api/v1/sessions", Some(json!({"dataset": "A_NP-review"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    let tasks = body["tasks"].as_array().unwrap();
    assert_eq!(tasks.len(), 3);
    assert!(tasks.iter().all(|t| t["span"].is_null() && t["code"] == "4280"));

    let (status, body) = call(&app, "POST", "/api/v1/sessions", Some(json!({"dataset": "P_NA"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert!(body["tasks"].as_array().unwrap().is_empty());

    let (status, body) = call(&app, "POST", "/api/v1/sessions", Some(json!({"dataset": "bogus"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "invalid_dataset");

    let (status, body) = call(&app, "GET", "/api/v1/documents/100001/dd", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["excerpt"], "1. Hypertension\n2. HTN");
    let (status, body) = call(&app, "GET", "/api/v1/documents/999/dd", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "unknown_document");

    let (status, body) = call(&app, "GET", "/api/v1/sessions/zzz/tasks", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "unknown_session");

    let (_, body) = call(&app, "GET", "/api/v1/concepts?q=hypert", None).await;
    assert!(body.as_array().unwrap().iter().any(|c| c["concept_id"] == "SYN-4019"));
}

#[tokio::test]
async fn malformed_bodies_are_rejected() {
    let app = app(None);
    let (status, body) = call(&app, "POST", "/api/v1/sessions", Some(json!({"seed": 1}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "bad_request");

    let req = Request::builder()
        .method("POST")
        .uri("/api/v1/sessions")
        .header("content-type", "application/json")
        .body(Body::from(json!({"dataset": "P_A"}).to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}
