mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::{fixture, write_heds, write_tts, Fixture};
use hed_service::api::{router, AppState};
use hed_service::{JobConfig, Workspace};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(f: &Fixture) -> Router {
    let ws = Workspace::open(JobConfig::load(&f.config).unwrap()).unwrap();
    router(Arc::new(AppState::open(ws).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, bytes)
}

async fn call_json(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

const UTT: &str = "0011_sad_0";

#[tokio::test]
async fn read_endpoints_and_unknown_ids() {
    let f = fixture();
    write_heds(&f);
    let app = app(&f);

    let (s, health) = call_json(&app, "GET", "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(health["status"], "ok");
    assert_eq!(health["tts_loaded"], false);

    let (s, list) = call_json(&app, "GET", "/utterances", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(list.as_array().unwrap().len(), f.ids().len());

    let (s, al) = call_json(&app, "GET", &format!("/utterances/{UTT}/alignment"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(al["phones"].as_array().unwrap().len(), 6);

    let (s, hed) = call(&app, "GET", &format!("/utterances/{UTT}/hed"), None).await;
    assert_eq!(s, StatusCode::OK);
    let stored = std::fs::read(f.work().join("hed").join(format!("{UTT}.json"))).unwrap();
    assert_eq!(hed, stored);

    for uri in [
        "/utterances/nope/alignment",
        "/utterances/nope/hed",
        "/sessions/s999999",
        "/audio/deadbeef",
        "/audio/..%2Fhed.toml",
        "/no/such/route",
    ] {
        let (s, body) = call_json(&app, "GET", uri, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        assert!(body["error"]["kind"].is_string(), "{uri}");
    }
    for uri in [
        "/sessions/s999999/edit",
        "/sessions/s999999/undo",
        "/sessions/s999999/synthesize",
    ] {
        let (s, _) = call_json(&app, "POST", uri, Some(json!({}))).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
    }
    let (s, _) = call_json(
        &app,
        "POST",
        "/sessions",
        Some(json!({"utterance_id": "nope"})),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn edit_undo_validation_and_restore() {
    let f = fixture();
    write_heds(&f);
    let app = app(&f);
    let (_, original) = call_json(&app, "GET", &format!("/utterances/{UTT}/hed"), None).await;

    let (s, created) = call_json(
        &app,
        "POST",
        "/sessions",
        Some(json!({"utterance_id": UTT})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    let sid = created["session_id"].as_str().unwrap().to_string();
    assert_eq!(created["hed"], original);

    let (s, _) = call_json(&app, "POST", &format!("/sessions/{sid}/undo"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let edit = json!({"level": "word", "target": {"index": 1}, "emotion": "Sad", "mode": "set", "value": 0.9});
    let (s, edited) = call_json(&app, "POST", &format!("/sessions/{sid}/edit"), Some(edit)).await;
    assert_eq!(s, StatusCode::OK);
    assert_ne!(edited["hed"], original);
    let sad_word = 4 + 2;
    assert!((edited["hed"]["matrix"][5][sad_word].as_f64().unwrap() - 0.9).abs() < 1e-6);
    assert_eq!(edited["hed"]["matrix"][0], original["matrix"][0]);

    let (s, undone) = call_json(&app, "POST", &format!("/sessions/{sid}/undo"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(
        serde_json::to_string(&undone["hed"]).unwrap(),
        serde_json::to_string(&original).unwrap()
    );

    let bad =
        json!({"level": "word", "target": "all", "emotion": "Sad", "mode": "set", "value": 1.5});
    let (s, err) = call_json(&app, "POST", &format!("/sessions/{sid}/edit"), Some(bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"]["field"], "value");

    let bad = json!({"level": "word", "target": {"index": 9}, "emotion": "Sad", "mode": "set", "value": 0.5});
    let (s, err) = call_json(&app, "POST", &format!("/sessions/{sid}/edit"), Some(bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"]["field"], "target");

    let bad = json!({"level": "word", "target": "all", "emotion": "Neutral", "mode": "set", "value": 0.5});
    let (s, err) = call_json(&app, "POST", &format!("/sessions/{sid}/edit"), Some(bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"]["field"], "emotion");

    let bad = json!({"level": "word", "target": "all", "emotion": "Sad", "value": 0.5});
    let (s, err) = call_json(&app, "POST", &format!("/sessions/{sid}/edit"), Some(bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"]["field"], "mode");

    let edit = json!({"level": "utterance", "target": "all", "emotion": "Happy", "mode": "scale", "value": 2.0});
    let (_, last) = call_json(&app, "POST", &format!("/sessions/{sid}/edit"), Some(edit)).await;

    let (s, _) = call_json(
        &app,
        "POST",
        &format!("/sessions/{sid}/synthesize"),
        Some(json!({"seed": 1})),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);

    // a restarted server replays the log to the same HED
    drop(app);
    let app = self::app(&f);
    let (s, restored) = call_json(&app, "GET", &format!("/sessions/{sid}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(restored["hed"], last["hed"]);
    assert_eq!(restored["history_len"], 1);
    let (_, second) = call_json(
        &app,
        "POST",
        "/sessions",
        Some(json!({"utterance_id": UTT})),
    )
    .await;
    assert_ne!(second["session_id"], sid.as_str());
}

#[tokio::test]
async fn synthesis_is_deterministic_and_served_as_wav() {
    let f = fixture();
    write_heds(&f);
    write_tts(&f);
    let app = app(&f);
    let (_, created) = call_json(
        &app,
        "POST",
        "/sessions",
        Some(json!({"utterance_id": UTT})),
    )
    .await;
    let sid = created["session_id"].as_str().unwrap().to_string();
    let uri = format!("/sessions/{sid}/synthesize");

    let (s, a) = call_json(&app, "POST", &uri, Some(json!({"seed": 7}))).await;
    assert_eq!(s, StatusCode::OK, "{a}");
    let (_, b) = call_json(&app, "POST", &uri, Some(json!({"seed": 7}))).await;
    assert_eq!(a["audio_id"], b["audio_id"]);
    let (_, c) = call_json(&app, "POST", &uri, Some(json!({"seed": 8}))).await;
    assert_ne!(a["audio_id"], c["audio_id"]);

    let (s, wav_a) = call(&app, "GET", a["url"].as_str().unwrap(), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(&wav_a[..4], b"RIFF");
    let (_, wav_b) = call(&app, "GET", b["url"].as_str().unwrap(), None).await;
    assert_eq!(wav_a, wav_b);

    let (s, err) = call_json(&app, "POST", &uri, Some(json!({"seed": "x"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{err}");
}
