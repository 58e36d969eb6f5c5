use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use polex_core::persist;
use polex_core::Decision;
use polex_service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

/// A writable copy of a fixture and an app serving it.
fn app_on(name: &str) -> (tempfile::TempDir, PathBuf, Router) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(name);
    std::fs::copy(fixture(name), &path).unwrap();
    let app = router(AppState::from_file(&path).unwrap(), None);
    (dir, path, app)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes)
            .unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

#[tokio::test]
async fn predict_home_is_denied() {
    let (_dir, _, app) = app_on("bob.json");
    let (status, body) = call(
        &app,
        "POST",
        "/api/targets/WorkCloud/predict",
        Some(json!({"scenario": ["Home"]})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["decision"], "deny");
    assert_eq!(body["provenance"], "majority");
    assert_eq!(body["similarity"], "3/4");
    assert_eq!(body["neighbors"][0]["text"], "Home+Photo");
    assert_eq!(body["neighbors"][0]["similarity"], "3/4");
    assert_eq!(body["neighbors"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn predict_errors() {
    let (_dir, _, app) = app_on("bob.json");
    let (status, body) = call(
        &app,
        "POST",
        "/api/targets/WorkCloud/predict",
        Some(json!({"scenario": []})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "EmptyScenario");
    let (status, body) = call(
        &app,
        "POST",
        "/api/targets/Nowhere/predict",
        Some(json!({"scenario": ["Home"]})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "UnknownTarget");
    let (status, body) = call(
        &app,
        "POST",
        "/api/targets/WorkCloud/predict",
        Some(json!({"scenario": ["Cloud"]})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "UnknownTag");
}

#[tokio::test]
async fn dataset_summary() {
    let (_dir, path, app) = app_on("bob_extended.json");
    let (status, body) = call(&app, "GET", "/api/dataset", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["tags"].as_array().unwrap().len(), 5);
    assert_eq!(body["targets"], json!(["WorkCloud"]));
    assert_eq!(body["rows"], 5);
    assert_eq!(
        body["fingerprint"],
        persist::fingerprint(&persist::load_dataset(&path).unwrap())
    );
}

#[tokio::test]
async fn review_session_flow() {
    let (_dir, path, app) = app_on("bob_extended.json");
    let (status, s) = call(&app, "POST", "/api/targets/WorkCloud/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = s["id"].as_str().unwrap().to_string();
    assert_eq!(s["suggestion"]["text"], "Home+Memo");
    assert_eq!(s["suggestion"]["proposed"], "deny");
    assert_eq!(s["suggestion"]["delta"], 3);
    assert_eq!(s["counters"]["remaining"], 5);
    let vertex = s["suggestion"]["vertex"].clone();

    let (status, body) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/respond"),
        Some(json!({"vertex": 0, "accept": true})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "StaleSuggestion");

    let (status, s) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/respond"),
        Some(json!({"vertex": vertex, "accept": true})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s["counters"]["remaining"], 2);
    assert_eq!(s["counters"]["accepted"], 1);

    let (_, again) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(again, s);

    // nothing is written until the session closes
    let on_disk = persist::load_dataset(&path).unwrap();
    assert_eq!(on_disk.rows()[4].decisions[0], Decision::Allow);
    let (status, closed) = call(&app, "POST", &format!("/api/sessions/{id}/close"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(closed["saved"], true);
    let on_disk = persist::load_dataset(&path).unwrap();
    assert_eq!(on_disk.rows()[4].decisions[0], Decision::Deny);

    let (status, _) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn accepting_everything_ends_the_session() {
    let (_dir, _, app) = app_on("bob_extended.json");
    let (_, mut s) = call(&app, "POST", "/api/targets/WorkCloud/sessions", None).await;
    let id = s["id"].as_str().unwrap().to_string();
    let mut rounds = 0;
    while !s["suggestion"].is_null() {
        let v = s["suggestion"]["vertex"].clone();
        let (status, next) = call(
            &app,
            "POST",
            &format!("/api/sessions/{id}/respond"),
            Some(json!({"vertex": v, "accept": true})),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        s = next;
        rounds += 1;
        assert!(rounds <= 15);
    }
    match s["status"].as_str().unwrap() {
        "clean" => assert_eq!(s["counters"]["remaining"], 0),
        "exhausted" => {}
        other => panic!("status {other}"),
    }
    let (status, body) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/respond"),
        Some(json!({"vertex": 0, "accept": true})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
}

#[tokio::test]
async fn autosave_writes_each_accept() {
    let (_dir, path, app) = app_on("bob_extended.json");
    let (_, s) = call(&app, "POST", "/api/targets/WorkCloud/sessions", None).await;
    let id = s["id"].as_str().unwrap().to_string();
    let v = s["suggestion"]["vertex"].clone();
    let (status, _) = call(
        &app,
        "POST",
        &format!("/api/sessions/{id}/respond?autosave=1"),
        Some(json!({"vertex": v, "accept": true})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        persist::load_dataset(&path).unwrap().rows()[4].decisions[0],
        Decision::Deny
    );
}

#[tokio::test]
async fn saving_one_session_invalidates_the_others() {
    let (_dir, _, app) = app_on("bob_extended.json");
    let (_, a) = call(&app, "POST", "/api/targets/WorkCloud/sessions", None).await;
    let (_, b) = call(&app, "POST", "/api/targets/WorkCloud/sessions", None).await;
    let (ia, ib) = (a["id"].as_str().unwrap(), b["id"].as_str().unwrap());
    assert_ne!(ia, ib);
    let v = a["suggestion"]["vertex"].clone();
    call(
        &app,
        "POST",
        &format!("/api/sessions/{ia}/respond?autosave=1"),
        Some(json!({"vertex": v, "accept": true})),
    )
    .await;
    let (_, b) = call(&app, "GET", &format!("/api/sessions/{ib}"), None).await;
    assert_eq!(b["invalidated"], true);
    let (status, body) = call(
        &app,
        "POST",
        &format!("/api/sessions/{ib}/respond"),
        Some(json!({"vertex": v, "accept": false})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "SessionInvalidated");
    let (_, a) = call(&app, "GET", &format!("/api/sessions/{ia}"), None).await;
    assert_eq!(a["invalidated"], false);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_responses_serialize() {
    let (_dir, _, app) = app_on("bob_extended.json");
    let (_, s) = call(&app, "POST", "/api/targets/WorkCloud/sessions", None).await;
    let id = s["id"].as_str().unwrap().to_string();
    let v = s["suggestion"]["vertex"].clone();
    let uri = format!("/api/sessions/{id}/respond");
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let (app, uri, v) = (app.clone(), uri.clone(), v.clone());
            tokio::spawn(async move {
                call(
                    &app,
                    "POST",
                    &uri,
                    Some(json!({"vertex": v, "accept": false})),
                )
                .await
                .0
            })
        })
        .collect();
    let mut ok = 0;
    for t in tasks {
        match t.await.unwrap() {
            StatusCode::OK => ok += 1,
            StatusCode::CONFLICT => {}
            other => panic!("{other}"),
        }
    }
    assert_eq!(ok, 1);
}

#[tokio::test]
async fn order_updates() {
    let (_dir, path, app) = app_on("bob_extended.json");
    let (_, w) = call(&app, "GET", "/api/targets/WorkCloud/weights", None).await;
    let home = w["weights"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["tag"] == "Home")
        .unwrap();
    assert_eq!(
        (home["w0"].clone(), home["w1"].clone()),
        (json!(1), json!(2))
    );

    let (_, s) = call(&app, "POST", "/api/targets/WorkCloud/sessions", None).await;
    let id = s["id"].as_str().unwrap().to_string();

    let groups = json!([
        {"name": "A", "tags": ["Photo", "Document", "Memo"]},
        {"name": "B", "tags": ["Work"]},
        {"name": "C", "tags": ["Home"]}
    ]);
    let (status, body) = call(
        &app,
        "PUT",
        "/api/targets/WorkCloud/order",
        Some(json!({"groups": groups, "order": [["A", "B"], ["B", "A"]]})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "CyclicOrder");
    assert_eq!(body["cycle"], json!(["A", "B", "A"]));
    let (_, still) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(still["invalidated"], false);

    let (status, body) = call(
        &app,
        "PUT",
        "/api/targets/WorkCloud/order",
        Some(json!({"groups": groups, "order": [["A", "B"], ["B", "C"]]})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let (_, w) = call(&app, "GET", "/api/targets/WorkCloud/weights", None).await;
    let w1 = |tag: &str| {
        w["weights"]
            .as_array()
            .unwrap()
            .iter()
            .find(|t| t["tag"] == tag)
            .unwrap()["w1"]
            .clone()
    };
    assert_eq!(
        (w1("Photo"), w1("Work"), w1("Home")),
        (json!(1), json!(2), json!(3))
    );
    assert_eq!(w["config"]["order"], json!([["A", "B"], ["B", "C"]]));

    // only the order changes when groups are omitted
    let (status, _) = call(
        &app,
        "PUT",
        "/api/targets/WorkCloud/order",
        Some(json!({"order": [["A", "C"]]})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (_, w) = call(&app, "GET", "/api/targets/WorkCloud/weights", None).await;
    let w1 = |tag: &str| {
        w["weights"]
            .as_array()
            .unwrap()
            .iter()
            .find(|t| t["tag"] == tag)
            .unwrap()["w1"]
            .clone()
    };
    assert_eq!(
        (w1("Photo"), w1("Work"), w1("Home")),
        (json!(1), json!(1), json!(2))
    );

    let (_, s) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(s["invalidated"], true);
    let reloaded = persist::load_dataset(&path).unwrap();
    assert!(reloaded.weights().per_target.contains_key("WorkCloud"));
}

#[tokio::test]
async fn identical_requests_give_identical_bodies() {
    let run = || async {
        let (_dir, _, app) = app_on("bob_extended.json");
        let mut bodies = Vec::new();
        for q in [
            json!(["Home"]),
            json!(["Home", "Document"]),
            json!(["Memo", "Work"]),
        ] {
            bodies.push(
                call(
                    &app,
                    "POST",
                    "/api/targets/WorkCloud/predict",
                    Some(json!({"scenario": q})),
                )
                .await
                .1,
            );
        }
        let (_, mut s) = call(&app, "POST", "/api/targets/WorkCloud/sessions", None).await;
        let id = s["id"].as_str().unwrap().to_string();
        s["id"] = Value::Null;
        bodies.push(s);
        let (_, mut s) = call(
            &app,
            "POST",
            &format!("/api/sessions/{id}/respond"),
            Some(json!({"vertex": 4, "accept": true})),
        )
        .await;
        s["id"] = Value::Null;
        bodies.push(s);
        bodies
    };
    assert_eq!(run().await, run().await);
}

#[tokio::test]
async fn serves_static_ui() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>console</html>").unwrap();
    let state = AppState::new(persist::load_dataset(fixture("bob.json")).unwrap());
    let app = router(state, Some(dir.path().to_path_buf()));
    let (status, body) = call(&app, "GET", "/index.html", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, Value::String("<html>console</html>".into()));
    let (status, _) = call(&app, "GET", "/", None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = call(&app, "GET", "/api/nothing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "NotFound");
}

#[tokio::test]
async fn unknown_session_is_404() {
    let (_dir, _, app) = app_on("bob.json");
    let (status, _) = call(&app, "GET", "/api/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(
        &app,
        "POST",
        "/api/sessions/nope/respond",
        Some(json!({"vertex": 0, "accept": true})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
