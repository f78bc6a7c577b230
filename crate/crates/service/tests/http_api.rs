use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use nlstat_core::fixtures::{flight_synonyms, flights};
use nlstat_service::guidance::{AFTER_FIT, REJECTION};
use nlstat_service::http::{router, AppState, SCHEMA_VERSION};
use nlstat_service::store::Store;
use nlstat_service::SessionSettings;

fn settings() -> SessionSettings {
    SessionSettings { synonyms: Arc::new(flight_synonyms()), seed: 7, client: None }
}

async fn call(app: &Router, method: &str, uri: &str, body: Body) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).body(body).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(value["schema_version"], json!(SCHEMA_VERSION), "{value}");
    (status, value)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, "GET", uri, Body::empty()).await
}

async fn query(app: &Router, id: &str, text: &str) -> Value {
    let body = Body::from(json!({ "text": text }).to_string());
    let (status, v) = call(app, "POST", &format!("/sessions/{id}/query"), body).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    v
}

async fn new_session_with_flights(app: &Router) -> String {
    let (status, v) = call(app, "POST", "/sessions", Body::empty()).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = v["session_id"].as_str().unwrap().to_string();
    let csv = flights().to_csv(b',');
    let (status, info) =
        call(app, "POST", &format!("/sessions/{id}/dataset?source_name=flights.csv"), Body::from(csv)).await;
    assert_eq!(status, StatusCode::OK, "{info}");
    assert_eq!(info["n_rows"], 200);
    assert_eq!(info["columns"][2]["levels"], json!(["0", "1", "2"]));
    id
}

#[tokio::test]
async fn analysis_over_http() {
    let app = router(AppState::new(settings(), None));
    let id = new_session_with_flights(&app).await;

    let (status, v) = get(&app, &format!("/sessions/{id}/model")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error_class"], "NoModelError");

    let r = query(&app, &id, "Longer flight results in a more expensive ticket").await;
    assert_eq!(r["response"]["guidance"]["text"], AFTER_FIT);
    assert_eq!(r["response"]["action"]["type"], "fit_model");
    assert_eq!(r["query"]["seq"], 0);
    assert_eq!(r["response"]["seq"], 1);

    let (status, m) = get(&app, &format!("/sessions/{id}/model")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(m["formula"], "price ~ duration");
    assert_eq!(m["coefficients"].as_array().unwrap().len(), 2);

    let (_, views) = get(&app, &format!("/sessions/{id}/model/views")).await;
    assert_eq!(views["residuals_vs_fitted"].as_array().unwrap().len(), 200);

    let (status, chart) = get(&app, &format!("/sessions/{id}/charts?vars=price")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(chart["chart"], "histogram");
    let (_, chart) = get(&app, &format!("/sessions/{id}/charts?vars=duration,price&mode=points")).await;
    assert_eq!(chart["chart"], "scatter");
    let (status, chart) = get(&app, &format!("/sessions/{id}/charts?vars=price,duration,class")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(chart["error_class"], "UnsupportedChartError");

    let (status, h1) = get(&app, &format!("/sessions/{id}/hops?draws=20&seed=3")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(h1["draws"]["draws"].as_array().unwrap().len(), 20);
    assert_eq!(h1["curves"]["grid"].as_array().unwrap().len(), 50);
    let (_, h2) = get(&app, &format!("/sessions/{id}/hops?draws=20&seed=3")).await;
    assert_eq!(h1, h2);

    let r = query(&app, &id, "asdf qwerty").await;
    assert_eq!(r["response"]["text"], REJECTION);

    let (_, t) = get(&app, &format!("/sessions/{id}/transcript")).await;
    assert_eq!(t["entries"].as_array().unwrap().len(), 4);

    let (status, c) = call(&app, "POST", &format!("/sessions/{id}/cancel"), Body::empty()).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{c}");
}

#[tokio::test]
async fn error_statuses() {
    let app = router(AppState::new(settings(), None));
    let (status, v) = get(&app, "/sessions/nope/model").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error_class"], "SessionNotFoundError");

    let (_, v) = call(&app, "POST", "/sessions", Body::empty()).await;
    let id = v["session_id"].as_str().unwrap().to_string();
    let body = Body::from(json!({ "text": "fit price" }).to_string());
    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/query"), body).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error_class"], "NoDatasetError");

    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/query"), Body::from("not json")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error_class"], "BadRequestError");

    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/dataset"), Body::from("a,b\n1,x\n")).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/dataset"), Body::from("a,b\n1,x\n")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");

    let (status, _) = get(&app, "/nowhere").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn engine_errors_are_transcribed() {
    let app = router(AppState::new(settings(), None));
    let id = new_session_with_flights(&app).await;
    let r = query(&app, &id, "Show me hops").await;
    assert_eq!(r["response"]["error"]["error_class"], "NoModelError");
    assert_eq!(r["response"]["text"], "NoModelError: no model has been fitted yet");
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(settings(), Some(Store::open(dir.path()).unwrap())));
    let id = new_session_with_flights(&app).await;
    query(&app, &id, "Longer flight results in a more expensive ticket").await;
    query(&app, &id, "Include class as an additional variable").await;
    let (_, before_t) = get(&app, &format!("/sessions/{id}/transcript")).await;
    let (_, before_m) = get(&app, &format!("/sessions/{id}/model")).await;
    let (_, before_h) = get(&app, &format!("/sessions/{id}/hops")).await;

    let restarted = router(AppState::new(settings(), Some(Store::open(dir.path()).unwrap())));
    let (_, after_t) = get(&restarted, &format!("/sessions/{id}/transcript")).await;
    let (_, after_m) = get(&restarted, &format!("/sessions/{id}/model")).await;
    let (_, after_h) = get(&restarted, &format!("/sessions/{id}/hops")).await;
    assert_eq!(before_t, after_t);
    assert_eq!(before_m, after_m);
    assert_eq!(before_h, after_h);
}
