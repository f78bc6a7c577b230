//! The HTTP language-model client against a local mock endpoint.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use nlstat_core::fixtures::{flight_synonyms, flights};
use nlstat_core::intent::{route, Action, ClientError, LanguageModelClient, Provenance};
use nlstat_service::llm_client::HttpLanguageModel;

/// Serves `app` on an ephemeral port from a background runtime.
fn spawn(app: Router) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{}/complete", rx.recv().unwrap())
}

#[test]
fn valid_reply_is_used() {
    let app = Router::new().route(
        "/complete",
        post(|headers: HeaderMap, Json(body): Json<Value>| async move {
            assert_eq!(headers["authorization"], "Bearer k1");
            assert!(body["system_prompt"].as_str().unwrap().contains("days_left"));
            let output = json!({ "task_id": "test_pairwise", "slots": { "response": "price", "group": "stops" } });
            Json(json!({ "output": output.to_string() }))
        }),
    );
    let client = HttpLanguageModel::new(spawn(app), Some("k1".into()));
    let r = route("are fares different by stops", &flights(), None, &flight_synonyms(), Some(&client));
    assert_eq!(r.provenance, Provenance::LlmClient);
    assert_eq!(r.action, Action::TestPairwise { response: "price".into(), group: "stops".into() });
}

#[test]
fn server_errors_are_retried_once_then_fall_back() {
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    let app = Router::new().route(
        "/complete",
        post(move || {
            let counter = counter.clone();
            async move {
                counter.fetch_add(1, Ordering::SeqCst);
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }),
    );
    let client = HttpLanguageModel::new(spawn(app), None);
    assert!(matches!(client.complete("p", "q"), Err(ClientError::Transport(_))));
    assert_eq!(hits.load(Ordering::SeqCst), 2);

    let r = route("Longer flight results in a more expensive ticket", &flights(), None, &flight_synonyms(), Some(&client));
    assert_eq!(r.provenance, Provenance::RuleGrammar);
    assert!(matches!(r.action, Action::FitModel { .. }));
}

#[test]
fn slow_endpoint_times_out() {
    let app = Router::new().route(
        "/complete",
        post(|| async {
            tokio::time::sleep(Duration::from_secs(2)).await;
            Json(json!({ "output": "{}" }))
        }),
    );
    let client = HttpLanguageModel::with_timeout(spawn(app), None, Duration::from_millis(200));
    assert_eq!(client.complete("p", "q"), Err(ClientError::Timeout));
}
