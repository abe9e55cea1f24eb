mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use common::{lexicon_server, MockServer, Reply};
use lno::backends::http::{HttpClassifier, HttpConfig};
use lno::backends::{Backend, BackendConfig, BackendError, Classifier, LexiconModel, ScoreMode};
use serde_json::json;

fn fast(endpoint: &str) -> HttpConfig {
    HttpConfig {
        backoff: Duration::from_millis(5),
        timeout: Duration::from_secs(5),
        ..HttpConfig::new(endpoint)
    }
}

fn info_reply(mode: &str) -> Reply {
    Reply::json(json!({"model": "fixed", "labels": ["neg", "pos"], "score_mode": mode}))
}

fn model() -> LexiconModel {
    LexiconModel::new(vec!["neg".into(), "pos".into()])
        .with_weight("best", vec![0.0, 2.0])
        .unwrap()
        .with_weight("bad", vec![1.5, 0.0])
        .unwrap()
}

#[test]
fn single_text_round_trip() {
    let server = MockServer::start(|path, _| match path {
        "/v1/info" => info_reply("probability"),
        _ => Reply::json(json!({"model": "fixed", "labels": ["neg", "pos"], "results": [{"scores": [0.3, 0.7]}]})),
    });
    let client = HttpClassifier::connect(fast(&server.base), ScoreMode::Probability).unwrap();
    let out = client.classify_batch(&["great".to_string()]).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].predicted_label(), "pos");
    assert_eq!(out[0].scores, vec![0.3, 0.7]);

    let bodies = server.requests.lock().unwrap().clone();
    let (path, body) = bodies.iter().find(|(p, _)| p == "/v1/classify").unwrap();
    assert_eq!(path, "/v1/classify");
    assert_eq!(body, r#"{"texts":["great"]}"#);
    let cts = server.content_types.lock().unwrap().clone();
    assert!(cts.iter().any(|(p, ct)| p == "/v1/classify" && ct == "application/json"));
}

#[test]
fn too_many_scores_is_a_length_mismatch() {
    let server = MockServer::start(|path, _| match path {
        "/v1/info" => info_reply("probability"),
        _ => Reply::json(json!({"model": "fixed", "labels": ["neg", "pos"], "results": [{"scores": [0.1, 0.2, 0.7]}]})),
    });
    let client = HttpClassifier::connect(fast(&server.base), ScoreMode::Probability).unwrap();
    let err = client.classify_batch(&["x".to_string()]).unwrap_err();
    assert_eq!(err, BackendError::LengthMismatch { index: 0, expected: 2, got: 3 });
    assert!(!err.is_transient());
}

#[test]
fn forty_texts_in_batches_of_sixteen() {
    let server = lexicon_server(model(), ScoreMode::Logit);
    let client = HttpClassifier::connect(fast(&server.base), ScoreMode::Logit).unwrap();
    let backend = Backend::new(Arc::new(client)).with_batch_size(16).with_parallelism(4).without_cache();
    let texts: Vec<String> = (0..40)
        .map(|i| match i % 3 {
            0 => format!("best {i}"),
            1 => format!("bad {i}"),
            _ => format!("meh {i}"),
        })
        .collect();
    let out = backend.classify(&texts).unwrap();

    let mut sizes: Vec<usize> = server.classify_requests().iter().map(Vec::len).collect();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![8, 16, 16]);
    for (i, c) in out.iter().enumerate() {
        let expected = lno::backends::classify_lexicon(&model(), &texts[i], ScoreMode::Logit);
        assert_eq!(c, &expected, "text {i}");
    }
}

#[test]
fn batching_is_transparent() {
    let server = lexicon_server(model(), ScoreMode::Probability);
    let texts: Vec<String> = (0..23).map(|i| format!("best{} bad {}", i % 2, "best ".repeat(i % 4))).collect();
    let one = {
        let c = HttpClassifier::connect(fast(&server.base), ScoreMode::Probability).unwrap();
        Backend::new(Arc::new(c)).with_batch_size(1).with_parallelism(1).without_cache().classify(&texts).unwrap()
    };
    for (batch, par) in [(5, 1), (7, 3), (16, 8), (100, 2)] {
        let c = HttpClassifier::connect(fast(&server.base), ScoreMode::Probability).unwrap();
        let got = Backend::new(Arc::new(c)).with_batch_size(batch).with_parallelism(par).classify(&texts).unwrap();
        assert_eq!(got, one, "batch {batch} parallelism {par}");
    }
}

#[test]
fn logit_server_can_serve_probabilities() {
    let server = lexicon_server(model(), ScoreMode::Logit);
    let c = HttpClassifier::connect(fast(&server.base), ScoreMode::Probability).unwrap();
    let out = c.classify_batch(&["best movie".to_string()]).unwrap();
    assert!((out[0].scores[1] - 0.8808).abs() < 1e-4);
    out[0].check_probabilities().unwrap();
}

#[test]
fn probability_server_cannot_serve_logits() {
    let server = lexicon_server(model(), ScoreMode::Probability);
    let err = HttpClassifier::connect(fast(&server.base), ScoreMode::Logit).unwrap_err();
    assert!(matches!(err, BackendError::UnsupportedScoreMode { .. }));
}

#[test]
fn transient_status_is_retried_twice() {
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    let server = MockServer::start(move |path, _| match path {
        "/v1/info" => info_reply("probability"),
        _ => {
            h.fetch_add(1, Ordering::SeqCst);
            Reply { status: 503, body: "busy".into() }
        }
    });
    let client = HttpClassifier::connect(fast(&server.base), ScoreMode::Probability).unwrap();
    let err = client.classify_batch(&["x".to_string()]).unwrap_err();
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    match err {
        BackendError::Status { status, attempts, .. } => {
            assert_eq!(status, 503);
            assert_eq!(attempts, 3);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn recovery_after_a_transient_failure() {
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    let server = MockServer::start(move |path, _| match path {
        "/v1/info" => info_reply("probability"),
        _ if h.fetch_add(1, Ordering::SeqCst) == 0 => Reply { status: 502, body: String::new() },
        _ => Reply::json(json!({"model": "fixed", "labels": ["neg", "pos"], "results": [{"scores": [0.6, 0.4]}]})),
    });
    let client = HttpClassifier::connect(fast(&server.base), ScoreMode::Probability).unwrap();
    let out = client.classify_batch(&["x".to_string()]).unwrap();
    assert_eq!(out[0].predicted, 0);
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    let server = MockServer::start(move |path, _| match path {
        "/v1/info" => info_reply("probability"),
        _ => {
            h.fetch_add(1, Ordering::SeqCst);
            Reply { status: 400, body: "bad request".into() }
        }
    });
    let client = HttpClassifier::connect(fast(&server.base), ScoreMode::Probability).unwrap();
    let err = client.classify_batch(&["x".to_string()]).unwrap_err();
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    assert!(matches!(err, BackendError::Status { status: 400, attempts: 1, .. }));
}

#[test]
fn malformed_replies_are_reported() {
    let server = MockServer::start(|path, _| match path {
        "/v1/info" => info_reply("probability"),
        _ => Reply { status: 200, body: "not json".into() },
    });
    let client = HttpClassifier::connect(fast(&server.base), ScoreMode::Probability).unwrap();
    assert!(matches!(
        client.classify_batch(&["x".to_string()]),
        Err(BackendError::Malformed { .. })
    ));
}

#[test]
fn probabilities_that_do_not_sum_to_one_are_rejected() {
    let server = MockServer::start(|path, _| match path {
        "/v1/info" => info_reply("probability"),
        _ => Reply::json(json!({"model": "fixed", "labels": ["neg", "pos"], "results": [{"scores": [0.5, 0.6]}]})),
    });
    let client = HttpClassifier::connect(fast(&server.base), ScoreMode::Probability).unwrap();
    assert!(matches!(
        client.classify_batch(&["x".to_string()]),
        Err(BackendError::InvalidScores { .. })
    ));
}

#[test]
fn timeouts_are_transient_and_annotated() {
    let server = MockServer::start(|path, _| match path {
        "/v1/info" => info_reply("probability"),
        _ => {
            std::thread::sleep(Duration::from_millis(1500));
            Reply::json(json!({}))
        }
    });
    let cfg = HttpConfig {
        timeout: Duration::from_millis(200),
        retries: 1,
        backoff: Duration::from_millis(1),
        ..HttpConfig::new(server.base.clone())
    };
    let client = HttpClassifier::connect(cfg, ScoreMode::Probability).unwrap();
    let err = client.classify_batch(&["x".to_string()]).unwrap_err();
    assert!(matches!(err, BackendError::Timeout { attempts: 2, .. }), "{err:?}");
}

#[test]
fn unreachable_endpoint_is_a_connect_error() {
    // Bind then drop to get a port nobody listens on.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = HttpClassifier::connect(fast(&format!("http://127.0.0.1:{port}")), ScoreMode::Probability).unwrap_err();
    assert!(matches!(err, BackendError::Connect { attempts: 3, .. }), "{err:?}");
    assert!(err.is_transient());
}

#[test]
fn backend_config_builds_an_http_backend() {
    let server = lexicon_server(model(), ScoreMode::Logit);
    let mut cfg = BackendConfig::http(server.base.clone());
    cfg.score_mode = ScoreMode::Logit;
    cfg.batch_size = 2;
    let backend = cfg.build().unwrap();
    assert_eq!(backend.labels(), &["neg".to_string(), "pos".to_string()]);
    let out = backend.classify(&["best".into(), "bad".into(), "best".into()]).unwrap();
    assert_eq!(out[0].scores, vec![0.0, 2.0]);
    assert_eq!(out[1].scores, vec![1.5, 0.0]);
    assert_eq!(out[0], out[2]);
    // the duplicate was served from the cache
    assert_eq!(server.classify_requests().concat().len(), 2);
}
