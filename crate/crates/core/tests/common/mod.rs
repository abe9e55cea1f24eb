#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;

use lno::backends::{Backend, LexiconClassifier, LexiconModel, ScoreMode};
use lno::corpus::{parse_conllu, Document};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn load_fixture(name: &str) -> Document {
    parse_conllu(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

/// Random head array where token i (1-based) attaches to an earlier token
/// in a random permutation, giving a uniformly shaped recursive tree.
pub fn random_tree<R: Rng>(rng: &mut R, t: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=t).collect();
    order.shuffle(rng);
    let mut heads = vec![0; t];
    for k in 1..t {
        let parent = order[rng.gen_range(0..k)];
        heads[order[k] - 1] = parent;
    }
    heads
}

pub struct RandomDoc {
    pub conllu: String,
    pub surfaces: Vec<String>,
}

/// One-sentence document over a small vocabulary; every token has a space
/// after it so whitespace tokenization recovers the surfaces.
pub fn random_doc<R: Rng>(rng: &mut R, vocab: &[String], min: usize, max: usize) -> RandomDoc {
    let t = rng.gen_range(min..=max);
    let heads = random_tree(rng, t);
    let mut conllu = String::new();
    let mut surfaces = Vec::new();
    for (i, h) in heads.iter().enumerate() {
        let w = vocab[rng.gen_range(0..vocab.len())].clone();
        conllu.push_str(&format!("{}\t{w}\t_\tX\t_\t_\t{h}\tdep\t_\t_\n", i + 1));
        surfaces.push(w);
    }
    conllu.push('\n');
    RandomDoc { conllu, surfaces }
}

pub fn vocab(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i}")).collect()
}

/// Lexicon with integer weights in [-5, 5] for every vocabulary word.
pub fn random_lexicon<R: Rng>(rng: &mut R, vocab: &[String]) -> LexiconModel {
    let mut m = LexiconModel::new(vec!["neg".into(), "pos".into()]);
    for w in vocab {
        let a = rng.gen_range(-5..=5) as f64;
        let b = rng.gen_range(-5..=5) as f64;
        m.set_weight(w, vec![a, b]).unwrap();
    }
    m
}

pub fn lexicon_backend(model: LexiconModel, mode: ScoreMode) -> Backend {
    Backend::new(Arc::new(LexiconClassifier::new(model, mode)))
}

pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn json(v: Value) -> Self {
        Self {
            status: 200,
            body: v.to_string(),
        }
    }
}

type Handler = dyn Fn(&str, &str) -> Reply + Send + Sync;

/// In-process HTTP server. Records every request as (path, body).
pub struct MockServer {
    pub base: String,
    server: Arc<tiny_http::Server>,
    pub requests: Arc<Mutex<Vec<(String, String)>>>,
    pub content_types: Arc<Mutex<Vec<(String, String)>>>,
    handle: Option<thread::JoinHandle<()>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&str, &str) -> Reply + Send + Sync + 'static) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let port = server.server_addr().to_ip().unwrap().port();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let srv = server.clone();
        let log = requests.clone();
        let content_types = Arc::new(Mutex::new(Vec::new()));
        let ct_log = content_types.clone();
        let handle = thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                let handler = handler.clone();
                let log = log.clone();
                let ct_log = ct_log.clone();
                thread::spawn(move || {
                    let ct = req
                        .headers()
                        .iter()
                        .find(|h| h.field.equiv("Content-Type"))
                        .map(|h| h.value.as_str().to_string())
                        .unwrap_or_default();
                    ct_log.lock().unwrap().push((req.url().to_string(), ct));
                    let mut body = String::new();
                    let _ = req.as_reader().read_to_string(&mut body);
                    let path = req.url().to_string();
                    log.lock().unwrap().push((path.clone(), body.clone()));
                    let reply = handler(&path, &body);
                    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).unwrap();
                    let resp = tiny_http::Response::from_string(reply.body)
                        .with_status_code(reply.status)
                        .with_header(header);
                    let _ = req.respond(resp);
                });
            }
        });
        Self {
            base: format!("http://127.0.0.1:{port}"),
            server,
            requests,
            content_types,
            handle: Some(handle),
        }
    }

    pub fn classify_requests(&self) -> Vec<Vec<String>> {
        self.requests
            .lock()
            .unwrap()
            .iter()
            .filter(|(p, _)| p == "/v1/classify")
            .map(|(_, b)| {
                let v: Value = serde_json::from_str(b).unwrap();
                v["texts"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|t| t.as_str().unwrap().to_string())
                    .collect()
            })
            .collect()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// A conforming server backed by a lexicon model, scoring in `mode`.
pub fn lexicon_server(model: LexiconModel, mode: ScoreMode) -> MockServer {
    MockServer::start(move |path, body| match path {
        "/v1/info" => Reply::json(serde_json::json!({
            "model": "mock-lexicon",
            "labels": model.labels(),
            "score_mode": mode.as_str(),
        })),
        "/v1/classify" => {
            let v: Value = match serde_json::from_str(body) {
                Ok(v) => v,
                Err(_) => return Reply { status: 400, body: "{}".into() },
            };
            let results: Vec<Value> = v["texts"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| {
                    let c = lno::backends::classify_lexicon(&model, t.as_str().unwrap(), mode);
                    serde_json::json!({ "scores": c.scores })
                })
                .collect();
            Reply::json(serde_json::json!({
                "model": "mock-lexicon",
                "labels": model.labels(),
                "results": results,
            }))
        }
        _ => Reply { status: 404, body: "{}".into() },
    })
}
