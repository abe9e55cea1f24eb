//! Remote classifier over JSON/HTTP.
//!
//! `GET {endpoint}/v1/info` returns
//! `{"model": "...", "labels": [...], "score_mode": "logit"|"probability"}`
//! and `POST {endpoint}/v1/classify` with `{"texts": [...]}` returns
//! `{"model": "...", "labels": [...], "results": [{"scores": [...]}, ...]}`.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{json, Value};

use super::{softmax, BackendError, Classification, Classifier, ScoreMode};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_RETRIES: u32 = 2;
pub const DEFAULT_BACKOFF: Duration = Duration::from_millis(200);

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub endpoint: String,
    /// Per-request timeout.
    pub timeout: Duration,
    /// Extra attempts after the first, for transient failures only.
    pub retries: u32,
    /// Delay before the first retry; doubles for each further retry.
    pub backoff: Duration,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            timeout: DEFAULT_TIMEOUT,
            retries: DEFAULT_RETRIES,
            backoff: DEFAULT_BACKOFF,
        }
    }
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            ..Self::default()
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.endpoint.trim_end_matches('/'), path)
    }
}

/// Contents of `/v1/info`.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerInfo {
    pub model: String,
    pub labels: Vec<String>,
    pub score_mode: ScoreMode,
}

impl ServerInfo {
    pub fn from_json(value: &Value) -> Result<Self, BackendError> {
        let obj = value.as_object().ok_or_else(|| malformed("info reply is not an object"))?;
        let model = obj
            .get("model")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed("info reply lacks a model name"))?
            .to_string();
        let labels = parse_labels(obj.get("labels"))?;
        let score_mode = match obj.get("score_mode").and_then(Value::as_str) {
            Some(s) => s.parse().map_err(|e: String| malformed(&e))?,
            None => return Err(malformed("info reply lacks score_mode")),
        };
        Ok(Self {
            model,
            labels,
            score_mode,
        })
    }
}

fn malformed(message: &str) -> BackendError {
    BackendError::Malformed {
        message: message.to_string(),
    }
}

fn parse_labels(value: Option<&Value>) -> Result<Vec<String>, BackendError> {
    let arr = value
        .and_then(Value::as_array)
        .ok_or(BackendError::MissingLabels)?;
    let labels = arr
        .iter()
        .map(|l| l.as_str().map(str::to_string))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| malformed("labels must be strings"))?;
    if labels.len() < 2 {
        return Err(BackendError::InvalidScores {
            message: format!("need at least two labels, server declared {}", labels.len()),
        });
    }
    Ok(labels)
}

/// Checks a `/v1/classify` reply against the advertised labels and returns
/// the raw score vectors.
pub fn parse_classify_reply(
    value: &Value,
    labels: &[String],
    expected: usize,
) -> Result<Vec<Vec<f64>>, BackendError> {
    let obj = value
        .as_object()
        .ok_or_else(|| malformed("classify reply is not an object"))?;
    let reply_labels = parse_labels(obj.get("labels"))?;
    if reply_labels != labels {
        return Err(malformed(&format!(
            "reply labels {reply_labels:?} differ from advertised {labels:?}"
        )));
    }
    let results = obj
        .get("results")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("reply lacks a results array"))?;
    if results.len() != expected {
        return Err(BackendError::ResultCount {
            expected,
            got: results.len(),
        });
    }
    results
        .iter()
        .enumerate()
        .map(|(index, r)| {
            let scores = r
                .get("scores")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed(&format!("result {index} lacks scores")))?;
            if scores.len() != labels.len() {
                return Err(BackendError::LengthMismatch {
                    index,
                    expected: labels.len(),
                    got: scores.len(),
                });
            }
            scores
                .iter()
                .map(|s| {
                    s.as_f64()
                        .ok_or_else(|| malformed(&format!("result {index}: score {s} is not a number")))
                })
                .collect()
        })
        .collect()
}

/// Client for a server speaking the `/v1` protocol.
#[derive(Debug, Clone)]
pub struct HttpClassifier {
    config: HttpConfig,
    client: Client,
    info: ServerInfo,
    requested: ScoreMode,
}

impl HttpClassifier {
    /// Fetches `/v1/info` and prepares a client producing `requested` scores.
    ///
    /// Logit servers can serve probability requests (softmax is applied
    /// locally); probability servers cannot serve logit requests.
    pub fn connect(config: HttpConfig, requested: ScoreMode) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let info = fetch_info_with(&client, &config)?;
        if info.score_mode == ScoreMode::Probability && requested == ScoreMode::Logit {
            return Err(BackendError::UnsupportedScoreMode {
                server: info.score_mode,
                requested,
            });
        }
        Ok(Self {
            config,
            client,
            info,
            requested,
        })
    }

    pub fn info(&self) -> &ServerInfo {
        &self.info
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn post_once(&self, texts: &[String]) -> Result<Value, BackendError> {
        let url = self.config.url("/v1/classify");
        let resp = self
            .client
            .post(&url)
            .header("Content-Type", "application/json")
            .body(json!({ "texts": texts }).to_string())
            .send()
            .map_err(|e| transport_error(&url, e))?;
        read_json(&url, resp)
    }
}

/// Runs `op` with the configured retry and exponential backoff policy.
pub(crate) fn with_retries<T>(
    config: &HttpConfig,
    mut op: impl FnMut() -> Result<T, BackendError>,
) -> Result<T, BackendError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match op() {
            Ok(v) => return Ok(v),
            Err(e) if e.is_transient() && attempt <= config.retries => {
                thread::sleep(config.backoff * 2u32.pow(attempt - 1));
            }
            Err(e) => return Err(e.with_attempts(attempt)),
        }
    }
}

fn transport_error(url: &str, e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout {
            url: url.to_string(),
            attempts: 1,
        }
    } else {
        let mut message = e.to_string();
        let mut source = std::error::Error::source(&e);
        while let Some(s) = source {
            message.push_str(": ");
            message.push_str(&s.to_string());
            source = s.source();
        }
        BackendError::Connect {
            url: url.to_string(),
            message,
            attempts: 1,
        }
    }
}

fn read_json(url: &str, resp: reqwest::blocking::Response) -> Result<Value, BackendError> {
    let status = resp.status().as_u16();
    let body = resp.text().map_err(|e| transport_error(url, e))?;
    if status != 200 {
        return Err(BackendError::Status {
            url: url.to_string(),
            status,
            body: body.chars().take(200).collect(),
            attempts: 1,
        });
    }
    serde_json::from_str(&body).map_err(|e| malformed(&format!("invalid JSON from {url}: {e}")))
}

fn fetch_info_with(client: &Client, config: &HttpConfig) -> Result<ServerInfo, BackendError> {
    let url = config.url("/v1/info");
    let value = with_retries(config, || {
        let resp = client.get(&url).send().map_err(|e| transport_error(&url, e))?;
        read_json(&url, resp)
    })?;
    ServerInfo::from_json(&value)
}

/// Fetches `/v1/info` without building a classifier.
pub fn fetch_info(config: &HttpConfig) -> Result<ServerInfo, BackendError> {
    let client = Client::builder()
        .timeout(config.timeout)
        .build()
        .map_err(|e| BackendError::Config(e.to_string()))?;
    fetch_info_with(&client, config)
}

impl Classifier for HttpClassifier {
    fn identity(&self) -> String {
        format!("http:{}#{}", self.config.endpoint, self.info.model)
    }

    fn labels(&self) -> &[String] {
        &self.info.labels
    }

    fn score_mode(&self) -> ScoreMode {
        self.requested
    }

    fn classify_batch(&self, texts: &[String]) -> Result<Vec<Classification>, BackendError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let value = with_retries(&self.config, || self.post_once(texts))?;
        let raw = parse_classify_reply(&value, &self.info.labels, texts.len())?;
        raw.into_iter()
            .enumerate()
            .map(|(index, scores)| {
                let scores = match (self.info.score_mode, self.requested) {
                    (ScoreMode::Logit, ScoreMode::Probability) => softmax(&scores),
                    _ => scores,
                };
                let c = Classification::new(self.info.labels.clone(), scores).map_err(|e| match e {
                    BackendError::LengthMismatch { expected, got, .. } => {
                        BackendError::LengthMismatch { index, expected, got }
                    }
                    other => other,
                })?;
                if self.requested == ScoreMode::Probability {
                    c.check_probabilities()?;
                }
                Ok(c)
            })
            .collect()
    }
}
