//! The black-box classifier boundary.
//!
//! A [`Classifier`] turns a batch of texts into per-class scores. [`Backend`]
//! wraps one with batching, bounded parallel dispatch and an optional
//! response cache; the rest of the engine only talks to [`Backend`].

mod cache;
pub mod http;
pub mod lexicon;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheKey, ResponseCache};
pub use http::{HttpClassifier, HttpConfig, ServerInfo};
pub use lexicon::{classify_lexicon, LexiconClassifier, LexiconError, LexiconModel};

/// Whether scores are raw logits or softmax probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Logit,
    #[default]
    Probability,
}

impl ScoreMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMode::Logit => "logit",
            ScoreMode::Probability => "probability",
        }
    }
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logit" => Ok(ScoreMode::Logit),
            "probability" => Ok(ScoreMode::Probability),
            other => Err(format!("unknown score mode {other:?}")),
        }
    }
}

/// One classifier reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub labels: Vec<String>,
    pub scores: Vec<f64>,
    pub predicted: usize,
}

impl Classification {
    pub fn new(labels: Vec<String>, scores: Vec<f64>) -> Result<Self, BackendError> {
        if labels.len() < 2 {
            return Err(BackendError::InvalidScores {
                message: format!("need at least two classes, got {}", labels.len()),
            });
        }
        if labels.len() != scores.len() {
            return Err(BackendError::LengthMismatch {
                index: 0,
                expected: labels.len(),
                got: scores.len(),
            });
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(BackendError::InvalidScores {
                message: format!("non-finite score {bad}"),
            });
        }
        let predicted = argmax(&scores);
        Ok(Self {
            labels,
            scores,
            predicted,
        })
    }

    pub fn score(&self, class: usize) -> f64 {
        self.scores[class]
    }

    pub fn predicted_label(&self) -> &str {
        &self.labels[self.predicted]
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    /// Checks the probability-mode constraints: every score in `[0, 1]` and
    /// a total of 1 within 1e-6.
    pub fn check_probabilities(&self) -> Result<(), BackendError> {
        if let Some(bad) = self.scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(BackendError::InvalidScores {
                message: format!("probability {bad} outside [0, 1]"),
            });
        }
        let total: f64 = self.scores.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(BackendError::InvalidScores {
                message: format!("probabilities sum to {total}"),
            });
        }
        Ok(())
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("connection to {url} failed after {attempts} attempt(s) (transient): {message}")]
    Connect {
        url: String,
        message: String,
        attempts: u32,
    },
    #[error("request to {url} timed out after {attempts} attempt(s) (transient)")]
    Timeout { url: String, attempts: u32 },
    #[error("{url} answered HTTP {status} after {attempts} attempt(s) ({}): {body}", if is_transient_status(*.status) { "transient" } else { "not retried" })]
    Status {
        url: String,
        status: u16,
        body: String,
        attempts: u32,
    },
    #[error("malformed reply (not retried): {message}")]
    Malformed { message: String },
    #[error("missing labels in server reply (not retried)")]
    MissingLabels,
    #[error("result {index} has {got} scores for {expected} labels (not retried)")]
    LengthMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("reply has {got} results for {expected} texts (not retried)")]
    ResultCount { expected: usize, got: usize },
    #[error("invalid scores (not retried): {message}")]
    InvalidScores { message: String },
    #[error("server reports {server} scores, which cannot be converted to {requested}")]
    UnsupportedScoreMode {
        server: ScoreMode,
        requested: ScoreMode,
    },
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
}

pub(crate) fn is_transient_status(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

impl BackendError {
    /// Whether a retry could plausibly succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Connect { .. } | BackendError::Timeout { .. } => true,
            BackendError::Status { status, .. } => is_transient_status(*status),
            _ => false,
        }
    }

    pub(crate) fn with_attempts(self, n: u32) -> Self {
        match self {
            BackendError::Connect { url, message, .. } => BackendError::Connect {
                url,
                message,
                attempts: n,
            },
            BackendError::Timeout { url, .. } => BackendError::Timeout { url, attempts: n },
            BackendError::Status {
                url, status, body, ..
            } => BackendError::Status {
                url,
                status,
                body,
                attempts: n,
            },
            other => other,
        }
    }
}

/// A backend failure attributed to the first input position it affected.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("classifying text {index}: {error}")]
pub struct ClassifyFailure {
    pub index: usize,
    #[source]
    pub error: BackendError,
}

/// Something that scores texts. Implementations must be deterministic for
/// the cache to be transparent.
pub trait Classifier: Send + Sync {
    /// Stable identity used in cache keys and report metadata.
    fn identity(&self) -> String;
    fn labels(&self) -> &[String];
    fn score_mode(&self) -> ScoreMode;
    /// Scores one batch; the reply is parallel to `texts`.
    fn classify_batch(&self, texts: &[String]) -> Result<Vec<Classification>, BackendError>;
}

pub const DEFAULT_BATCH_SIZE: usize = 16;
pub const DEFAULT_PARALLELISM: usize = 4;

/// A classifier plus dispatch policy.
#[derive(Clone)]
pub struct Backend {
    classifier: Arc<dyn Classifier>,
    batch_size: usize,
    parallelism: usize,
    cache: Option<Arc<ResponseCache>>,
}

impl fmt::Debug for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backend")
            .field("identity", &self.classifier.identity())
            .field("batch_size", &self.batch_size)
            .field("parallelism", &self.parallelism)
            .field("cache", &self.cache.is_some())
            .finish()
    }
}

impl Backend {
    /// Default policy: batches of 16, 4 concurrent batches, cache on.
    pub fn new(classifier: Arc<dyn Classifier>) -> Self {
        Self {
            classifier,
            batch_size: DEFAULT_BATCH_SIZE,
            parallelism: DEFAULT_PARALLELISM,
            cache: Some(Arc::new(ResponseCache::default())),
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }

    pub fn with_cache(mut self, cache: Option<Arc<ResponseCache>>) -> Self {
        self.cache = cache;
        self
    }

    pub fn without_cache(self) -> Self {
        self.with_cache(None)
    }

    pub fn classifier(&self) -> &dyn Classifier {
        self.classifier.as_ref()
    }

    pub fn identity(&self) -> String {
        self.classifier.identity()
    }

    pub fn labels(&self) -> &[String] {
        self.classifier.labels()
    }

    pub fn score_mode(&self) -> ScoreMode {
        self.classifier.score_mode()
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_deref()
    }

    /// Scores `texts`, serving repeats from the cache when enabled. Only
    /// distinct cache misses reach the classifier.
    pub fn classify(&self, texts: &[String]) -> Result<Vec<Classification>, ClassifyFailure> {
        let Some(cache) = &self.cache else {
            return self.dispatch(texts);
        };
        let identity = self.classifier.identity();
        let mode = self.classifier.score_mode();
        let key = |text: &str| CacheKey::new(&identity, mode, text);

        let mut out: Vec<Option<Classification>> = texts.iter().map(|t| cache.get(&key(t))).collect();
        let mut misses: Vec<String> = Vec::new();
        let mut first_pos: Vec<usize> = Vec::new();
        let mut seen = std::collections::HashMap::new();
        for (i, t) in texts.iter().enumerate() {
            if out[i].is_none() && !seen.contains_key(t.as_str()) {
                seen.insert(t.as_str(), misses.len());
                misses.push(t.clone());
                first_pos.push(i);
            }
        }
        if !misses.is_empty() {
            let fresh = self.dispatch(&misses).map_err(|f| ClassifyFailure {
                index: first_pos[f.index],
                error: f.error,
            })?;
            for (text, c) in misses.iter().zip(&fresh) {
                cache.insert(key(text), c.clone());
            }
            for (i, t) in texts.iter().enumerate() {
                if out[i].is_none() {
                    out[i] = Some(fresh[seen[t.as_str()]].clone());
                }
            }
        }
        Ok(out.into_iter().map(|c| c.expect("filled above")).collect())
    }

    /// Sends `texts` in batches, up to `parallelism` at a time, and
    /// reassembles replies in input order. On failure the earliest failing
    /// batch is reported.
    fn dispatch(&self, texts: &[String]) -> Result<Vec<Classification>, ClassifyFailure> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let chunks: Vec<&[String]> = texts.chunks(self.batch_size).collect();
        let run = |i: usize| -> Result<Vec<Classification>, ClassifyFailure> {
            let reply = self
                .classifier
                .classify_batch(chunks[i])
                .map_err(|error| ClassifyFailure {
                    index: i * self.batch_size,
                    error,
                })?;
            if reply.len() != chunks[i].len() {
                return Err(ClassifyFailure {
                    index: i * self.batch_size,
                    error: BackendError::ResultCount {
                        expected: chunks[i].len(),
                        got: reply.len(),
                    },
                });
            }
            Ok(reply)
        };

        let workers = self.parallelism.min(chunks.len());
        let results: Vec<Result<Vec<Classification>, ClassifyFailure>> = if workers <= 1 {
            let mut acc = Vec::with_capacity(chunks.len());
            for i in 0..chunks.len() {
                let r = run(i);
                let failed = r.is_err();
                acc.push(r);
                if failed {
                    break;
                }
            }
            acc
        } else {
            let next = AtomicUsize::new(0);
            let failed = AtomicBool::new(false);
            let slots: Mutex<Vec<Option<Result<Vec<Classification>, ClassifyFailure>>>> =
                Mutex::new((0..chunks.len()).map(|_| None).collect());
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        if failed.load(Ordering::Acquire) {
                            break;
                        }
                        let i = next.fetch_add(1, Ordering::AcqRel);
                        if i >= chunks.len() {
                            break;
                        }
                        let r = run(i);
                        if r.is_err() {
                            failed.store(true, Ordering::Release);
                        }
                        slots.lock().expect("slot lock")[i] = Some(r);
                    });
                }
            });
            // Batches are claimed in index order, so every slot before the
            // first failure has been filled.
            slots
                .into_inner()
                .expect("slot lock")
                .into_iter()
                .map_while(|s| s)
                .collect()
        };

        let mut out = Vec::with_capacity(texts.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Lexicon,
    Http,
}

/// User-facing backend selection.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub score_mode: ScoreMode,
    pub batch_size: usize,
    pub parallelism: usize,
    pub cache_enabled: bool,
    pub endpoint: Option<String>,
    pub lexicon_path: Option<PathBuf>,
    pub timeout: Duration,
}

impl BackendConfig {
    pub fn lexicon(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::Lexicon,
            lexicon_path: Some(path.into()),
            ..Self::base(BackendKind::Lexicon)
        }
    }

    pub fn http(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: Some(endpoint.into()),
            ..Self::base(BackendKind::Http)
        }
    }

    fn base(kind: BackendKind) -> Self {
        Self {
            kind,
            score_mode: ScoreMode::default(),
            batch_size: DEFAULT_BATCH_SIZE,
            parallelism: DEFAULT_PARALLELISM,
            cache_enabled: true,
            endpoint: None,
            lexicon_path: None,
            timeout: http::DEFAULT_TIMEOUT,
        }
    }

    /// Checks that the kind-specific fields are present and positive.
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.batch_size == 0 {
            return Err(BackendError::Config("batch_size must be positive".into()));
        }
        if self.parallelism == 0 {
            return Err(BackendError::Config("parallelism must be positive".into()));
        }
        match self.kind {
            BackendKind::Lexicon if self.lexicon_path.is_none() => Err(BackendError::Config(
                "lexicon backend requires a lexicon path".into(),
            )),
            BackendKind::Http if self.endpoint.is_none() => Err(BackendError::Config(
                "http backend requires an endpoint".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Loads or connects the classifier and applies the dispatch policy.
    pub fn build(&self) -> Result<Backend, BackendError> {
        self.validate()?;
        let classifier: Arc<dyn Classifier> = match self.kind {
            BackendKind::Lexicon => {
                let path = self.lexicon_path.as_ref().expect("validated");
                let model = LexiconModel::load(path)?;
                Arc::new(LexiconClassifier::new(model, self.score_mode).named(path.display()))
            }
            BackendKind::Http => {
                let config = HttpConfig {
                    endpoint: self.endpoint.clone().expect("validated"),
                    timeout: self.timeout,
                    ..HttpConfig::default()
                };
                Arc::new(HttpClassifier::connect(config, self.score_mode)?)
            }
        };
        let backend = Backend::new(classifier)
            .with_batch_size(self.batch_size)
            .with_parallelism(self.parallelism);
        Ok(if self.cache_enabled {
            backend
        } else {
            backend.without_cache()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    /// Echoes text length into the second class and records batch sizes.
    struct Recorder {
        labels: Vec<String>,
        batches: Mutex<Vec<usize>>,
        calls: AtomicUsize,
        fail_on: Option<String>,
    }

    impl Recorder {
        fn new() -> Self {
            Self {
                labels: vec!["a".into(), "b".into()],
                batches: Mutex::new(Vec::new()),
                calls: AtomicUsize::new(0),
                fail_on: None,
            }
        }
    }

    impl Classifier for Recorder {
        fn identity(&self) -> String {
            "recorder".into()
        }
        fn labels(&self) -> &[String] {
            &self.labels
        }
        fn score_mode(&self) -> ScoreMode {
            ScoreMode::Logit
        }
        fn classify_batch(&self, texts: &[String]) -> Result<Vec<Classification>, BackendError> {
            self.calls.fetch_add(texts.len(), Ordering::SeqCst);
            self.batches.lock().unwrap().push(texts.len());
            if let Some(bad) = &self.fail_on {
                if texts.contains(bad) {
                    return Err(BackendError::Malformed {
                        message: "boom".into(),
                    });
                }
            }
            texts
                .iter()
                .map(|t| Classification::new(self.labels.clone(), vec![0.0, t.len() as f64]))
                .collect()
        }
    }

    fn texts(n: usize) -> Vec<String> {
        (0..n).map(|i| "x".repeat(i + 1)).collect()
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn softmax_of_zero_two() {
        let p = softmax(&[0.0, 2.0]);
        assert!((p[0] - 0.1192).abs() < 1e-4);
        assert!((p[1] - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn classification_rejects_bad_shapes() {
        assert!(matches!(
            Classification::new(vec!["a".into()], vec![1.0]),
            Err(BackendError::InvalidScores { .. })
        ));
        assert!(matches!(
            Classification::new(vec!["a".into(), "b".into()], vec![1.0, 2.0, 3.0]),
            Err(BackendError::LengthMismatch { expected: 2, got: 3, .. })
        ));
        assert!(Classification::new(vec!["a".into(), "b".into()], vec![f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn batches_are_ceiling_split_and_reassembled() {
        let rec = Arc::new(Recorder::new());
        let backend = Backend::new(rec.clone())
            .with_batch_size(16)
            .with_parallelism(3)
            .without_cache();
        let input = texts(40);
        let out = backend.classify(&input).unwrap();
        let mut sizes = rec.batches.lock().unwrap().clone();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![8, 16, 16]);
        for (t, c) in input.iter().zip(&out) {
            assert_eq!(c.scores[1], t.len() as f64);
        }
    }

    #[test]
    fn cache_serves_repeats() {
        let rec = Arc::new(Recorder::new());
        let backend = Backend::new(rec.clone());
        let t = vec!["same".to_string()];
        backend.classify(&t).unwrap();
        backend.classify(&t).unwrap();
        assert_eq!(rec.calls.load(Ordering::SeqCst), 1);

        backend
            .classify(&["a b".to_string(), "a  b".to_string()])
            .unwrap();
        assert_eq!(rec.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn duplicates_in_one_call_hit_the_classifier_once() {
        let rec = Arc::new(Recorder::new());
        let backend = Backend::new(rec.clone());
        let out = backend
            .classify(&["q".to_string(), "q".to_string(), "r".to_string()])
            .unwrap();
        assert_eq!(out[0], out[1]);
        assert_eq!(rec.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn disabled_cache_sends_every_text() {
        let rec = Arc::new(Recorder::new());
        let backend = Backend::new(rec.clone()).without_cache();
        backend
            .classify(&["q".to_string(), "q".to_string()])
            .unwrap();
        backend.classify(&["q".to_string()]).unwrap();
        assert_eq!(rec.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn errors_are_not_cached_and_carry_the_position() {
        let mut rec = Recorder::new();
        rec.fail_on = Some("bad".into());
        let rec = Arc::new(rec);
        let backend = Backend::new(rec.clone()).with_batch_size(2);
        let input: Vec<String> = ["a", "b", "c", "bad", "e"].iter().map(|s| s.to_string()).collect();
        let err = backend.classify(&input).unwrap_err();
        assert_eq!(err.index, 2);
        assert!(backend.cache().unwrap().get(&CacheKey::new("recorder", ScoreMode::Logit, "bad")).is_none());
    }

    #[test]
    fn config_requires_kind_fields() {
        let mut cfg = BackendConfig::http("http://127.0.0.1:1");
        cfg.endpoint = None;
        assert!(matches!(cfg.validate(), Err(BackendError::Config(_))));
        let mut cfg = BackendConfig::lexicon("x.tsv");
        cfg.lexicon_path = None;
        assert!(matches!(cfg.validate(), Err(BackendError::Config(_))));
        let mut cfg = BackendConfig::lexicon("x.tsv");
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn transient_classification() {
        let e = BackendError::Status {
            url: "u".into(),
            status: 503,
            body: String::new(),
            attempts: 3,
        };
        assert!(e.is_transient());
        assert!(e.to_string().contains("transient"));
        let e = BackendError::Status {
            url: "u".into(),
            status: 400,
            body: String::new(),
            attempts: 1,
        };
        assert!(!e.is_transient());
        assert!(!BackendError::MissingLabels.is_transient());
    }
}
