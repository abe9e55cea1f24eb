//! A deterministic bag-of-words linear classifier.
//!
//! File format (UTF-8, tab separated):
//!
//! ```text
//! #labels	neg	pos
//! #bias	0	0
//! best	0	2
//! terrible	3	0
//! ```
//!
//! The `#bias` line is optional and defaults to zeros. Blank lines are
//! ignored.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::Path;

use thiserror::Error;

use super::{softmax, BackendError, Classification, Classifier, ScoreMode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LexiconError {
    #[error("lexicon line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("lexicon has {got} values for {expected} labels ({context})")]
    Arity {
        expected: usize,
        got: usize,
        context: String,
    },
    #[error("reading lexicon {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconModel {
    labels: Vec<String>,
    weights: HashMap<String, Vec<f64>>,
    bias: Vec<f64>,
    case_fold: bool,
}

impl LexiconModel {
    /// A model with zero bias and no weights.
    pub fn new(labels: Vec<String>) -> Self {
        let bias = vec![0.0; labels.len()];
        Self {
            labels,
            weights: HashMap::new(),
            bias,
            case_fold: true,
        }
    }

    pub fn with_bias(mut self, bias: Vec<f64>) -> Result<Self, LexiconError> {
        self.check_arity(bias.len(), "bias")?;
        self.bias = bias;
        Ok(self)
    }

    pub fn with_case_fold(mut self, case_fold: bool) -> Self {
        if case_fold && !self.case_fold {
            let weights = std::mem::take(&mut self.weights);
            for (k, v) in weights {
                self.weights.insert(k.to_lowercase(), v);
            }
        }
        self.case_fold = case_fold;
        self
    }

    /// Sets the weight vector of `token`, replacing any previous one.
    pub fn with_weight(mut self, token: &str, weights: Vec<f64>) -> Result<Self, LexiconError> {
        self.set_weight(token, weights)?;
        Ok(self)
    }

    pub fn set_weight(&mut self, token: &str, weights: Vec<f64>) -> Result<(), LexiconError> {
        self.check_arity(weights.len(), token)?;
        let key = self.key(token);
        self.weights.insert(key, weights);
        Ok(())
    }

    fn check_arity(&self, got: usize, context: &str) -> Result<(), LexiconError> {
        if got == self.labels.len() {
            Ok(())
        } else {
            Err(LexiconError::Arity {
                expected: self.labels.len(),
                got,
                context: context.to_string(),
            })
        }
    }

    fn key(&self, token: &str) -> String {
        if self.case_fold {
            token.to_lowercase()
        } else {
            token.to_string()
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight(&self, token: &str) -> Option<&[f64]> {
        self.weights.get(&self.key(token)).map(Vec::as_slice)
    }

    pub fn logits(&self, text: &str) -> Vec<f64> {
        let mut logits = self.bias.clone();
        for tok in text.split_whitespace() {
            if let Some(w) = self.weight(tok) {
                for (l, v) in logits.iter_mut().zip(w) {
                    *l += v;
                }
            }
        }
        logits
    }

    pub fn parse(input: &str) -> Result<Self, LexiconError> {
        let mut model: Option<LexiconModel> = None;
        let mut saw_row = false;
        for (idx, raw) in input.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let Some(current) = model.as_mut() else {
                if cols[0] != "#labels" {
                    return Err(LexiconError::Format {
                        line: line_no,
                        message: "first line must be #labels".into(),
                    });
                }
                let labels: Vec<String> = cols[1..].iter().map(|s| s.to_string()).collect();
                if labels.len() < 2 {
                    return Err(LexiconError::Format {
                        line: line_no,
                        message: "need at least two labels".into(),
                    });
                }
                model = Some(LexiconModel::new(labels));
                continue;
            };
            let values = cols[1..]
                .iter()
                .map(|v| {
                    v.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                        LexiconError::Format {
                            line: line_no,
                            message: format!("{v:?} is not a finite number"),
                        }
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            let at_line = |e: LexiconError| match e {
                LexiconError::Arity { expected, got, .. } => LexiconError::Format {
                    line: line_no,
                    message: format!("expected {expected} values, found {got}"),
                },
                other => other,
            };
            if cols[0] == "#bias" {
                if saw_row {
                    return Err(LexiconError::Format {
                        line: line_no,
                        message: "#bias must precede weight rows".into(),
                    });
                }
                current.check_arity(values.len(), "bias").map_err(at_line)?;
                current.bias = values;
                continue;
            }
            saw_row = true;
            if cols[0].is_empty() {
                return Err(LexiconError::Format {
                    line: line_no,
                    message: "empty token".into(),
                });
            }
            if current.weight(cols[0]).is_some() {
                return Err(LexiconError::Format {
                    line: line_no,
                    message: format!("duplicate token {:?}", cols[0]),
                });
            }
            current.set_weight(cols[0], values).map_err(at_line)?;
        }
        model.ok_or(LexiconError::Format {
            line: 1,
            message: "empty lexicon".into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|e| LexiconError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }
}

/// Scores `text` with `model`: bias plus the weights of every
/// whitespace-separated token, unknown tokens counting zero.
pub fn classify_lexicon(model: &LexiconModel, text: &str, mode: ScoreMode) -> Classification {
    let logits = model.logits(text);
    let scores = match mode {
        ScoreMode::Logit => logits,
        ScoreMode::Probability => softmax(&logits),
    };
    Classification::new(model.labels.clone(), scores)
        .expect("lexicon arity is checked at construction")
}

/// [`LexiconModel`] exposed as a [`Classifier`].
#[derive(Debug, Clone)]
pub struct LexiconClassifier {
    model: LexiconModel,
    mode: ScoreMode,
    name: String,
}

impl LexiconClassifier {
    pub fn new(model: LexiconModel, mode: ScoreMode) -> Self {
        Self {
            model,
            mode,
            name: "inline".into(),
        }
    }

    pub fn named(mut self, name: impl Display) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn model(&self) -> &LexiconModel {
        &self.model
    }
}

impl Classifier for LexiconClassifier {
    fn identity(&self) -> String {
        format!("lexicon:{}", self.name)
    }

    fn labels(&self) -> &[String] {
        self.model.labels()
    }

    fn score_mode(&self) -> ScoreMode {
        self.mode
    }

    fn classify_batch(&self, texts: &[String]) -> Result<Vec<Classification>, BackendError> {
        Ok(texts
            .iter()
            .map(|t| classify_lexicon(&self.model, t, self.mode))
            .collect())
    }
}
