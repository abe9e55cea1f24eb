//! Influence scoring.
//!
//! The pipeline: classify the full text (baseline), occlude each candidate,
//! classify the occluded texts, take `delta = baseline - occluded` on a fixed
//! target class, drop candidates with `delta <= 0`, give each token the
//! largest delta among the candidates containing it, and divide by the
//! overall maximum.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::backends::{Backend, BackendError, Classification, ClassifyFailure, ScoreMode};
use crate::candidates::{
    generate_candidates, CandidateError, CandidateFilter, CandidateMode, CandidateSet,
    GenerateOptions, TokenRef, DEFAULT_EXHAUSTIVE_CAP,
};
use crate::corpus::Document;
use crate::occlusion::{OcclusionError, Occluder};

/// Which output neuron to explain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetClass {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub candidate: CandidateSet,
    pub occluded_strength: f64,
    pub delta: f64,
}

/// A token's surface as it appeared in the explained document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenEntry {
    pub token: TokenRef,
    pub surface: String,
}

/// The options a report was produced with.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub mode: CandidateMode,
    pub n: usize,
    pub score_mode: ScoreMode,
    pub filter: CandidateFilter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceReport {
    pub backend: String,
    pub baseline: Classification,
    pub target_class: usize,
    /// Sorted by descending delta, ties by member position.
    pub candidate_scores: Vec<CandidateScore>,
    /// Max-aggregated positive deltas.
    pub token_scores: BTreeMap<TokenRef, f64>,
    pub token_weights: BTreeMap<TokenRef, f64>,
    /// Every document token in order.
    pub tokens: Vec<TokenEntry>,
    pub options: ReportOptions,
}

impl InfluenceReport {
    pub fn weight(&self, token: TokenRef) -> f64 {
        self.token_weights.get(&token).copied().unwrap_or(0.0)
    }

    pub fn target_label(&self) -> &str {
        &self.baseline.labels[self.target_class]
    }

    pub fn baseline_strength(&self) -> f64 {
        self.baseline.scores[self.target_class]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Baseline,
    Candidates,
    Occlusion,
    Scoring,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Baseline => "baseline",
            Stage::Candidates => "candidate generation",
            Stage::Occlusion => "occlusion",
            Stage::Scoring => "candidate scoring",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExplainError {
    #[error("nothing to explain: the document has no tokens")]
    EmptyDocument,
    #[error("unknown target class {0:?}")]
    UnknownTarget(String),
    #[error("no candidates to score")]
    NoCandidates,
    #[error("{stage}: {source}")]
    Backend {
        stage: Stage,
        #[source]
        source: BackendError,
    },
    #[error("{stage}: candidate {index}: {source}")]
    CandidateBackend {
        stage: Stage,
        index: usize,
        #[source]
        source: BackendError,
    },
    #[error("candidate generation: {0}")]
    Candidates(#[from] CandidateError),
    #[error("occlusion: {0}")]
    Occlusion(#[from] OcclusionError),
}

impl ExplainError {
    pub fn stage(&self) -> Stage {
        match self {
            ExplainError::EmptyDocument | ExplainError::UnknownTarget(_) => Stage::Baseline,
            ExplainError::Backend { stage, .. } | ExplainError::CandidateBackend { stage, .. } => *stage,
            ExplainError::Candidates(_) => Stage::Candidates,
            ExplainError::Occlusion(_) => Stage::Occlusion,
            ExplainError::NoCandidates => Stage::Scoring,
        }
    }
}

/// Classifies the full text and fixes the target class.
pub fn compute_baseline(
    doc: &Document,
    backend: &Backend,
    target: Option<&TargetClass>,
) -> Result<(Classification, usize), ExplainError> {
    if doc.is_empty() {
        return Err(ExplainError::EmptyDocument);
    }
    let baseline = backend
        .classify(&[doc.text().to_string()])
        .map_err(|f| ExplainError::Backend {
            stage: Stage::Baseline,
            source: f.error,
        })?
        .pop()
        .expect("one reply per text");
    let target_class = match target {
        None => baseline.predicted,
        Some(TargetClass::Index(i)) if *i < baseline.labels.len() => *i,
        Some(TargetClass::Index(i)) => return Err(ExplainError::UnknownTarget(i.to_string())),
        Some(TargetClass::Name(name)) => baseline
            .label_index(name)
            .ok_or_else(|| ExplainError::UnknownTarget(name.clone()))?,
    };
    Ok((baseline, target_class))
}

/// Total order used for candidate lists: larger delta first, then member
/// positions, then mode.
pub fn compare_scores(a: &CandidateScore, b: &CandidateScore) -> Ordering {
    b.delta
        .total_cmp(&a.delta)
        .then_with(|| a.candidate.members().cmp(b.candidate.members()))
        .then_with(|| a.candidate.mode().cmp(&b.candidate.mode()))
}

/// Scores every candidate against the baseline on `target_class`.
pub fn score_candidates(
    doc: &Document,
    candidates: &[CandidateSet],
    backend: &Backend,
    baseline: &Classification,
    target_class: usize,
) -> Result<Vec<CandidateScore>, ExplainError> {
    score_candidates_with(doc, candidates, backend, baseline, target_class, &Occluder::deleting())
}

pub fn score_candidates_with(
    doc: &Document,
    candidates: &[CandidateSet],
    backend: &Backend,
    baseline: &Classification,
    target_class: usize,
    occluder: &Occluder,
) -> Result<Vec<CandidateScore>, ExplainError> {
    if candidates.is_empty() {
        return Err(ExplainError::NoCandidates);
    }
    let occluded = occluder.occlude_batch(doc, candidates)?;
    let texts: Vec<String> = occluded.iter().map(|(_, t)| t.clone()).collect();
    let replies = backend
        .classify(&texts)
        .map_err(|ClassifyFailure { index, error }| ExplainError::CandidateBackend {
            stage: Stage::Scoring,
            index,
            source: error,
        })?;
    let base = baseline.scores[target_class];
    let mut scores: Vec<CandidateScore> = occluded
        .into_iter()
        .zip(replies)
        .map(|((candidate, _), reply)| {
            let occluded_strength = reply.scores[target_class];
            CandidateScore {
                candidate,
                occluded_strength,
                delta: base - occluded_strength,
            }
        })
        .collect();
    scores.sort_by(compare_scores);
    Ok(scores)
}

/// Per-token maximum over candidates with positive delta. Tokens only seen
/// in non-positive candidates are absent.
pub fn aggregate_tokens(scores: &[CandidateScore]) -> BTreeMap<TokenRef, f64> {
    let mut out: BTreeMap<TokenRef, f64> = BTreeMap::new();
    for s in scores.iter().filter(|s| s.delta > 0.0) {
        for &member in s.candidate.members() {
            out.entry(member)
                .and_modify(|v| *v = v.max(s.delta))
                .or_insert(s.delta);
        }
    }
    out
}

/// Divides every value by the largest one.
pub fn normalize(raw: &BTreeMap<TokenRef, f64>) -> BTreeMap<TokenRef, f64> {
    let max = raw.values().copied().fold(f64::NEG_INFINITY, f64::max);
    raw.iter().map(|(&k, &v)| (k, v / max)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainOptions {
    pub n: usize,
    pub mode: CandidateMode,
    pub filter: CandidateFilter,
    pub target: Option<TargetClass>,
    pub exhaustive_cap: usize,
    pub occluder: Occluder,
}

impl ExplainOptions {
    pub fn new(mode: CandidateMode, n: usize) -> Self {
        Self {
            n,
            mode,
            filter: CandidateFilter::default(),
            target: None,
            exhaustive_cap: DEFAULT_EXHAUSTIVE_CAP,
            occluder: Occluder::deleting(),
        }
    }

    /// Leave-one-out.
    pub fn loo() -> Self {
        Self::new(CandidateMode::Singleton, 1)
    }

    /// Leave-n-out over dependency edges (n = 2) or connected subtrees.
    pub fn lno(n: usize) -> Self {
        let mode = if n <= 2 {
            CandidateMode::DependencyPair
        } else {
            CandidateMode::DependencySubtree
        };
        Self::new(mode, n)
    }

    pub fn with_filter(mut self, filter: CandidateFilter) -> Self {
        self.filter = filter;
        self
    }

    pub fn with_target(mut self, target: TargetClass) -> Self {
        self.target = Some(target);
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.exhaustive_cap = cap;
        self
    }

    fn generate_options(&self) -> GenerateOptions {
        GenerateOptions::new(self.mode, self.n)
            .with_filter(self.filter.clone())
            .with_cap(self.exhaustive_cap)
    }
}

/// Runs the whole pipeline. A document where no token passes the filter
/// yields a report with no candidates and no weights.
pub fn explain(
    doc: &Document,
    backend: &Backend,
    options: &ExplainOptions,
) -> Result<InfluenceReport, ExplainError> {
    let gen = options.generate_options();
    gen.check()?;
    let (baseline, target_class) = compute_baseline(doc, backend, options.target.as_ref())?;
    let candidates = generate_candidates(doc, &gen)?;
    let candidate_scores = if candidates.is_empty() {
        Vec::new()
    } else {
        score_candidates_with(
            doc,
            &candidates,
            backend,
            &baseline,
            target_class,
            &options.occluder,
        )?
    };
    let token_scores = aggregate_tokens(&candidate_scores);
    let token_weights = normalize(&token_scores);
    let tokens = doc
        .iter_tokens()
        .map(|(s, t)| TokenEntry {
            token: TokenRef::new(s, t.id),
            surface: t.surface.clone(),
        })
        .collect();
    Ok(InfluenceReport {
        backend: backend.identity(),
        baseline,
        target_class,
        candidate_scores,
        token_scores,
        token_weights,
        tokens,
        options: ReportOptions {
            mode: options.mode,
            n: options.n,
            score_mode: backend.score_mode(),
            filter: options.filter.clone(),
        },
    })
}
