use serde::{Deserialize, Serialize};

use crate::backends::ScoreMode;
use crate::candidates::CandidateMode;
use crate::scoring::InfluenceReport;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub schema_version: String,
    pub backend: String,
    pub baseline: BaselineJson,
    pub target_class: usize,
    pub options: OptionsJson,
    pub candidates: Vec<CandidateJson>,
    pub tokens: Vec<TokenJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineJson {
    pub labels: Vec<String>,
    pub scores: Vec<f64>,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionsJson {
    pub mode: CandidateMode,
    pub n: usize,
    pub score_mode: ScoreMode,
    pub filter: FilterJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterJson {
    pub exclude_upos: Vec<String>,
    pub include_token_ids: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateJson {
    /// `[sentence, token id]` pairs.
    pub members: Vec<[usize; 2]>,
    pub delta: f64,
    pub occluded_strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenJson {
    pub sent: usize,
    pub id: usize,
    pub surface: String,
    /// Aggregated delta; `null` when no positive candidate contained the token.
    pub raw: Option<f64>,
    pub weight: f64,
}

impl ReportJson {
    pub fn from_report(report: &InfluenceReport) -> Self {
        let filter = &report.options.filter;
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            backend: report.backend.clone(),
            baseline: BaselineJson {
                labels: report.baseline.labels.clone(),
                scores: report.baseline.scores.clone(),
                predicted: report.baseline.predicted,
            },
            target_class: report.target_class,
            options: OptionsJson {
                mode: report.options.mode,
                n: report.options.n,
                score_mode: report.options.score_mode,
                filter: FilterJson {
                    exclude_upos: filter.exclude_upos.iter().cloned().collect(),
                    include_token_ids: filter
                        .include_token_ids
                        .as_ref()
                        .map(|ids| ids.iter().map(|r| [r.sentence, r.token]).collect()),
                },
            },
            candidates: report
                .candidate_scores
                .iter()
                .map(|s| CandidateJson {
                    members: s
                        .candidate
                        .members()
                        .iter()
                        .map(|r| [r.sentence, r.token])
                        .collect(),
                    delta: s.delta,
                    occluded_strength: s.occluded_strength,
                })
                .collect(),
            tokens: report
                .tokens
                .iter()
                .map(|t| TokenJson {
                    sent: t.token.sentence,
                    id: t.token.token,
                    surface: t.surface.clone(),
                    raw: report.token_scores.get(&t.token).copied(),
                    weight: report.weight(t.token),
                })
                .collect(),
        }
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn export_json(report: &InfluenceReport) -> String {
    ReportJson::from_report(report).to_json_string()
}

pub fn parse_report_json(input: &str) -> Result<ReportJson, serde_json::Error> {
    serde_json::from_str(input)
}
