//! Heatmap output: standalone HTML, ANSI terminal text and a JSON report.

mod ansi;
mod html;
mod json;

use thiserror::Error;

use crate::candidates::TokenRef;
use crate::corpus::Document;
use crate::scoring::InfluenceReport;

pub use ansi::{heat_bucket, render_ansi, BUCKET_COLORS};
pub use html::{html_intensity, render_html, HIGHLIGHT_RGB};
pub use json::{export_json, parse_report_json, BaselineJson, CandidateJson, FilterJson, OptionsJson, ReportJson, TokenJson, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("report refers to token {0}, which is not in the document")]
    UnknownToken(TokenRef),
}

/// Every weighted token must exist in `doc`.
pub(crate) fn check_belongs(doc: &Document, report: &InfluenceReport) -> Result<(), RenderError> {
    for r in report.token_weights.keys().chain(report.token_scores.keys()) {
        if doc.token(r.sentence, r.token).is_none() {
            return Err(RenderError::UnknownToken(*r));
        }
    }
    Ok(())
}

/// Separator emitted after the `index`-th of `total` tokens.
pub(crate) fn separator(space_after: bool, index: usize, total: usize) -> &'static str {
    if space_after && index + 1 < total {
        " "
    } else {
        ""
    }
}
