use std::fmt::Write;

use super::{check_belongs, separator, RenderError};
use crate::candidates::TokenRef;
use crate::corpus::Document;
use crate::scoring::InfluenceReport;

/// Colour reached at weight 1. Lower weights blend towards white.
pub const HIGHLIGHT_RGB: (u8, u8, u8) = (214, 39, 40);

/// Opacity of the highlight for a weight; the ramp is linear.
pub fn html_intensity(weight: f64) -> f64 {
    if weight.is_nan() {
        0.0
    } else {
        weight.clamp(0.0, 1.0)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Renders a self-contained HTML page with one highlighted span per token.
pub fn render_html(doc: &Document, report: &InfluenceReport) -> Result<String, RenderError> {
    check_belongs(doc, report)?;
    let (r, g, b) = HIGHLIGHT_RGB;
    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    out.push_str("<title>Token influence heatmap</title>\n<style>\n");
    out.push_str("body { font-family: Georgia, serif; background: #ffffff; color: #111111; margin: 2em; }\n");
    out.push_str("header { font-family: sans-serif; font-size: 0.9em; color: #444444; margin-bottom: 1.5em; }\n");
    out.push_str(".text { line-height: 2; font-size: 1.1em; }\n");
    out.push_str(".tok { padding: 0.1em 0.15em; border-radius: 0.2em; }\n");
    out.push_str("</style>\n</head>\n<body>\n<header>\n");
    let _ = writeln!(
        out,
        "<div>predicted: <b>{}</b></div>",
        escape(report.baseline.predicted_label())
    );
    let _ = writeln!(out, "<div>target: {}</div>", escape(report.target_label()));
    let _ = writeln!(
        out,
        "<div>baseline strength: {} ({})</div>",
        report.baseline_strength(),
        report.options.score_mode
    );
    let _ = writeln!(
        out,
        "<div>mode: {} | n: {}</div>",
        report.options.mode, report.options.n
    );
    out.push_str("</header>\n<div class=\"text\">");

    let total = doc.token_count();
    for (i, (s, token)) in doc.iter_tokens().enumerate() {
        let w = report.weight(TokenRef::new(s, token.id));
        let _ = write!(
            out,
            "<span class=\"tok\" data-sent=\"{s}\" data-id=\"{}\" data-weight=\"{w}\" title=\"weight {w}\" style=\"background-color: rgba({r}, {g}, {b}, {})\">{}</span>{}",
            token.id,
            html_intensity(w),
            escape(&token.surface),
            separator(token.space_after, i, total)
        );
    }
    out.push_str("</div>\n</body>\n</html>\n");
    Ok(out)
}
