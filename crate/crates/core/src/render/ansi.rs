use std::fmt::Write;

use super::{check_belongs, separator, RenderError};
use crate::candidates::TokenRef;
use crate::corpus::Document;
use crate::scoring::InfluenceReport;

/// 256-colour background codes for buckets 1 to 4. Bucket 1 (weight 0) is
/// printed without escapes.
pub const BUCKET_COLORS: [Option<u8>; 4] = [None, Some(229), Some(215), Some(196)];

/// Buckets: 1 for 0, 2 for (0, 1/3], 3 for (1/3, 2/3], 4 for (2/3, 1].
pub fn heat_bucket(weight: f64) -> u8 {
    if weight.is_nan() || weight <= 0.0 {
        1
    } else if weight <= 1.0 / 3.0 {
        2
    } else if weight <= 2.0 / 3.0 {
        3
    } else {
        4
    }
}

fn paint(out: &mut String, bucket: u8, text: &str) {
    match BUCKET_COLORS[(bucket - 1) as usize] {
        Some(code) => {
            let _ = write!(out, "\x1b[30;48;5;{code}m{text}\x1b[0m");
        }
        None => out.push_str(text),
    }
}

/// Renders the document with background colours per weight bucket, after a
/// one-line legend.
pub fn render_ansi(doc: &Document, report: &InfluenceReport) -> Result<String, RenderError> {
    check_belongs(doc, report)?;
    let mut out = String::from("legend:");
    for (bucket, label) in [(1, "0"), (2, "<=1/3"), (3, "<=2/3"), (4, "<=1")] {
        out.push(' ');
        paint(&mut out, bucket, &format!(" {label} "));
    }
    out.push('\n');
    let total = doc.token_count();
    for (i, (s, token)) in doc.iter_tokens().enumerate() {
        let w = report.weight(TokenRef::new(s, token.id));
        paint(&mut out, heat_bucket(w), &token.surface);
        out.push_str(separator(token.space_after, i, total));
    }
    out.push('\n');
    Ok(out)
}
