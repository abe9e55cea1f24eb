//! Rebuilding document text with candidate tokens removed.

use thiserror::Error;

use crate::candidates::{CandidateSet, TokenRef};
use crate::corpus::Document;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OcclusionError {
    #[error("token {0} does not exist in the document")]
    Dangling(TokenRef),
    #[error("candidate {index}: token {token} does not exist in the document")]
    DanglingInBatch { index: usize, token: TokenRef },
}

/// How removed tokens are rendered in the occluded text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Occluder {
    /// When set, each removed token is replaced by this string instead of
    /// being deleted.
    pub replacement: Option<String>,
}

impl Occluder {
    pub fn deleting() -> Self {
        Self::default()
    }

    pub fn replacing(with: impl Into<String>) -> Self {
        Self {
            replacement: Some(with.into()),
        }
    }

    /// Text of `doc` with the members of `candidate` removed.
    ///
    /// Surviving tokens are joined in document order. Two neighbouring
    /// survivors are separated by one space when the left one, or any removed
    /// token between them, had `space_after` set. Nothing is emitted before
    /// the first or after the last survivor.
    pub fn occlude(&self, doc: &Document, candidate: &CandidateSet) -> Result<String, OcclusionError> {
        self.occlude_tokens(doc, candidate.members())
    }

    /// As [`Occluder::occlude`] for an arbitrary, possibly empty, token list.
    pub fn occlude_tokens(&self, doc: &Document, removed: &[TokenRef]) -> Result<String, OcclusionError> {
        let mut sorted = removed.to_vec();
        sorted.sort_unstable();
        for &r in &sorted {
            if doc.token(r.sentence, r.token).is_none() {
                return Err(OcclusionError::Dangling(r));
            }
        }
        let mut out = String::with_capacity(doc.text().len());
        let mut gap_space = false;
        let mut any = false;
        for (s, token) in doc.iter_tokens() {
            let removed = sorted.binary_search(&TokenRef::new(s, token.id)).is_ok();
            let surface = match (&self.replacement, removed) {
                (_, false) => Some(token.surface.as_str()),
                (Some(rep), true) => Some(rep.as_str()),
                (None, true) => None,
            };
            match surface {
                Some(text) => {
                    if any && gap_space {
                        out.push(' ');
                    }
                    out.push_str(text);
                    any = true;
                    gap_space = token.space_after;
                }
                None => gap_space |= token.space_after,
            }
        }
        Ok(out)
    }

    /// Occludes every candidate, preserving order.
    pub fn occlude_batch(
        &self,
        doc: &Document,
        candidates: &[CandidateSet],
    ) -> Result<Vec<(CandidateSet, String)>, OcclusionError> {
        candidates
            .iter()
            .enumerate()
            .map(|(index, c)| match self.occlude(doc, c) {
                Ok(text) => Ok((c.clone(), text)),
                Err(OcclusionError::Dangling(token)) => {
                    Err(OcclusionError::DanglingInBatch { index, token })
                }
                Err(e) => Err(e),
            })
            .collect()
    }
}

/// Deletes the members of `candidate` from `doc`.
pub fn occlude(doc: &Document, candidate: &CandidateSet) -> Result<String, OcclusionError> {
    Occluder::deleting().occlude(doc, candidate)
}

pub fn occlude_batch(
    doc: &Document,
    candidates: &[CandidateSet],
) -> Result<Vec<(CandidateSet, String)>, OcclusionError> {
    Occluder::deleting().occlude_batch(doc, candidates)
}

/// Full text of the document, i.e. occlusion of nothing.
pub fn reconstruct(doc: &Document) -> String {
    Occluder::deleting()
        .occlude_tokens(doc, &[])
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::CandidateMode;
    use crate::corpus::parse_conllu;

    fn abc() -> Document {
        parse_conllu(
            "1\ta\t_\tX\t_\t_\t2\td\t_\t_\n2\tb\t_\tX\t_\t_\t0\troot\t_\t_\n3\tc\t_\tX\t_\t_\t2\td\t_\t_\n",
        )
        .unwrap()
    }

    fn cand(ids: &[usize]) -> CandidateSet {
        CandidateSet::new(
            ids.iter().map(|&i| TokenRef::new(0, i)).collect(),
            CandidateMode::Exhaustive,
        )
        .unwrap()
    }

    #[test]
    fn single_and_boundary_removals() {
        let doc = abc();
        assert_eq!(occlude(&doc, &cand(&[2])).unwrap(), "a c");
        assert_eq!(occlude(&doc, &cand(&[1, 3])).unwrap(), "b");
        assert_eq!(occlude(&doc, &cand(&[1])).unwrap(), "b c");
        assert_eq!(occlude(&doc, &cand(&[1, 2, 3])).unwrap(), "");
    }

    #[test]
    fn punctuation_removal_keeps_one_space() {
        let doc = parse_conllu(
            "1\tgood\t_\tADJ\t_\t_\t0\troot\t_\tSpaceAfter=No\n2\t,\t_\tPUNCT\t_\t_\t1\tpunct\t_\t_\n3\tbad\t_\tADJ\t_\t_\t1\tconj\t_\t_\n",
        )
        .unwrap();
        assert_eq!(doc.text(), "good, bad");
        assert_eq!(occlude(&doc, &cand(&[2])).unwrap(), "good bad");
        assert_eq!(occlude(&doc, &cand(&[1])).unwrap(), ", bad");
        assert_eq!(occlude(&doc, &cand(&[3])).unwrap(), "good,");
    }

    #[test]
    fn removal_between_glued_tokens_stays_glued() {
        let doc = parse_conllu(
            "1\t(\t_\tPUNCT\t_\t_\t2\tpunct\t_\tSpaceAfter=No\n2\tgreat\t_\tADJ\t_\t_\t0\troot\t_\tSpaceAfter=No\n3\t)\t_\tPUNCT\t_\t_\t2\tpunct\t_\t_\n",
        )
        .unwrap();
        assert_eq!(occlude(&doc, &cand(&[2])).unwrap(), "()");
    }

    #[test]
    fn batch_preserves_order() {
        let doc = abc();
        assert!(occlude_batch(&doc, &[]).unwrap().is_empty());
        let texts: Vec<String> = occlude_batch(&doc, &[cand(&[1]), cand(&[2])])
            .unwrap()
            .into_iter()
            .map(|(_, t)| t)
            .collect();
        assert_eq!(texts, ["b c", "a c"]);
        let texts: Vec<String> = occlude_batch(&doc, &[cand(&[1, 2]), cand(&[1, 3]), cand(&[2, 3])])
            .unwrap()
            .into_iter()
            .map(|(_, t)| t)
            .collect();
        assert_eq!(texts, ["c", "b", "a"]);
    }

    #[test]
    fn dangling_reference_is_reported() {
        let doc = abc();
        assert_eq!(
            occlude(&doc, &cand(&[4])),
            Err(OcclusionError::Dangling(TokenRef::new(0, 4)))
        );
        assert_eq!(
            occlude_batch(&doc, &[cand(&[1]), cand(&[9])]).unwrap_err(),
            OcclusionError::DanglingInBatch {
                index: 1,
                token: TokenRef::new(0, 9)
            }
        );
    }

    #[test]
    fn replacement_masks_in_place() {
        let doc = abc();
        let masker = Occluder::replacing("[MASK]");
        assert_eq!(masker.occlude(&doc, &cand(&[2])).unwrap(), "a [MASK] c");
        assert_eq!(masker.occlude(&doc, &cand(&[1, 3])).unwrap(), "[MASK] b [MASK]");
    }

    #[test]
    fn reconstruct_matches_document_text() {
        let doc = abc();
        assert_eq!(reconstruct(&doc), doc.text());
    }
}
