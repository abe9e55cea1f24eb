//! Leave-n-out occlusion explanations for black-box text classifiers.
//!
//! A CoNLL-U document is turned into candidate token groups (single tokens,
//! dependency-connected pairs or subtrees, adjacent runs, or every n-subset),
//! each group is deleted from the text, and the drop in the target class
//! score is attributed back to the removed tokens. Token scores are the
//! maximum positive drop over the groups that contain them, normalized to
//! `[0, 1]` and rendered as a heatmap.
//!
//! ```
//! use std::sync::Arc;
//! use lno::backends::{Backend, LexiconClassifier, LexiconModel, ScoreMode};
//! use lno::corpus::parse_conllu;
//! use lno::scoring::{explain, ExplainOptions};
//!
//! let doc = parse_conllu(
//!     "1\tbad\t_\tADJ\t_\t_\t2\tamod\t_\t_\n2\tacting\t_\tNOUN\t_\t_\t0\troot\t_\t_\n",
//! ).unwrap();
//! let model = LexiconModel::new(vec!["neg".into(), "pos".into()])
//!     .with_weight("bad", vec![3.0, 0.0]).unwrap();
//! let backend = Backend::new(Arc::new(LexiconClassifier::new(model, ScoreMode::Logit)));
//! let report = explain(&doc, &backend, &ExplainOptions::lno(2)).unwrap();
//! assert_eq!(report.token_weights.len(), 2);
//! ```

pub mod backends;
pub mod candidates;
pub mod cli;
pub mod corpus;
pub mod occlusion;
pub mod render;
pub mod scoring;

pub use candidates::{CandidateFilter, CandidateMode, CandidateSet, TokenRef};
pub use corpus::{parse_conllu, Document, Sentence, Token};
pub use scoring::{explain, ExplainOptions, InfluenceReport};
