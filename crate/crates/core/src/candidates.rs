//! Removal hypotheses: which groups of tokens get occluded together.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, Sentence, Token};

/// Default upper bound on exhaustive enumeration.
pub const DEFAULT_EXHAUSTIVE_CAP: usize = 20_000;

/// Position of a token in a document. Ordering is document order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenRef {
    pub sentence: usize,
    pub token: usize,
}

impl TokenRef {
    pub fn new(sentence: usize, token: usize) -> Self {
        Self { sentence, token }
    }
}

impl fmt::Display for TokenRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.sentence, self.token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateMode {
    Singleton,
    DependencyPair,
    DependencySubtree,
    Adjacent,
    Exhaustive,
}

impl CandidateMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CandidateMode::Singleton => "singleton",
            CandidateMode::DependencyPair => "dependency_pair",
            CandidateMode::DependencySubtree => "dependency_subtree",
            CandidateMode::Adjacent => "adjacent",
            CandidateMode::Exhaustive => "exhaustive",
        }
    }
}

impl fmt::Display for CandidateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One group of tokens removed together. Members are sorted and distinct.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CandidateSet {
    members: Vec<TokenRef>,
    mode: CandidateMode,
}

impl CandidateSet {
    /// Sorts and deduplicates `members`. Returns `None` when nothing is left.
    pub fn new(mut members: Vec<TokenRef>, mode: CandidateMode) -> Option<Self> {
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            None
        } else {
            Some(Self { members, mode })
        }
    }

    pub fn members(&self) -> &[TokenRef] {
        &self.members
    }

    pub fn mode(&self) -> CandidateMode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, r: TokenRef) -> bool {
        self.members.binary_search(&r).is_ok()
    }
}

/// Which tokens may take part in a candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateFilter {
    pub exclude_upos: BTreeSet<String>,
    pub include_token_ids: Option<BTreeSet<TokenRef>>,
}

impl Default for CandidateFilter {
    fn default() -> Self {
        Self {
            exclude_upos: BTreeSet::from(["PUNCT".to_string()]),
            include_token_ids: None,
        }
    }
}

impl CandidateFilter {
    /// Accepts every token.
    pub fn none() -> Self {
        Self {
            exclude_upos: BTreeSet::new(),
            include_token_ids: None,
        }
    }

    pub fn accepts(&self, sentence: usize, token: &Token) -> bool {
        if self.exclude_upos.contains(&token.upos) {
            return false;
        }
        match &self.include_token_ids {
            Some(allow) => allow.contains(&TokenRef::new(sentence, token.id)),
            None => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CandidateError {
    #[error("mode {mode} cannot produce groups of size {n}")]
    IncompatibleMode { mode: CandidateMode, n: usize },
    #[error("exhaustive enumeration would produce {count} candidates, above the cap of {cap}")]
    CapExceeded { count: u128, cap: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerateOptions {
    pub n: usize,
    pub mode: CandidateMode,
    pub filter: CandidateFilter,
    pub exhaustive_cap: usize,
}

impl GenerateOptions {
    pub fn new(mode: CandidateMode, n: usize) -> Self {
        Self {
            n,
            mode,
            filter: CandidateFilter::default(),
            exhaustive_cap: DEFAULT_EXHAUSTIVE_CAP,
        }
    }

    pub fn with_filter(mut self, filter: CandidateFilter) -> Self {
        self.filter = filter;
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.exhaustive_cap = cap;
        self
    }

    pub fn check(&self) -> Result<(), CandidateError> {
        let ok = match self.mode {
            CandidateMode::Singleton => self.n == 1,
            CandidateMode::DependencyPair => self.n == 2,
            CandidateMode::DependencySubtree => self.n >= 2,
            CandidateMode::Adjacent | CandidateMode::Exhaustive => self.n >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(CandidateError::IncompatibleMode {
                mode: self.mode,
                n: self.n,
            })
        }
    }
}

/// Head/dependent pairs of a sentence, one per non-root token, ordered by
/// dependent id.
pub fn enumerate_edges(sentence_index: usize, sentence: &Sentence) -> Vec<(TokenRef, TokenRef)> {
    sentence
        .tokens()
        .iter()
        .filter(|t| t.head != 0)
        .map(|t| {
            (
                TokenRef::new(sentence_index, t.head),
                TokenRef::new(sentence_index, t.id),
            )
        })
        .collect()
}

/// Enumerates candidates for `doc`. The result is duplicate-free and its
/// order depends only on the inputs.
pub fn generate_candidates(
    doc: &Document,
    opts: &GenerateOptions,
) -> Result<Vec<CandidateSet>, CandidateError> {
    opts.check()?;
    let filter = &opts.filter;
    let passes = |s: usize, id: usize| {
        doc.token(s, id)
            .map(|t| filter.accepts(s, t))
            .unwrap_or(false)
    };
    let mut out = Vec::new();
    match opts.mode {
        CandidateMode::Singleton => {
            for (s, t) in doc.iter_tokens() {
                if filter.accepts(s, t) {
                    out.extend(CandidateSet::new(vec![TokenRef::new(s, t.id)], opts.mode));
                }
            }
        }
        CandidateMode::DependencyPair => {
            for (s, sentence) in doc.sentences().iter().enumerate() {
                for (head, dep) in enumerate_edges(s, sentence) {
                    if passes(s, head.token) && passes(s, dep.token) {
                        out.extend(CandidateSet::new(vec![head, dep], opts.mode));
                    }
                }
            }
        }
        CandidateMode::DependencySubtree => {
            for (s, sentence) in doc.sentences().iter().enumerate() {
                let allowed: Vec<bool> = std::iter::once(false)
                    .chain(sentence.tokens().iter().map(|t| filter.accepts(s, t)))
                    .collect();
                for ids in connected_subsets(sentence, &allowed, opts.n) {
                    let members = ids.into_iter().map(|id| TokenRef::new(s, id)).collect();
                    out.extend(CandidateSet::new(members, opts.mode));
                }
            }
        }
        CandidateMode::Adjacent => {
            for (s, sentence) in doc.sentences().iter().enumerate() {
                let t = sentence.len();
                if t < opts.n {
                    continue;
                }
                for start in 1..=t - opts.n + 1 {
                    let run = start..start + opts.n;
                    if run.clone().all(|id| passes(s, id)) {
                        let members = run.map(|id| TokenRef::new(s, id)).collect();
                        out.extend(CandidateSet::new(members, opts.mode));
                    }
                }
            }
        }
        CandidateMode::Exhaustive => {
            let pool: Vec<TokenRef> = doc
                .iter_tokens()
                .filter(|(s, t)| filter.accepts(*s, t))
                .map(|(s, t)| TokenRef::new(s, t.id))
                .collect();
            let count = binomial(pool.len(), opts.n);
            if count > opts.exhaustive_cap as u128 {
                return Err(CandidateError::CapExceeded {
                    count,
                    cap: opts.exhaustive_cap,
                });
            }
            for_each_combination(pool.len(), opts.n, |idx| {
                let members = idx.iter().map(|&i| pool[i]).collect();
                out.extend(CandidateSet::new(members, opts.mode));
            });
        }
    }
    Ok(out)
}

/// Number of candidates `generate_candidates` would return, without
/// materializing them and without applying the exhaustive cap.
pub fn count_candidates(doc: &Document, opts: &GenerateOptions) -> Result<u128, CandidateError> {
    opts.check()?;
    if opts.mode == CandidateMode::Exhaustive {
        let k = doc
            .iter_tokens()
            .filter(|(s, t)| opts.filter.accepts(*s, t))
            .count();
        return Ok(binomial(k, opts.n));
    }
    generate_candidates(doc, opts).map(|c| c.len() as u128)
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 || k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// All connected sets of `size` allowed tokens in the (undirected) tree,
/// sorted lexicographically. `allowed` is indexed by token id, slot 0 unused.
///
/// Each set is produced once, grown from its smallest member and only ever
/// extended with larger ids that neighbour the set but not its earlier
/// frontier.
fn connected_subsets(sentence: &Sentence, allowed: &[bool], size: usize) -> Vec<Vec<usize>> {
    let t = sentence.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); t + 1];
    for tok in sentence.tokens() {
        if tok.head != 0 && allowed[tok.id] && allowed[tok.head] {
            adj[tok.id].push(tok.head);
            adj[tok.head].push(tok.id);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
    }

    fn extend(
        adj: &[Vec<usize>],
        root: usize,
        size: usize,
        current: &mut Vec<usize>,
        frontier: Vec<usize>,
        in_neigh: &mut Vec<bool>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if current.len() == size {
            let mut set = current.clone();
            set.sort_unstable();
            out.push(set);
            return;
        }
        let mut frontier = frontier;
        while let Some(w) = frontier.pop() {
            // Exclusive neighbours of w: larger than root, not already in or
            // next to the current set.
            let mut added = Vec::new();
            for &u in &adj[w] {
                if u > root && !in_neigh[u] {
                    in_neigh[u] = true;
                    added.push(u);
                }
            }
            let mut next = frontier.clone();
            next.extend(added.iter().copied());
            current.push(w);
            extend(adj, root, size, current, next, in_neigh, out);
            current.pop();
            for u in added {
                in_neigh[u] = false;
            }
        }
    }

    let mut out = Vec::new();
    for root in 1..=t {
        if !allowed[root] {
            continue;
        }
        let mut in_neigh = vec![false; t + 1];
        in_neigh[root] = true;
        let mut frontier = Vec::new();
        for &u in &adj[root] {
            if u > root {
                in_neigh[u] = true;
                frontier.push(u);
            }
        }
        let mut current = vec![root];
        extend(&adj, root, size, &mut current, frontier, &mut in_neigh, &mut out);
    }
    out.sort();
    out
}
