//! Annotated documents and CoNLL-U ingestion.
//!
//! A [`Document`] is a list of dependency-parsed [`Sentence`]s together with
//! a text reconstructed from token surfaces and their `SpaceAfter` flags.
//! Offsets in [`Token::char_span`] are byte offsets into [`Document::text`].

use std::fmt;
use std::ops::Range;

use thiserror::Error;

/// Columns that are carried through parsing untouched so that a document can
/// be written back out.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OpaqueColumns {
    pub lemma: String,
    pub xpos: String,
    pub feats: String,
    pub deps: String,
    pub misc: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// 1-based position within the sentence.
    pub id: usize,
    pub surface: String,
    pub upos: String,
    /// 0 for the root, otherwise the id of the governing token.
    pub head: usize,
    pub deprel: String,
    pub space_after: bool,
    pub char_span: Range<usize>,
    pub extra: OpaqueColumns,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<Token>,
    root_id: usize,
}

impl Sentence {
    /// Builds a sentence, checking id contiguity and the head tree.
    pub fn new(tokens: Vec<Token>) -> Result<Self, TreeDefect> {
        if tokens.is_empty() {
            return Err(TreeDefect::Empty);
        }
        if let Some(bad) = tokens.iter().enumerate().find(|(i, t)| t.id != i + 1) {
            return Err(TreeDefect::NonContiguousIds {
                ids: vec![bad.1.id],
            });
        }
        let heads: Vec<usize> = tokens.iter().map(|t| t.head).collect();
        match validate_heads(&heads) {
            TreeCheck::Valid { root_id } => Ok(Self { tokens, root_id }),
            TreeCheck::Invalid(defect) => Err(defect),
        }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> Option<&Token> {
        id.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    pub fn root_id(&self) -> usize {
        self.root_id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn heads(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.head).collect()
    }

    /// Re-checks the tree invariants.
    pub fn validate(&self) -> TreeCheck {
        validate_heads(&self.heads())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    sentences: Vec<Sentence>,
    text: String,
}

impl Document {
    /// Assembles a document, recomputing the text and every token span.
    pub fn new(mut sentences: Vec<Sentence>) -> Self {
        let mut text = String::new();
        let total: usize = sentences.iter().map(Sentence::len).sum();
        let mut seen = 0;
        for sentence in &mut sentences {
            for token in &mut sentence.tokens {
                let start = text.len();
                text.push_str(&token.surface);
                token.char_span = start..text.len();
                seen += 1;
                if token.space_after && seen < total {
                    text.push(' ');
                }
            }
        }
        Self { sentences, text }
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.token_count() == 0
    }

    /// Tokens in document order with their sentence index.
    pub fn iter_tokens(&self) -> impl Iterator<Item = (usize, &Token)> {
        self.sentences
            .iter()
            .enumerate()
            .flat_map(|(s, sent)| sent.tokens.iter().map(move |t| (s, t)))
    }

    pub fn token(&self, sentence: usize, id: usize) -> Option<&Token> {
        self.sentences.get(sentence).and_then(|s| s.token(id))
    }

    /// Writes the document back out as CoNLL-U.
    pub fn to_conllu(&self) -> String {
        let mut out = String::new();
        for sentence in &self.sentences {
            for t in &sentence.tokens {
                let cols = [
                    t.id.to_string(),
                    t.surface.clone(),
                    or_blank(&t.extra.lemma),
                    or_blank(&t.upos),
                    or_blank(&t.extra.xpos),
                    or_blank(&t.extra.feats),
                    t.head.to_string(),
                    or_blank(&t.deprel),
                    or_blank(&t.extra.deps),
                    misc_for(t),
                ];
                out.push_str(&cols.join("\t"));
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}

fn or_blank(s: &str) -> String {
    if s.is_empty() {
        "_".to_string()
    } else {
        s.to_string()
    }
}

// The MISC column is preserved verbatim, but if a token was built by hand its
// flag may disagree with what was parsed; the flag wins.
fn misc_for(t: &Token) -> String {
    let parsed = space_after_from_misc(&t.extra.misc);
    if parsed == t.space_after {
        return or_blank(&t.extra.misc);
    }
    if t.space_after {
        let rest: Vec<&str> = misc_items(&t.extra.misc)
            .filter(|item| *item != "SpaceAfter=No")
            .collect();
        if rest.is_empty() {
            "_".to_string()
        } else {
            rest.join("|")
        }
    } else {
        let mut items: Vec<&str> = misc_items(&t.extra.misc).collect();
        items.push("SpaceAfter=No");
        items.join("|")
    }
}

fn misc_items(misc: &str) -> impl Iterator<Item = &str> {
    misc.split('|').filter(|s| !s.is_empty() && *s != "_")
}

fn space_after_from_misc(misc: &str) -> bool {
    !misc_items(misc).any(|item| item == "SpaceAfter=No")
}

/// Outcome of checking a head array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeCheck {
    Valid { root_id: usize },
    Invalid(TreeDefect),
}

impl TreeCheck {
    pub fn is_valid(&self) -> bool {
        matches!(self, TreeCheck::Valid { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeDefect {
    #[error("sentence has no tokens")]
    Empty,
    #[error("token ids are not contiguous from 1 (at id {ids:?})")]
    NonContiguousIds { ids: Vec<usize> },
    #[error("head out of range for tokens {ids:?}")]
    HeadOutOfRange { ids: Vec<usize> },
    #[error("tokens {ids:?} are their own head")]
    SelfLoop { ids: Vec<usize> },
    #[error("no root token (head = 0)")]
    NoRoot { cycle: Vec<usize> },
    #[error("multiple roots {ids:?}")]
    MultipleRoots { ids: Vec<usize> },
    #[error("cycle through tokens {ids:?}")]
    Cycle { ids: Vec<usize> },
}

impl TreeDefect {
    /// Token ids implicated in the defect.
    pub fn offending_ids(&self) -> &[usize] {
        match self {
            TreeDefect::Empty => &[],
            TreeDefect::NoRoot { cycle: ids }
            | TreeDefect::NonContiguousIds { ids }
            | TreeDefect::HeadOutOfRange { ids }
            | TreeDefect::SelfLoop { ids }
            | TreeDefect::MultipleRoots { ids }
            | TreeDefect::Cycle { ids } => ids,
        }
    }
}

/// Validates a head array where `heads[i]` is the head of token `i + 1`.
///
/// A valid array has every head in `0..=T`, no self loops, exactly one zero,
/// and no cycles. Those conditions together imply every token reaches the
/// root.
pub fn validate_heads(heads: &[usize]) -> TreeCheck {
    let n = heads.len();
    if n == 0 {
        return TreeCheck::Invalid(TreeDefect::Empty);
    }
    let ids = |pred: &dyn Fn(usize, usize) -> bool| -> Vec<usize> {
        heads
            .iter()
            .enumerate()
            .filter(|&(i, &h)| pred(i + 1, h))
            .map(|(i, _)| i + 1)
            .collect()
    };

    let out_of_range = ids(&|_, h| h > n);
    if !out_of_range.is_empty() {
        return TreeCheck::Invalid(TreeDefect::HeadOutOfRange { ids: out_of_range });
    }
    let self_loops = ids(&|id, h| id == h);
    if !self_loops.is_empty() {
        return TreeCheck::Invalid(TreeDefect::SelfLoop { ids: self_loops });
    }

    let cycle = find_cycle(heads);
    let roots = ids(&|_, h| h == 0);
    match roots.len() {
        0 => TreeCheck::Invalid(TreeDefect::NoRoot {
            cycle: cycle.unwrap_or_default(),
        }),
        1 => match cycle {
            Some(ids) => TreeCheck::Invalid(TreeDefect::Cycle { ids }),
            None => TreeCheck::Valid { root_id: roots[0] },
        },
        _ => TreeCheck::Invalid(TreeDefect::MultipleRoots { ids: roots }),
    }
}

// Returns the members of the first cycle found, sorted. Heads must be in range.
fn find_cycle(heads: &[usize]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Fresh,
        OnPath,
        Done,
    }
    let mut mark = vec![Mark::Fresh; heads.len() + 1];
    for start in 1..=heads.len() {
        if mark[start] != Mark::Fresh {
            continue;
        }
        let mut path = Vec::new();
        let mut cur = start;
        while cur != 0 && mark[cur] == Mark::Fresh {
            mark[cur] = Mark::OnPath;
            path.push(cur);
            cur = heads[cur - 1];
        }
        if cur != 0 && mark[cur] == Mark::OnPath {
            let pos = path.iter().position(|&p| p == cur).unwrap_or(0);
            let mut cycle = path[pos..].to_vec();
            cycle.sort_unstable();
            return Some(cycle);
        }
        for p in path {
            mark[p] = Mark::Done;
        }
    }
    None
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sentence {sentence} (starting at line {line}): {defect}")]
    Tree {
        sentence: usize,
        line: usize,
        defect: TreeDefect,
    },
    #[error("reading input: {0}")]
    Io(#[from] std::io::Error),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.id, self.surface)
    }
}

/// Parses CoNLL-U text into a document.
///
/// Multiword-token ranges (`3-4`) and empty nodes (`5.1`) are skipped.
/// Sentences are numbered from 0 in error messages.
pub fn parse_conllu(input: &str) -> Result<Document, CorpusError> {
    let mut sentences = Vec::new();
    let mut pending: Vec<Token> = Vec::new();
    let mut block_start = 1;

    let mut flush = |pending: &mut Vec<Token>, start: usize| -> Result<(), CorpusError> {
        if pending.is_empty() {
            return Ok(());
        }
        let tokens = std::mem::take(pending);
        let sentence = Sentence::new(tokens).map_err(|defect| CorpusError::Tree {
            sentence: sentences.len(),
            line: start,
            defect,
        })?;
        sentences.push(sentence);
        Ok(())
    };

    for (idx, raw) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            flush(&mut pending, block_start)?;
            continue;
        }
        if pending.is_empty() {
            block_start = line_no;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(CorpusError::Parse {
                line: line_no,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id_col = cols[0];
        if id_col.contains('-') || id_col.contains('.') {
            continue;
        }
        let id: usize = id_col.parse().map_err(|_| CorpusError::Parse {
            line: line_no,
            message: format!("token id {id_col:?} is not an integer"),
        })?;
        let head: usize = cols[6].parse().map_err(|_| CorpusError::Parse {
            line: line_no,
            message: format!("head {:?} is not an integer", cols[6]),
        })?;
        if cols[1].is_empty() {
            return Err(CorpusError::Parse {
                line: line_no,
                message: "empty FORM column".to_string(),
            });
        }
        let misc = blank_to_empty(cols[9]);
        pending.push(Token {
            id,
            surface: cols[1].to_string(),
            upos: blank_to_empty(cols[3]),
            head,
            deprel: blank_to_empty(cols[7]),
            space_after: space_after_from_misc(&misc),
            char_span: 0..0,
            extra: OpaqueColumns {
                lemma: blank_to_empty(cols[2]),
                xpos: blank_to_empty(cols[4]),
                feats: blank_to_empty(cols[5]),
                deps: blank_to_empty(cols[8]),
                misc,
            },
        });
    }
    flush(&mut pending, block_start)?;
    Ok(Document::new(sentences))
}

fn blank_to_empty(col: &str) -> String {
    if col == "_" {
        String::new()
    } else {
        col.to_string()
    }
}

/// Convenience wrapper reading all of `reader` before parsing.
pub fn read_conllu<R: std::io::Read>(mut reader: R) -> Result<Document, CorpusError> {
    let mut buf = String::new();
    reader.read_to_string(&mut buf)?;
    parse_conllu(&buf)
}
