//! Text to concept linking by greedy leftmost-longest token-window matching.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{KesError, Result};
use crate::kg_store::{ConceptId, KnowledgeGraph};

/// Default window cap for multiword concept matches.
pub const DEFAULT_MAX_LINK_LEN: usize = 4;

const DEFAULT_STOPLIST: &str = include_str!("../data/stoplist.txt");

/// Lowercased surface tokens; never contains an empty token.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    tokens: Vec<String>,
}

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl<S: AsRef<str>> FromIterator<S> for TokenSequence {
    /// Builds a sequence from pre-split tokens, lowercasing them and dropping
    /// empty ones.
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSequence {
            tokens: iter
                .into_iter()
                .map(|t| t.as_ref().to_lowercase())
                .filter(|t| !t.is_empty())
                .collect(),
        }
    }
}

/// Lowercases, splits on whitespace and strips leading/trailing punctuation
/// from each token. Intra-token punctuation such as hyphens is kept.
pub fn tokenize(text: &str) -> TokenSequence {
    let tokens = text
        .split_whitespace()
        .map(|raw| raw.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    TokenSequence { tokens }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mention {
    /// Token span `[start, end)`.
    pub start: usize,
    pub end: usize,
    pub concept: ConceptId,
}

/// Non-overlapping mentions in left-to-right order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MentionSet {
    mentions: Vec<Mention>,
}

impl MentionSet {
    pub fn mentions(&self) -> &[Mention] {
        &self.mentions
    }

    pub fn is_empty(&self) -> bool {
        self.mentions.is_empty()
    }

    /// Distinct linked concepts.
    pub fn concepts(&self) -> BTreeSet<ConceptId> {
        self.mentions.iter().map(|m| m.concept).collect()
    }
}

/// Tokens excluded from single-token matches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopList {
    words: HashSet<String>,
}

impl Default for StopList {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPLIST)
    }
}

impl StopList {
    pub fn empty() -> Self {
        StopList {
            words: HashSet::new(),
        }
    }

    /// One token per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        StopList { words }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| KesError::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Sorted words joined by newlines; equal lists give equal fingerprints.
    pub fn fingerprint(&self) -> String {
        let mut words: Vec<&str> = self.words.iter().map(String::as_str).collect();
        words.sort_unstable();
        words.join("\n")
    }
}

/// Greedy left-to-right longest match over token windows of at most
/// `max_len` tokens joined with underscores. Matched spans are consumed.
pub fn link_concepts(
    tokens: &TokenSequence,
    graph: &KnowledgeGraph,
    max_len: usize,
    stoplist: &StopList,
) -> Result<MentionSet> {
    if max_len == 0 {
        return Err(KesError::Argument("max_len must be at least 1".into()));
    }
    let toks = tokens.tokens();
    let mut mentions = Vec::new();
    let mut start = 0;
    while start < toks.len() {
        let longest = max_len.min(toks.len() - start);
        let hit = (1..=longest).rev().find_map(|len| {
            if len == 1 && stoplist.contains(&toks[start]) {
                return None;
            }
            let label = toks[start..start + len].join("_");
            graph.concept_id(&label).map(|c| (len, c))
        });
        match hit {
            Some((len, concept)) => {
                mentions.push(Mention {
                    start,
                    end: start + len,
                    concept,
                });
                start += len;
            }
            None => start += 1,
        }
    }
    Ok(MentionSet { mentions })
}
