use std::collections::HashMap;

use crate::pairgen::ContextGlossPair;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const SEP: usize = 2;
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["[PAD]", "[BOS]", "[SEP]", "[UNK]"];

/// Lower-cased whitespace tokenization shared by vocabulary building and encoding.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::from_tokens(Vec::new())
    }
}

impl Vocab {
    /// Builds a vocabulary from non-reserved tokens in id order (ids start at 4).
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let tokens: Vec<String> = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(tokens.into_iter().filter(|t| !RESERVED.contains(&t.as_str())))
            .collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == RESERVED.len()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Non-reserved tokens in id order.
    pub fn learned_tokens(&self) -> &[String] {
        &self.tokens[RESERVED.len()..]
    }
}

/// Counts context and gloss tokens; keeps those seen at least `min_count`
/// times, ordered by descending frequency then lexicographically.
pub fn build_vocab(pairs: &[ContextGlossPair], min_count: usize) -> Vocab {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for p in pairs {
        for tok in p.context.iter().flat_map(|c| tokenize(c)).chain(tokenize(&p.gloss)) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count.max(1))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocab::from_tokens(kept.into_iter().map(|(t, _)| t).collect())
}
