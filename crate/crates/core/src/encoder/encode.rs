use crate::error::{Error, Result};
use crate::pairgen::ContextGlossPair;

use super::config::EncoderConfig;
use super::vocab::{tokenize, Vocab, BOS, SEP};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedPair {
    /// `[BOS] context [SEP] gloss [SEP]`.
    pub token_ids: Vec<usize>,
    /// 0 through the first SEP, 1 afterwards.
    pub segment_ids: Vec<u8>,
    pub target_mask: Vec<bool>,
    pub label: bool,
}

impl EncodedPair {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Encodes a pair, truncating to `max_seq_length`: gloss tokens go first
/// (from the right), then context tokens from whichever side of the target
/// span is longer. The target span and the markers are never dropped.
pub fn encode_pair(pair: &ContextGlossPair, vocab: &Vocab, config: &EncoderConfig) -> Result<EncodedPair> {
    let (start, end) = pair.target_span;
    if start >= end || end > pair.context.len() {
        return Err(Error::Encoding(format!(
            "target span ({start}, {end}) outside a {}-token context",
            pair.context.len()
        )));
    }
    let budget = config.max_seq_length.saturating_sub(3);
    let span_len = end - start;
    if span_len > budget {
        return Err(Error::Encoding(format!(
            "target span of {span_len} tokens exceeds the {budget}-token budget"
        )));
    }

    let mut gloss = tokenize(&pair.gloss);
    gloss.truncate(budget.saturating_sub(pair.context.len()));

    let (mut lo, mut hi) = (0, pair.context.len());
    while hi - lo > budget - gloss.len() {
        if start - lo > hi - end {
            lo += 1;
        } else {
            hi -= 1;
        }
    }

    let total = 3 + (hi - lo) + gloss.len();
    let mut token_ids = Vec::with_capacity(total);
    let mut segment_ids = Vec::with_capacity(total);
    let mut target_mask = Vec::with_capacity(total);

    token_ids.push(BOS);
    for (i, word) in pair.context[lo..hi].iter().enumerate() {
        let pos = lo + i;
        // a context entry is one token; lower-case it like the vocabulary does
        token_ids.push(vocab.id(&word.to_lowercase()));
        target_mask.push((start..end).contains(&pos));
    }
    token_ids.push(SEP);
    segment_ids.resize(token_ids.len(), 0);
    for tok in &gloss {
        token_ids.push(vocab.id(tok));
    }
    token_ids.push(SEP);
    segment_ids.resize(token_ids.len(), 1);

    let mut mask = vec![false];
    mask.extend(target_mask);
    mask.resize(token_ids.len(), false);

    Ok(EncodedPair {
        token_ids,
        segment_ids,
        target_mask: mask,
        label: pair.label,
    })
}
