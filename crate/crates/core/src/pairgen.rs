//! Context-gloss pair construction.
//!
//! Every instance with `N` candidate senses yields `N` binary pairs (one per
//! gloss). Under α-resampling the instance instead contributes
//! `max(1, ⌈N^α⌉)` pairs: `⌈N^α⌉ - 1` uniform draws with replacement from the
//! baseline pairs followed by one copy of the positive pair, so words with
//! many senses appear disproportionately often.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::corpus::{SenseInventory, Sentence, WsdInstance};
use crate::error::{Error, Result};

/// Standalone token placed on both sides of the target word in marked contexts.
pub const TARGET_MARK: &str = "\"";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextGlossPair {
    pub instance_id: String,
    pub context: Vec<String>,
    /// Half-open `[start, end)` token range of the target inside `context`.
    pub target_span: (usize, usize),
    pub gloss: String,
    pub sense_key: String,
    pub label: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingMode {
    Baseline,
    Alpha,
}

/// How many pairs an instance contributes under α-resampling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CountRule {
    /// `max(1, ⌈N^α⌉)` in total: `⌈N^α⌉ - 1` draws plus the appended positive.
    #[default]
    Draws,
    /// Inclusive loop `0..=⌈N^α⌉` of draws plus the appended positive,
    /// i.e. `⌈N^α⌉ + 2` in total.
    InclusiveLoop,
}

impl CountRule {
    pub fn total(self, n_senses: usize, alpha: f64) -> usize {
        match self {
            CountRule::Draws => pair_count(n_senses, alpha),
            CountRule::InclusiveLoop => ceil_pow(n_senses, alpha) + 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingConfig {
    pub alpha: f64,
    pub seed: u64,
    pub mode: SamplingMode,
    pub count_rule: CountRule,
}

impl SamplingConfig {
    pub fn baseline(seed: u64) -> Self {
        SamplingConfig {
            alpha: 1.0,
            seed,
            mode: SamplingMode::Baseline,
            count_rule: CountRule::Draws,
        }
    }

    pub fn alpha(alpha: f64, seed: u64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        Ok(SamplingConfig {
            alpha,
            seed,
            mode: SamplingMode::Alpha,
            count_rule: CountRule::Draws,
        })
    }
}

/// `⌈n^α⌉`, snapping results within floating-point noise of an integer so
/// that e.g. `9^0.5` is 3 and not 4.
fn ceil_pow(n: usize, alpha: f64) -> usize {
    let p = (n as f64).powf(alpha);
    let r = p.round();
    if (p - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        p.ceil() as usize
    }
}

/// Total number of pairs emitted for an instance with `n_senses` glosses.
pub fn pair_count(n_senses: usize, alpha: f64) -> usize {
    ceil_pow(n_senses, alpha).max(1)
}

fn target_pieces(surface: &str, lemma: &str) -> Vec<String> {
    let pieces: Vec<String> = surface.split_whitespace().map(str::to_string).collect();
    if pieces.is_empty() {
        vec![lemma.to_string()]
    } else {
        pieces
    }
}

/// Builds the `N` baseline pairs for one instance in inventory order.
///
/// When the instance carries gold keys every matching sense is labeled
/// positive and at least one match is required; without gold keys all pairs
/// are unlabeled (negative) candidates for inference. With `ws` the target is
/// wrapped in [`TARGET_MARK`] tokens (included in the span) and each gloss is
/// prefixed with `"<lemma>: "`.
pub fn build_pairs(
    instance: &WsdInstance,
    sentence: &Sentence,
    inventory: &SenseInventory,
    ws: bool,
) -> Result<Vec<ContextGlossPair>> {
    let senses = inventory
        .senses(&instance.lemma, instance.pos)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::MissingSense {
            lemma: instance.lemma.clone(),
            pos: instance.pos.to_string(),
        })?;
    if instance.target_position >= sentence.words.len() {
        return Err(Error::Precondition(format!(
            "instance {} targets position {} of a {}-token sentence",
            instance.instance_id,
            instance.target_position,
            sentence.words.len()
        )));
    }

    let mut context = Vec::with_capacity(sentence.words.len() + 2);
    let mut span = (0, 0);
    for (i, word) in sentence.words.iter().enumerate() {
        let pieces = target_pieces(&word.surface, &word.lemma);
        if i == instance.target_position {
            span.0 = context.len();
            if ws {
                context.push(TARGET_MARK.to_string());
            }
            context.extend(pieces);
            if ws {
                context.push(TARGET_MARK.to_string());
            }
            span.1 = context.len();
        } else {
            context.extend(pieces);
        }
    }

    let labeled = !instance.gold_keys.is_empty();
    let pairs: Vec<ContextGlossPair> = senses
        .iter()
        .map(|sense| ContextGlossPair {
            instance_id: instance.instance_id.clone(),
            context: context.clone(),
            target_span: span,
            gloss: if ws {
                format!("{}: {}", instance.lemma, sense.gloss)
            } else {
                sense.gloss.clone()
            },
            sense_key: sense.sense_key.clone(),
            label: labeled && instance.gold_keys.contains(&sense.sense_key),
        })
        .collect();
    if labeled && !pairs.iter().any(|p| p.label) {
        return Err(Error::GoldMismatch {
            instance_id: instance.instance_id.clone(),
        });
    }
    Ok(pairs)
}

/// Resamples one instance's baseline pairs: `total - 1` uniform draws with
/// replacement, then the first positive pair appended last.
pub fn alpha_resample<R: Rng + ?Sized>(
    pairs: &[ContextGlossPair],
    config: &SamplingConfig,
    rng: &mut R,
) -> Result<Vec<ContextGlossPair>> {
    if pairs.is_empty() {
        return Err(Error::Precondition("cannot resample an empty pair list".into()));
    }
    let positive = pairs.iter().find(|p| p.label).ok_or_else(|| Error::GoldMismatch {
        instance_id: pairs[0].instance_id.clone(),
    })?;
    let total = config.count_rule.total(pairs.len(), config.alpha);
    let mut out = Vec::with_capacity(total);
    for _ in 1..total {
        out.push(pairs[rng.random_range(0..pairs.len())].clone());
    }
    out.push(positive.clone());
    Ok(out)
}

/// Per-instance RNG keyed by `(seed, instance_id)`, independent of corpus order.
pub fn instance_rng(seed: u64, instance_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(instance_id.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

pub fn build_training_set(
    instances: &[WsdInstance],
    sentences: &[Sentence],
    inventory: &SenseInventory,
    config: &SamplingConfig,
    ws: bool,
) -> Result<Vec<ContextGlossPair>> {
    let by_id: HashMap<&str, &Sentence> = sentences.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut out = Vec::new();
    for inst in instances {
        let pairs = (|| {
            let sentence = by_id.get(inst.sentence_id.as_str()).ok_or_else(|| {
                Error::Validation(format!("unknown sentence `{}`", inst.sentence_id))
            })?;
            let pairs = build_pairs(inst, sentence, inventory, ws)?;
            match config.mode {
                SamplingMode::Baseline => Ok(pairs),
                SamplingMode::Alpha => {
                    let mut rng = instance_rng(config.seed, &inst.instance_id);
                    alpha_resample(&pairs, config, &mut rng)
                }
            }
        })()
        .map_err(|e| e.for_instance(&inst.instance_id))?;
        out.extend(pairs);
    }
    Ok(out)
}

pub const PAIRS_HEADER: &str =
    "instance_id\tlabel\ttarget_start\ttarget_end\tcontext\tgloss\tsense_key";

pub fn write_pairs_tsv(pairs: &[ContextGlossPair]) -> String {
    let mut out = String::with_capacity(64 * pairs.len() + PAIRS_HEADER.len() + 1);
    out.push_str(PAIRS_HEADER);
    out.push('\n');
    for p in pairs {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.instance_id,
            u8::from(p.label),
            p.target_span.0,
            p.target_span.1,
            p.context.join(" "),
            p.gloss,
            p.sense_key
        );
    }
    out
}

pub fn read_pairs_tsv(text: &str) -> Result<Vec<ContextGlossPair>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == PAIRS_HEADER => {}
        _ => {
            return Err(Error::Format {
                line: 1,
                message: "missing training-pair header".into(),
            })
        }
    }
    let mut pairs = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fmt_err = |message: String| Error::Format {
            line: line_no,
            message,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(fmt_err(format!("expected 7 fields, found {}", f.len())));
        }
        let label = match f[1] {
            "0" => false,
            "1" => true,
            other => return Err(fmt_err(format!("bad label `{other}`"))),
        };
        let parse_idx = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| fmt_err(format!("bad index `{s}`")))
        };
        let span = (parse_idx(f[2])?, parse_idx(f[3])?);
        let context: Vec<String> = f[4].split(' ').map(str::to_string).collect();
        if span.0 >= span.1 || span.1 > context.len() {
            return Err(fmt_err(format!("target span {span:?} outside context")));
        }
        pairs.push(ContextGlossPair {
            instance_id: f[0].to_string(),
            context,
            target_span: span,
            gloss: f[5].to_string(),
            sense_key: f[6].to_string(),
            label,
        });
    }
    Ok(pairs)
}
