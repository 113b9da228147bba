use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeadKind {
    /// Mean of final-layer vectors over the target span.
    TokenCls,
    /// Final-layer vector at BOS.
    SentCls,
    /// Same as `SentCls`, fed weak-supervision-marked pairs.
    SentClsWs,
}

impl HeadKind {
    pub const ALL: [HeadKind; 3] = [HeadKind::TokenCls, HeadKind::SentCls, HeadKind::SentClsWs];

    /// Whether inputs for this head carry target markup and lemma-prefixed glosses.
    pub fn uses_ws(self) -> bool {
        matches!(self, HeadKind::SentClsWs)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::TokenCls => "token-cls",
            HeadKind::SentCls => "sent-cls",
            HeadKind::SentClsWs => "sent-cls-ws",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            HeadKind::TokenCls => 0,
            HeadKind::SentCls => 1,
            HeadKind::SentClsWs => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        HeadKind::ALL.into_iter().find(|h| h.code() == code)
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match norm.as_str() {
            "tokencls" => Ok(HeadKind::TokenCls),
            "sentcls" => Ok(HeadKind::SentCls),
            "sentclsws" => Ok(HeadKind::SentClsWs),
            _ => Err(Error::Config(format!(
                "unknown head `{s}` (expected token-cls, sent-cls or sent-cls-ws)"
            ))),
        }
    }
}

/// Named configuration bundles. `Full` carries the reported fine-tuning
/// setup; `Toy` is sized for training from scratch on a laptop CPU.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Full,
    Toy,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Preset::Full),
            "toy" => Ok(Preset::Toy),
            _ => Err(Error::Config(format!("unknown preset `{s}` (expected full or toy)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub max_seq_length: usize,
    pub model_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub feedforward_dim: usize,
    pub dropout_rate: f64,
    pub head: HeadKind,
}

impl EncoderConfig {
    pub fn preset(preset: Preset, head: HeadKind, vocab_size: usize) -> Self {
        match preset {
            Preset::Full => EncoderConfig {
                vocab_size,
                max_seq_length: 512,
                model_dim: 128,
                num_layers: 4,
                num_heads: 4,
                feedforward_dim: 512,
                dropout_rate: 0.1,
                head,
            },
            Preset::Toy => EncoderConfig {
                vocab_size,
                max_seq_length: 128,
                model_dim: 32,
                num_layers: 2,
                num_heads: 4,
                feedforward_dim: 64,
                dropout_rate: 0.0,
                head,
            },
        }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vocab_size < 4 {
            return fail(format!("vocab_size {} leaves no room for reserved tokens", self.vocab_size));
        }
        if self.max_seq_length < 8 {
            return fail(format!("max_seq_length must be at least 8, got {}", self.max_seq_length));
        }
        if self.model_dim == 0 || self.num_heads == 0 || self.feedforward_dim == 0 {
            return fail("model_dim, num_heads and feedforward_dim must be positive".into());
        }
        if self.model_dim % self.num_heads != 0 {
            return fail(format!(
                "model_dim {} is not divisible by num_heads {}",
                self.model_dim, self.num_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// May be fractional; the final epoch then covers a prefix of the shuffled data.
    pub num_epochs: f64,
    pub grad_accum_steps: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Full => TrainConfig {
                batch_size: 10,
                learning_rate: 2e-6,
                num_epochs: 6.0,
                grad_accum_steps: 3,
                seed: 42,
            },
            Preset::Toy => TrainConfig {
                batch_size: 8,
                learning_rate: 1e-3,
                num_epochs: 10.0,
                grad_accum_steps: 1,
                seed: 42,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.grad_accum_steps == 0 {
            return Err(Error::Config("grad_accum_steps must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.num_epochs.is_finite() && self.num_epochs >= 0.0) {
            return Err(Error::Config(format!("num_epochs must be non-negative, got {}", self.num_epochs)));
        }
        Ok(())
    }
}
