//! Compact transformer encoder for context-gloss binary classification.
//!
//! Inputs are laid out as `[BOS] context [SEP] gloss [SEP]` over a
//! whitespace vocabulary. The encoder is a post-norm transformer stack with
//! hand-written backpropagation in `f64`; the head maps either the BOS vector
//! (sentence heads) or the mean of the target-span vectors (token head) to a
//! two-logit output `(no-match, match)`.

mod checkpoint;
mod classifier;
mod config;
mod encode;
mod model;
mod params;
mod train;
mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use classifier::{GlossModel, PairClassifier};
pub use config::{EncoderConfig, HeadKind, Preset, TrainConfig};
pub use encode::{encode_pair, EncodedPair};
pub use model::{
    backward, forward, forward_with_cache, loss, loss_and_grads, softmax, ClassifierOutput, ForwardCache,
};
pub use params::ModelParameters;
pub use train::{fit, train, AdamConfig, LossRecord, TrainLog, TrainOutcome, Trainer};
pub use vocab::{build_vocab, tokenize, Vocab, BOS, PAD, SEP, UNK};
