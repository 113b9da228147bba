use crate::error::{Error, Result};
use crate::pairgen::ContextGlossPair;

use super::config::{EncoderConfig, HeadKind};
use super::encode::encode_pair;
use super::model::forward;
use super::params::ModelParameters;
use super::vocab::Vocab;

const INFERENCE_BATCH: usize = 32;

/// Anything that scores context-gloss pairs with pre-softmax logits.
///
/// Implementors receive pairs already built for their head (marked pairs for
/// [`HeadKind::SentClsWs`]) and return one logit vector per pair; index 1 is
/// the "match" score.
pub trait PairClassifier {
    fn head(&self) -> HeadKind;

    fn classify(&self, pairs: &[ContextGlossPair]) -> Result<Vec<Vec<f64>>>;
}

/// A trained encoder with its vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct GlossModel {
    pub config: EncoderConfig,
    pub vocab: Vocab,
    pub params: ModelParameters,
}

impl GlossModel {
    pub fn new(config: EncoderConfig, vocab: Vocab, params: ModelParameters) -> Result<Self> {
        config.validate()?;
        if vocab.len() != config.vocab_size {
            return Err(Error::Config(format!(
                "vocabulary has {} entries but config says {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        Ok(GlossModel { config, vocab, params })
    }
}

impl PairClassifier for GlossModel {
    fn head(&self) -> HeadKind {
        self.config.head
    }

    fn classify(&self, pairs: &[ContextGlossPair]) -> Result<Vec<Vec<f64>>> {
        let encoded = pairs
            .iter()
            .map(|p| encode_pair(p, &self.vocab, &self.config))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in encoded.chunks(INFERENCE_BATCH) {
            for o in forward(&self.params, chunk, &self.config, None)? {
                out.push(o.logits.to_vec());
            }
        }
        Ok(out)
    }
}

impl<T: PairClassifier + ?Sized> PairClassifier for &T {
    fn head(&self) -> HeadKind {
        (**self).head()
    }

    fn classify(&self, pairs: &[ContextGlossPair]) -> Result<Vec<Vec<f64>>> {
        (**self).classify(pairs)
    }
}

impl<T: PairClassifier + ?Sized> PairClassifier for Box<T> {
    fn head(&self) -> HeadKind {
        (**self).head()
    }

    fn classify(&self, pairs: &[ContextGlossPair]) -> Result<Vec<Vec<f64>>> {
        (**self).classify(pairs)
    }
}
