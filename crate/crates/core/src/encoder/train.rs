//! Mini-batch training with gradient accumulation and Adam.
//!
//! Each micro-batch contributes its mean-loss gradient to an accumulation
//! buffer; every `grad_accum_steps` micro-batches the buffer is averaged and
//! applied as one optimizer update. A partial window left at the end of an
//! epoch is flushed with the average over the micro-batches it holds.

use std::fmt::Write as _;

use ndarray::Zip;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pairgen::ContextGlossPair;

use super::classifier::GlossModel;
use super::config::{EncoderConfig, TrainConfig};
use super::encode::{encode_pair, EncodedPair};
use super::model::loss_and_grads;
use super::params::ModelParameters;
use super::vocab::build_vocab;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    /// 1-based optimizer step, counted across epochs.
    pub step: usize,
    /// Mean loss over the micro-batches of this update.
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    /// Mean per-example loss of every (possibly partial) epoch.
    pub epoch_losses: Vec<f64>,
    pub records: Vec<LossRecord>,
}

impl TrainLog {
    /// `epoch,step,loss` CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,step,loss\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{}", r.epoch, r.step, r.loss);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParameters,
    pub log: TrainLog,
}

/// Optimizer state plus the gradient accumulation window.
pub struct Trainer {
    config: EncoderConfig,
    learning_rate: f64,
    adam: AdamConfig,
    params: ModelParameters,
    first_moment: ModelParameters,
    second_moment: ModelParameters,
    steps: i32,
    accumulated: ModelParameters,
    pending: usize,
    pending_loss: f64,
    dropout_rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(config: &EncoderConfig, train: &TrainConfig, params: ModelParameters) -> Self {
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(train.seed);
        dropout_rng.set_stream(1);
        Trainer {
            config: config.clone(),
            learning_rate: train.learning_rate,
            adam: AdamConfig::default(),
            first_moment: ModelParameters::zeros(config),
            second_moment: ModelParameters::zeros(config),
            accumulated: ModelParameters::zeros(config),
            params,
            steps: 0,
            pending: 0,
            pending_loss: 0.0,
            dropout_rng,
        }
    }

    pub fn params(&self) -> &ModelParameters {
        &self.params
    }

    pub fn into_params(self) -> ModelParameters {
        self.params
    }

    /// Micro-batches accumulated since the last update.
    pub fn pending(&self) -> usize {
        self.pending
    }

    pub fn optimizer_steps(&self) -> usize {
        self.steps as usize
    }

    /// Adds one micro-batch's mean-loss gradient to the window and returns its loss.
    pub fn accumulate(&mut self, batch: &[EncodedPair]) -> Result<f64> {
        let (loss, grads) = loss_and_grads(&self.params, &self.config, batch, Some(&mut self.dropout_rng))?;
        self.accumulated.add_scaled(&grads, 1.0);
        self.pending += 1;
        self.pending_loss += loss;
        Ok(loss)
    }

    /// Applies the averaged window gradient. Returns the window's mean loss,
    /// or `None` when nothing was accumulated.
    pub fn step(&mut self) -> Option<f64> {
        if self.pending == 0 {
            return None;
        }
        let count = self.pending as f64;
        self.accumulated.scale(1.0 / count);
        self.steps += 1;
        let AdamConfig { beta1, beta2, eps } = self.adam;
        let bias1 = 1.0 - beta1.powi(self.steps);
        let bias2 = 1.0 - beta2.powi(self.steps);
        let lr = self.learning_rate;
        let grads = self.accumulated.tensors();
        for (((mut w, mut m), mut v), (_, g)) in self
            .params
            .tensors_mut()
            .into_iter()
            .zip(self.first_moment.tensors_mut())
            .zip(self.second_moment.tensors_mut())
            .zip(grads)
        {
            Zip::from(&mut w)
                .and(&mut m)
                .and(&mut v)
                .and(&g)
                .for_each(|w, m, v, &g| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *w -= lr * (*m / bias1) / ((*v / bias2).sqrt() + eps);
                });
        }
        self.accumulated.fill(0.0);
        let loss = self.pending_loss / count;
        self.pending = 0;
        self.pending_loss = 0.0;
        Some(loss)
    }
}

/// Trains from `init` on already-encoded pairs. Shuffling and dropout are
/// driven by `train.seed` alone, so equal inputs give bitwise-equal outputs.
pub fn train(
    pairs: &[EncodedPair],
    config: &EncoderConfig,
    train: &TrainConfig,
    init: ModelParameters,
) -> Result<TrainOutcome> {
    config.validate()?;
    train.validate()?;
    if pairs.is_empty() {
        return Err(Error::Precondition("training set is empty".into()));
    }
    if !(pairs.iter().any(|p| p.label) && pairs.iter().any(|p| !p.label)) {
        return Err(Error::Precondition("training set must contain both labels".into()));
    }

    let per_epoch = pairs.len().div_ceil(train.batch_size);
    let total_batches = ((train.num_epochs * per_epoch as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut trainer = Trainer::new(config, train, init);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut done = 0;
    let mut epoch = 0;

    while done < total_batches {
        epoch += 1;
        order.shuffle(&mut shuffle_rng);
        let (mut epoch_loss, mut epoch_examples) = (0.0, 0usize);
        for (index, chunk) in order.chunks(train.batch_size).enumerate() {
            if done == total_batches {
                break;
            }
            let batch: Vec<EncodedPair> = chunk.iter().map(|&i| pairs[i].clone()).collect();
            let loss = trainer.accumulate(&batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: index });
            }
            epoch_loss += loss * batch.len() as f64;
            epoch_examples += batch.len();
            done += 1;
            if trainer.pending() == train.grad_accum_steps {
                apply_step(&mut trainer, &mut log, epoch, index)?;
            }
        }
        if trainer.pending() > 0 {
            apply_step(&mut trainer, &mut log, epoch, per_epoch)?;
        }
        log.epoch_losses.push(epoch_loss / epoch_examples.max(1) as f64);
    }

    Ok(TrainOutcome {
        params: trainer.into_params(),
        log,
    })
}

fn apply_step(trainer: &mut Trainer, log: &mut TrainLog, epoch: usize, batch: usize) -> Result<()> {
    if let Some(loss) = trainer.step() {
        if !trainer.params().all_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch });
        }
        log.records.push(LossRecord {
            epoch,
            step: trainer.optimizer_steps(),
            loss,
        });
    }
    Ok(())
}

/// Builds the vocabulary, encodes `pairs`, initializes from `train.seed` and trains.
pub fn fit(
    pairs: &[ContextGlossPair],
    config: &EncoderConfig,
    train_config: &TrainConfig,
    min_count: usize,
) -> Result<(GlossModel, TrainLog)> {
    let vocab = build_vocab(pairs, min_count);
    let config = EncoderConfig {
        vocab_size: vocab.len(),
        ..config.clone()
    };
    config.validate()?;
    let encoded = pairs
        .iter()
        .map(|p| encode_pair(p, &vocab, &config).map_err(|e| e.for_instance(&p.instance_id)))
        .collect::<Result<Vec<_>>>()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    init_rng.set_stream(2);
    let init = ModelParameters::init(&config, &mut init_rng);
    let outcome = train(&encoded, &config, train_config, init)?;
    Ok((
        GlossModel {
            config,
            vocab,
            params: outcome.params,
        },
        outcome.log,
    ))
}
