use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::decoding::greedy_decode;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::numerics::Rng;
use crate::tokenizer::TokenSeq;
use crate::training::{
    accumulate_batch, apply_update, clip_gradients, make_batches, Checkpoint, OptimizerConfig, OptimizerState,
};

/// Training-loop hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Seeds batching; parameter initialization uses the model seed.
    pub seed: u64,
    /// Dev accuracy is measured every this many epochs (and after the last).
    pub eval_every: usize,
    /// Stop once dev accuracy reaches this value.
    pub target_dev_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            eval_every: 1,
            target_dev_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.batch_size == 0 {
            problems.push("batch_size must be >= 1".to_string());
        }
        if self.eval_every == 0 {
            problems.push("eval_every must be >= 1".to_string());
        }
        if let Some(t) = self.target_dev_accuracy {
            if !(0.0..=1.0).contains(&t) {
                problems.push(format!("target_dev_accuracy must be in [0, 1], got {t}"));
            }
        }
        if let Err(Error::Config(e)) = self.optimizer.validate() {
            problems.push(e);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Token-id pairs for training and (optionally empty) dev evaluation.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<(TokenSeq, TokenSeq)>,
    pub dev: Vec<(TokenSeq, TokenSeq)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u64,
    /// Mean of the per-batch losses.
    pub train_loss: f64,
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochMetrics>,
}

/// Fraction of pairs whose greedy decode reproduces the target exactly.
pub fn exact_match_accuracy(pairs: &[(TokenSeq, TokenSeq)], params: &ModelParams, config: &ModelConfig) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Input("no pairs to evaluate".into()));
    }
    let mut hits = 0usize;
    for (src, tgt) in pairs {
        // one step past the target length decides an exact match
        let out = greedy_decode(src, params, config, tgt.len() + 1)?;
        hits += usize::from(out.finished && out.ids[..] == tgt[..]);
    }
    Ok(hits as f64 / pairs.len() as f64)
}

/// Trains a freshly initialized model.
pub fn train(
    dataset: &Dataset,
    model: &ModelConfig,
    hp: &TrainConfig,
    callbacks: &mut dyn FnMut(&EpochMetrics) -> ControlFlow<()>,
) -> Result<TrainOutcome> {
    let params = ModelParams::init(model)?;
    let optimizer = OptimizerState::new(hp.optimizer.clone(), &params);
    let start = Checkpoint {
        config: model.clone(),
        tokenizers: None,
        params,
        optimizer,
        epoch: 0,
        step: 0,
    };
    train_from(start, dataset, hp, callbacks)
}

/// Continues training `ckpt` for `hp.epochs` further epochs.
///
/// Each epoch reshuffles with an Rng derived from `hp.seed` and the absolute
/// epoch number, so a resumed run matches an uninterrupted one.
pub fn train_from(
    mut ckpt: Checkpoint,
    dataset: &Dataset,
    hp: &TrainConfig,
    callbacks: &mut dyn FnMut(&EpochMetrics) -> ControlFlow<()>,
) -> Result<TrainOutcome> {
    hp.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    ckpt.params.check_shapes(&ckpt.config)?;
    let config = ckpt.config.clone();
    let mut history = Vec::with_capacity(hp.epochs);
    let clip = ckpt.optimizer.config.clip_norm;
    for k in 0..hp.epochs {
        let epoch = ckpt.epoch + 1;
        let mut rng = Rng::new(hp.seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let batches = make_batches(&dataset.train, hp.batch_size, &mut rng)?;
        let mut grads = ckpt.params.zeros_like();
        let mut loss_sum = 0.0;
        for batch in &batches {
            for (_, g) in grads.tensors_mut() {
                g.fill(0.0);
            }
            let loss = accumulate_batch(batch, &ckpt.params, &config, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}, step {}", ckpt.step + 1)));
            }
            clip_gradients(&mut grads, clip)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}, step {}: {e}", ckpt.step + 1)))?;
            apply_update(&mut ckpt.params, &grads, &mut ckpt.optimizer)?;
            ckpt.step += 1;
            loss_sum += loss;
        }
        ckpt.epoch = epoch;
        let last = k + 1 == hp.epochs;
        let dev_accuracy = if !dataset.dev.is_empty() && (last || (k + 1) % hp.eval_every == 0) {
            Some(exact_match_accuracy(&dataset.dev, &ckpt.params, &config)?)
        } else {
            None
        };
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / batches.len() as f64,
            dev_accuracy,
        };
        let stop = callbacks(&metrics).is_break()
            || matches!((hp.target_dev_accuracy, dev_accuracy), (Some(t), Some(a)) if a >= t);
        history.push(metrics);
        if stop {
            break;
        }
    }
    Ok(TrainOutcome {
        checkpoint: ckpt,
        history,
    })
}
