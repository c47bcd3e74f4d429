use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ReviewRecord, MAX_RATING, MIN_RATING};
use crate::kernel::{HasParams, Mode};
use crate::model::{mse, DeepConn};
use crate::train::data::{mean_rating, ColdStartPolicy, DocumentBank};
use crate::train::optim::{Optimizer, OptimizerConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    /// Start the global bias at the mean training rating instead of zero.
    pub init_bias_to_mean: bool,
    /// Applied to validation pairs without documents.
    pub cold_start: ColdStartPolicy,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            epochs: 10,
            batch_size: 32,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            init_bias_to_mean: true,
            cold_start: ColdStartPolicy::GlobalMean,
        }
    }
}

impl FitConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.optimizer.problems();
        if self.batch_size == 0 {
            out.push("batch_size must be ≥ 1".into());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Cumulative wall time since training started.
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct BestSnapshot {
    pub epoch: usize,
    pub val_loss: f64,
    pub model: DeepConn,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub epochs: Vec<EpochRecord>,
    /// Validation loss of the model before any update.
    pub initial_val_loss: Option<f64>,
    pub best: Option<BestSnapshot>,
    pub steps: u64,
    pub seconds: f64,
}

impl FitOutcome {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

fn with_context(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::NumericFault(m) => Error::NumericFault(format!("epoch {epoch}, batch {batch}: {m}")),
        other => other,
    }
}

/// Mini-batch training. Every training pair must have a user and an item
/// document in `bank`.
pub fn fit(
    model: &mut DeepConn,
    bank: &DocumentBank,
    train: &[ReviewRecord],
    validation: &[ReviewRecord],
    config: &FitConfig,
) -> Result<FitOutcome> {
    let p = config.problems();
    if !p.is_empty() {
        return Err(Error::InvalidConfig(p.join("; ")));
    }
    if train.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if config.init_bias_to_mean {
        model.set_global_bias(mean_rating(train)?);
    }
    let val_opts = EvalOptions {
        cold_start: config.cold_start,
        global_mean: mean_rating(train)?,
        clamp: false,
    };
    let validate = |m: &DeepConn| -> Result<Option<f64>> {
        if validation.is_empty() {
            Ok(None)
        } else {
            evaluate(m, bank, validation, &val_opts).map(|e| Some(e.mse))
        }
    };

    let started = Instant::now();
    let initial_val_loss = validate(model)?;
    let mut optimizer = Optimizer::new(config.optimizer, &model.params())?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<BestSnapshot> = None;
    model.zero_grad();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let scale = 2.0 / batch.len() as f64;
            for &idx in batch {
                let rec = &train[idx];
                let (u, i) = bank.pair(rec)?;
                let mut mode = Mode::Train(&mut dropout_rng);
                let (pred, cache) = model
                    .forward(&u, &i, &mut mode)
                    .map_err(|e| with_context(e, epoch, b + 1))?;
                let diff = pred - rec.rating;
                loss_sum += diff * diff;
                model
                    .backward(&cache, scale * diff)
                    .map_err(|e| with_context(e, epoch, b + 1))?;
            }
            optimizer
                .step(model.params_mut())
                .map_err(|e| with_context(e, epoch, b + 1))?;
        }
        let train_loss = loss_sum / train.len() as f64;
        let val_loss = validate(model)?;
        if let Some(v) = val_loss {
            if best.as_ref().map_or(true, |s| v < s.val_loss) {
                best = Some(BestSnapshot {
                    epoch,
                    val_loss: v,
                    model: model.clone(),
                });
            }
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(FitOutcome {
        epochs,
        initial_val_loss,
        best,
        steps: optimizer.step_count(),
        seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub cold_start: ColdStartPolicy,
    /// Training-mean rating, used by the global-mean fallback.
    pub global_mean: f64,
    /// Clamp predictions to the rating scale.
    pub clamp: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mse: f64,
    pub n_pairs: usize,
    /// Pairs whose user has no document.
    pub cold_users: usize,
    /// Pairs whose item has no document.
    pub cold_items: usize,
    /// Pairs answered by the global mean instead of the model.
    pub fallbacks: usize,
    #[serde(skip)]
    pub predictions: Vec<f64>,
}

/// Test MSE in eval mode. Parameters are untouched.
pub fn evaluate(
    model: &DeepConn,
    bank: &DocumentBank,
    pairs: &[ReviewRecord],
    options: &EvalOptions,
) -> Result<Evaluation> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("evaluation set is empty".into()));
    }
    let empty = bank.empty_embedding();
    let outcomes = pairs
        .par_iter()
        .map(|rec| -> Result<(f64, bool, bool)> {
            let u = bank.user(&rec.user_id);
            let i = bank.item(&rec.item_id);
            let (cold_u, cold_i) = (u.is_none(), i.is_none());
            let pred = if (cold_u || cold_i) && options.cold_start == ColdStartPolicy::GlobalMean {
                options.global_mean
            } else {
                let u = u.map(|d| bank.embed(d)).transpose()?;
                let i = i.map(|d| bank.embed(d)).transpose()?;
                model.predict(u.as_ref().unwrap_or(&empty), i.as_ref().unwrap_or(&empty))?
            };
            let pred = if options.clamp {
                pred.clamp(MIN_RATING, MAX_RATING)
            } else {
                pred
            };
            Ok((pred, cold_u, cold_i))
        })
        .collect::<Result<Vec<_>>>()?;
    let predictions: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let targets: Vec<f64> = pairs.iter().map(|r| r.rating).collect();
    let cold_users = outcomes.iter().filter(|o| o.1).count();
    let cold_items = outcomes.iter().filter(|o| o.2).count();
    let fallbacks = match options.cold_start {
        ColdStartPolicy::GlobalMean => outcomes.iter().filter(|o| o.1 || o.2).count(),
        ColdStartPolicy::EmptyDocument => 0,
    };
    Ok(Evaluation {
        mse: mse(&predictions, &targets)?,
        n_pairs: pairs.len(),
        cold_users,
        cold_items,
        fallbacks,
        predictions,
    })
}

/// MSE of predicting the mean training rating for every test pair.
pub fn global_mean_mse(train: &[ReviewRecord], test: &[ReviewRecord]) -> Result<f64> {
    let mean = mean_rating(train)?;
    let targets: Vec<f64> = test.iter().map(|r| r.rating).collect();
    mse(&vec![mean; targets.len()], &targets)
}
