//! Offline training of a forecaster on the historical segment, with
//! early-stopping by validation MSE.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::forecasters::ForecastModel;
use crate::nncore::{mse_with_grad, AdamState, ParamTensor};
use crate::seriesdata::WindowSample;

use super::{eval_model_mse, EngineError, OnlineConfig};

/// What happened during pretraining. The model itself ends up holding
/// the parameters of the best validation epoch.
#[derive(Debug, Clone)]
pub struct PretrainRecord {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_valid_mse: f64,
    pub train_trace: Vec<f64>,
    pub valid_trace: Vec<f64>,
}

/// Trains `model` on shuffled mini-batches of `train` for `cfg.epochs`
/// epochs at `cfg.pretrain_lr`, evaluating on `valid` after each epoch
/// and keeping the parameters of the epoch with the lowest validation
/// MSE. Zero epochs leave the model untouched.
pub fn pretrain<R: Rng>(
    model: &mut ForecastModel,
    train: &[WindowSample],
    valid: &[WindowSample],
    cfg: &OnlineConfig,
    rng: &mut R,
) -> Result<PretrainRecord, EngineError> {
    assert!(!train.is_empty(), "pretraining needs training windows");
    assert!(!valid.is_empty(), "pretraining needs validation windows");
    let mut adam = AdamState::new(cfg.pretrain_lr);
    let batch = cfg.batch.max(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut train_trace = Vec::with_capacity(cfg.epochs);
    let mut valid_trace = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64)> = None;
    let mut best_snapshot = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch) {
            model.zero_grads();
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &idx in chunk {
                let s = &train[idx];
                let (yhat, cache) = model.forward_cached(&s.x)?;
                let (loss, mut grad) = mse_with_grad(&yhat, &s.y)?;
                for g in grad.as_mut_slice() {
                    *g *= scale;
                }
                model.backward(&cache, &grad)?;
                batch_loss += loss * scale;
            }
            if !batch_loss.is_finite() {
                return Err(EngineError::Diverged("pretraining"));
            }
            let mut refs: Vec<&mut ParamTensor> = model.params.iter_mut().collect();
            adam.step(&mut refs)?;
            epoch_loss += batch_loss;
            batches += 1;
        }
        train_trace.push(epoch_loss / batches as f64);

        let valid_mse = eval_model_mse(model, valid)?;
        if !valid_mse.is_finite() {
            return Err(EngineError::Diverged("pretraining validation"));
        }
        valid_trace.push(valid_mse);
        if best.map_or(true, |(_, b)| valid_mse < b) {
            best = Some((epoch, valid_mse));
            best_snapshot = Some(model.clone_params());
        }
    }

    match (best, best_snapshot) {
        (Some((best_epoch, best_valid_mse)), Some(snap)) => {
            model.restore_params(&snap)?;
            Ok(PretrainRecord {
                epochs_run: cfg.epochs,
                best_epoch,
                best_valid_mse,
                train_trace,
                valid_trace,
            })
        }
        _ => Ok(PretrainRecord {
            epochs_run: 0,
            best_epoch: 0,
            best_valid_mse: f64::INFINITY,
            train_trace,
            valid_trace,
        }),
    }
}
