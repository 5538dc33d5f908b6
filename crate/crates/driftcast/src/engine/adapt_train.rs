//! Joint training of the forecaster and the drift adapter on the
//! historical segment. Batches arrive shuffled; each batch estimates its
//! drift against the previous batch's concept and takes one optimizer
//! step over forecaster and adapter parameters together.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::adapter::{
    adapted_model_backward, adapted_model_forward_cached, concat_xy, encode_train_backward,
    encode_train_cached, encode_train_concept, estimate_drift, AdaptationCoefficients,
    AdaptedModelCache, AdapterError, DriftAdapter, EncodeCache, GenCache,
};
use crate::forecasters::ForecastModel;
use crate::nncore::{mse_with_grad, AdamState, ParamTensor, Tensor};
use crate::seriesdata::WindowSample;

use super::{EngineError, OnlineConfig};

/// What happened during adapter training.
#[derive(Debug, Clone)]
pub struct AdapterTrainRecord {
    /// Mean batch loss, one entry per optimizer step.
    pub loss_trace: Vec<f64>,
    /// Concept of the last batch seen, encoded the same way batches were
    /// encoded during training. Serves as the cold-start reference when
    /// the online loop begins.
    pub final_concept: Option<Tensor>,
}

/// Mean concept of `samples` on the completed-window side. `via_test`
/// routes through the lookback-only encoder instead of the dedicated
/// lookback-and-target one.
fn prev_mean_concept(
    adapter: &DriftAdapter,
    samples: &[WindowSample],
    via_test: bool,
) -> Result<Tensor, AdapterError> {
    if via_test {
        assert!(!samples.is_empty(), "at least one sample");
        let mut acc = vec![0.0; adapter.d_c()];
        for s in samples {
            let c = adapter.enc_test.encode(&s.x)?;
            for (a, v) in acc.iter_mut().zip(c.as_slice()) {
                *a += v;
            }
        }
        for a in acc.iter_mut() {
            *a /= samples.len() as f64;
        }
        Ok(Tensor::from_slice(&acc))
    } else {
        let enc = adapter
            .enc_train
            .as_ref()
            .expect("dedicated completed-window encoder");
        encode_train_concept(enc, samples)
    }
}

struct SampleFwd {
    c_test_cache: EncodeCache,
    gen_cache: GenCache,
    coeffs: AdaptationCoefficients,
    model_cache: AdaptedModelCache,
    grad: Tensor,
}

/// One batch of the joint objective: forward through the adapted
/// parameters, backward into forecaster, generator, and encoders.
/// Gradients accumulate; the caller owns zeroing and stepping. Returns
/// the mean batch loss. `prev` is the previous batch; without one the
/// drift input is zero and no encoder receives gradient through it.
fn batch_backprop(
    model: &mut ForecastModel,
    adapter: &mut DriftAdapter,
    batch: &[WindowSample],
    prev: Option<&[WindowSample]>,
    cfg: &OnlineConfig,
) -> Result<f64, EngineError> {
    assert!(!batch.is_empty(), "empty batch");
    let d_c = adapter.d_c();
    let via_test = cfg.prev_batch_encoder_eprime || adapter.shared_encoder();
    let use_prev = !adapter.concept_only && prev.is_some();

    let (c_prev, prev_cache) = if use_prev {
        let pb = prev.unwrap();
        let inputs: Vec<Tensor> = if via_test {
            pb.iter().map(|s| s.x.clone()).collect()
        } else {
            pb.iter().map(concat_xy).collect()
        };
        let enc = if via_test {
            &adapter.enc_test
        } else {
            adapter
                .enc_train
                .as_ref()
                .expect("dedicated completed-window encoder")
        };
        let (c, cache) = encode_train_cached(enc, &inputs)?;
        (Some(c), Some(cache))
    } else {
        (None, None)
    };

    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut fwds = Vec::with_capacity(batch.len());
    for s in batch {
        let (c_test, c_test_cache) = adapter.enc_test.encode_cached(&s.x)?;
        let input = if adapter.concept_only {
            c_test
        } else if let Some(cp) = &c_prev {
            estimate_drift(&c_test, cp)?
        } else {
            Tensor::zeros(&[d_c])
        };
        let (coeffs, gen_cache) = adapter.generator.generate_cached(&input)?;
        let (yhat, model_cache) = adapted_model_forward_cached(model, &coeffs, &s.x)?;
        let (loss, mut grad) = mse_with_grad(&yhat, &s.y)?;
        for g in grad.as_mut_slice() {
            *g *= scale;
        }
        total += loss * scale;
        fwds.push(SampleFwd {
            c_test_cache,
            gen_cache,
            coeffs,
            model_cache,
            grad,
        });
    }

    // The generator input reads the current-window encoder except on a
    // first batch, where it is a constant zero.
    let encoder_feeds_input = adapter.concept_only || c_prev.is_some();
    let mut dc_prev = vec![0.0; d_c];
    for fwd in &fwds {
        let coeff_grads = adapted_model_backward(model, &fwd.coeffs, &fwd.model_cache, &fwd.grad)?;
        let d_delta = adapter
            .generator
            .generate_backward(&fwd.gen_cache, &coeff_grads)?;
        if encoder_feeds_input {
            adapter
                .enc_test
                .encode_backward(&fwd.c_test_cache, &d_delta)?;
        }
        if use_prev {
            for (a, g) in dc_prev.iter_mut().zip(&d_delta) {
                *a -= g;
            }
        }
    }
    if let Some(cache) = &prev_cache {
        let enc = if via_test {
            &mut adapter.enc_test
        } else {
            adapter
                .enc_train
                .as_mut()
                .expect("dedicated completed-window encoder")
        };
        encode_train_backward(enc, cache, &dc_prev)?;
    }
    Ok(total)
}

/// Trains forecaster and adapter jointly on shuffled mini-batches for
/// `cfg.epochs` epochs at `cfg.pretrain_lr`. Each batch's drift is
/// measured against the batch seen on the previous step; the very first
/// batch sees zero drift. With `cfg.freeze_adapter` only the forecaster
/// moves, which reduces the loop to plain fine-tuning.
pub fn train_adapter<R: Rng>(
    model: &mut ForecastModel,
    adapter: &mut DriftAdapter,
    train: &[WindowSample],
    cfg: &OnlineConfig,
    rng: &mut R,
) -> Result<AdapterTrainRecord, EngineError> {
    assert!(!train.is_empty(), "adapter training needs windows");
    let mut adam = AdamState::new(cfg.pretrain_lr);
    let batch_size = cfg.batch.max(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut prev_batch: Option<Vec<WindowSample>> = None;
    let mut loss_trace = Vec::new();

    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<WindowSample> = chunk.iter().map(|&i| train[i].clone()).collect();
            model.zero_grads();
            adapter.zero_grads();
            let loss = batch_backprop(model, adapter, &batch, prev_batch.as_deref(), cfg)?;
            if !loss.is_finite() {
                return Err(EngineError::Diverged("adapter training"));
            }
            if cfg.freeze_adapter {
                adapter.zero_grads();
                let mut refs: Vec<&mut ParamTensor> = model.params.iter_mut().collect();
                adam.step(&mut refs)?;
            } else {
                let mut refs: Vec<&mut ParamTensor> = model.params.iter_mut().collect();
                refs.extend(adapter.all_params_mut());
                adam.step(&mut refs)?;
            }
            loss_trace.push(loss);
            prev_batch = Some(batch);
        }
    }

    let via_test = cfg.prev_batch_encoder_eprime || adapter.shared_encoder();
    let final_concept = match &prev_batch {
        Some(b) => Some(prev_mean_concept(adapter, b, via_test)?),
        None => None,
    };
    Ok(AdapterTrainRecord {
        loss_trace,
        final_concept,
    })
}
