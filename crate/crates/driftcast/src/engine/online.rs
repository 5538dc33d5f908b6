//! The online loop. One pass over the stream past the training segment:
//! at each step the strategy's feedback update runs on the newest window
//! it is honestly allowed to see, then a forecast is issued for the
//! current origin. Metrics accumulate over the test segment only; the
//! validation segment serves as warm-up for the update rule.

use crate::adapter::{
    adapted_model_backward, adapted_model_forward, adapted_model_forward_cached,
    adapter_param_count, estimate_drift, naive_dense_count, DriftAdapter,
};
use crate::forecasters::ForecastModel;
use crate::nncore::{mae, mse, mse_with_grad, AdamState, ParamTensor, Tensor};
use crate::seriesdata::{guarded_view, SeriesFrame, SplitIndices, WindowSample};

use super::{AuditSummary, EngineError, OnlineConfig, RunReport, Strategy, Variant};

/// Labels for the report; orthogonal to the run's mechanics.
#[derive(Debug, Clone)]
pub struct ReportTags {
    pub dataset: String,
    pub model: String,
    pub seed: u64,
}

/// Concept estimates at one online step: the reference concept of the
/// last completed training window, the current lookback's concept, and
/// their difference.
#[derive(Debug, Clone)]
pub struct ConceptRow {
    pub t: usize,
    pub c_train: Vec<f64>,
    pub c_test: Vec<f64>,
    pub delta: Vec<f64>,
}

fn plain_feedback_step(
    model: &mut ForecastModel,
    adam: &mut AdamState,
    x: &Tensor,
    y: &Tensor,
) -> Result<(), EngineError> {
    let (yhat, cache) = model.forward_cached(x)?;
    let (loss, grad) = mse_with_grad(&yhat, y)?;
    if !loss.is_finite() {
        return Err(EngineError::Diverged("online feedback"));
    }
    model.backward(&cache, &grad)?;
    let mut refs: Vec<&mut ParamTensor> = model.params.iter_mut().collect();
    adam.step(&mut refs)?;
    Ok(())
}

/// Runs one strategy over the stream after the training segment and
/// returns its report. Proactive strategies require `adapter`; the
/// others refuse one. The adapter itself never changes during a run, and
/// adapted parameters are used functionally, never written back.
///
/// The loop enters at the first step after the training segment; updates
/// warm up through the validation segment and metrics cover exactly the
/// forecast origins whose targets lie in the test segment.
pub fn run_online(
    model: &mut ForecastModel,
    adapter: Option<&DriftAdapter>,
    frame: &SeriesFrame,
    split: &SplitIndices,
    cfg: &OnlineConfig,
    tags: &ReportTags,
) -> Result<RunReport, EngineError> {
    let strategy = cfg.strategy;
    if strategy.proceed_family() && adapter.is_none() {
        return Err(EngineError::StrategyArgMismatch(
            "proactive strategy without an adapter",
        ));
    }
    if !strategy.proceed_family() && adapter.is_some() {
        return Err(EngineError::StrategyArgMismatch(
            "adapter passed to a non-adaptive strategy",
        ));
    }
    if let Some(ad) = adapter {
        let wired = match strategy {
            Strategy::ProceedVariant(Variant::ConceptOnly) => ad.concept_only,
            Strategy::ProceedVariant(Variant::SharedEncoder) => ad.shared_encoder(),
            Strategy::ProceedVariant(Variant::UnsharedW1W2) => ad.generator.unshared,
            _ => true,
        };
        if !wired {
            return Err(EngineError::StrategyArgMismatch(
                "adapter was built without this ablation's wiring",
            ));
        }
    }

    let (l, h) = (cfg.lookback, cfg.horizon);
    assert!(l >= 1 && h >= 1, "degenerate window sizes");
    assert!(
        split.train_end >= l + h,
        "training segment shorter than one window"
    );
    assert!(split.test_end <= frame.n_steps(), "split beyond the frame");
    let first = split.train_end + 1;
    let last = split.test_end - h;
    assert!(first <= last, "no forecastable step after training");
    assert!(
        split.valid_end < last,
        "test segment too short for one forecast"
    );

    let mut stream = guarded_view(frame, first, strategy.is_oracle());
    let mut adam = AdamState::new(cfg.online_lr);
    let uses_adaptation = strategy.uses_adaptation();

    // Reference concept of the latest fully observed training window.
    let mut prev_concept: Option<Tensor> = if uses_adaptation {
        let ad = adapter.unwrap();
        let origin = split.train_end - h;
        let x = stream.x_window(origin, l)?;
        let y = stream.y_window(origin, h)?;
        Some(ad.train_concept(&[WindowSample { origin, x, y }])?)
    } else {
        None
    };

    let mut sum_mse = 0.0;
    let mut sum_mae = 0.0;
    let mut test_steps = 0usize;
    let mut trace = Vec::new();
    let mut concepts = Vec::new();

    for t in first..=last {
        stream.advance_to(t);

        match strategy {
            Strategy::Frozen => {}
            Strategy::GdPractical
            | Strategy::GdOptimal
            | Strategy::ProceedVariant(Variant::FeedbackOnly) => {
                let origin = if strategy.is_oracle() { t - 1 } else { t - h };
                debug_assert!(origin >= l);
                let x = stream.x_window(origin, l)?;
                let y = stream.y_window(origin, h)?;
                plain_feedback_step(model, &mut adam, &x, &y)?;
            }
            Strategy::Proceed | Strategy::ProceedVariant(_) => {
                let ad = adapter.unwrap();
                let origin = t - h;
                debug_assert!(origin >= l);
                let x = stream.x_window(origin, l)?;
                let y = stream.y_window(origin, h)?;
                if cfg.feedback_through_adapter {
                    let c_fb = ad.test_concept(&x)?;
                    let prev = prev_concept.as_ref().expect("cold-start concept");
                    let input = ad.generator_input(&c_fb, prev)?;
                    let coeffs = ad
                        .generator
                        .generate_coefficients(&input, model.registry())?;
                    let (yhat, cache) = adapted_model_forward_cached(model, &coeffs, &x)?;
                    let (loss, grad) = mse_with_grad(&yhat, &y)?;
                    if !loss.is_finite() {
                        return Err(EngineError::Diverged("online feedback"));
                    }
                    // Coefficient gradients are discarded: the adapter is
                    // frozen online, only the forecaster moves.
                    let _ = adapted_model_backward(model, &coeffs, &cache, &grad)?;
                    let mut refs: Vec<&mut ParamTensor> = model.params.iter_mut().collect();
                    adam.step(&mut refs)?;
                } else {
                    plain_feedback_step(model, &mut adam, &x, &y)?;
                }
                prev_concept = Some(ad.train_concept(&[WindowSample { origin, x, y }])?);
            }
        }

        if t > split.valid_end {
            let x_t = stream.x_window(t, l)?;
            let yhat = if uses_adaptation {
                let ad = adapter.unwrap();
                let c_test = ad.test_concept(&x_t)?;
                let prev = prev_concept.as_ref().expect("cold-start concept");
                let input = ad.generator_input(&c_test, prev)?;
                let coeffs = ad
                    .generator
                    .generate_coefficients(&input, model.registry())?;
                if cfg.record_concepts {
                    concepts.push(ConceptRow {
                        t,
                        c_train: prev.as_slice().to_vec(),
                        c_test: c_test.as_slice().to_vec(),
                        delta: estimate_drift(&c_test, prev)?.as_slice().to_vec(),
                    });
                }
                adapted_model_forward(model, &coeffs, &x_t)?
            } else {
                model.forward(&x_t)?
            };

            // Ground truth for scoring only; deliberately read off the
            // raw frame so the guard's audit stays a pure account of
            // what the model saw.
            let y_true = frame.y_window(t, h);
            let step_mse = mse(&yhat, &y_true)?;
            let step_mae = mae(&yhat, &y_true)?;
            if !step_mse.is_finite() {
                return Err(EngineError::Diverged("online forecasting"));
            }
            sum_mse += step_mse;
            sum_mae += step_mae;
            test_steps += 1;
            if cfg.record_trace {
                trace.push((t, step_mse));
            }
        }
    }

    let audit = stream.audit();
    let (adapter_params, naive_adapter_params) = match adapter {
        Some(ad) => (
            Some(adapter_param_count(&ad.generator, model.registry())),
            Some(naive_dense_count(model.registry(), ad.d_c())),
        ),
        None => (None, None),
    };

    Ok(RunReport {
        dataset: tags.dataset.clone(),
        model: tags.model.clone(),
        strategy: strategy.name().into(),
        variant: strategy.variant_name().into(),
        lookback: l,
        horizon: h,
        seed: tags.seed,
        mse: sum_mse / test_steps as f64,
        mae: sum_mae / test_steps as f64,
        delta_mse: None,
        delta_mae: None,
        leakage_audit: AuditSummary {
            oracle_reads: audit.oracle_reads,
            violations: audit.violations,
        },
        test_steps,
        adapter_params,
        naive_adapter_params,
        config: cfg.clone(),
        trace,
        concepts,
    })
}

/// [`run_online`] under one ablation of the proactive strategy.
pub fn run_variant(
    variant: Variant,
    model: &mut ForecastModel,
    adapter: Option<&DriftAdapter>,
    frame: &SeriesFrame,
    split: &SplitIndices,
    cfg: &OnlineConfig,
    tags: &ReportTags,
) -> Result<RunReport, EngineError> {
    let mut cfg = cfg.clone();
    cfg.strategy = Strategy::ProceedVariant(variant);
    run_online(model, adapter, frame, split, &cfg, tags)
}
