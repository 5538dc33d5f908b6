//! Offline pretraining, drift-adapter training, and the delay-aware online
//! loop with its update strategies, metrics, and gap analysis.

mod adapt_train;
mod online;
mod pretrain;

pub use adapt_train::{train_adapter, AdapterTrainRecord};
pub use online::{run_online, run_variant, ConceptRow, ReportTags};
pub use pretrain::{pretrain, PretrainRecord};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapter::{AdapterError, AggregationMode};
use crate::forecasters::{ForecastModel, ForecasterError};
use crate::nncore::{mae, mse, NncoreError};
use crate::seriesdata::{DataError, WindowSample};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("non-finite loss during {0}")]
    Diverged(&'static str),
    #[error("strategy/argument mismatch: {0}")]
    StrategyArgMismatch(&'static str),
    #[error("gap requires runs that share dataset, model, L, H, and seed")]
    ConfigMismatch,
    #[error("gap undefined: reference metric is zero")]
    ZeroDenominator,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Forecaster(#[from] ForecasterError),
    #[error(transparent)]
    Nncore(#[from] NncoreError),
}

/// Ablations of the proactive strategy. Each keeps the rest of the
/// pipeline fixed and removes or rewires exactly one piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Drop adaptation entirely; feedback updates only. Must reproduce
    /// the practical gradient baseline bit for bit.
    FeedbackOnly,
    /// Feed the current concept to the generator instead of the drift.
    ConceptOnly,
    /// One encoder for both sides, applied to lookbacks only.
    SharedEncoder,
    /// Per-layer generator heads instead of per-type shared ones.
    #[serde(rename = "unshared_w1w2")]
    UnsharedW1W2,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::FeedbackOnly => "feedback_only",
            Variant::ConceptOnly => "concept_only",
            Variant::SharedEncoder => "shared_encoder",
            Variant::UnsharedW1W2 => "unshared_w1w2",
        }
    }
}

/// How the forecaster is kept current while the stream advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// No updates at all after pretraining.
    Frozen,
    /// One gradient step per time step on the newest *complete* window,
    /// which lags the present by the horizon.
    GdPractical,
    /// Same update on the window ending one step ago; needs targets that
    /// have not arrived yet, so it only runs against an oracle stream.
    GdOptimal,
    /// Proactive low-rank adaptation from estimated concept drift, plus
    /// the same delayed feedback step.
    Proceed,
    /// An ablation of [`Strategy::Proceed`].
    ProceedVariant(Variant),
}

impl Strategy {
    /// True for strategies that require an adapter argument.
    pub fn proceed_family(self) -> bool {
        matches!(self, Strategy::Proceed | Strategy::ProceedVariant(_))
    }

    /// True when forecasts go through adapted parameters.
    pub fn uses_adaptation(self) -> bool {
        match self {
            Strategy::Proceed => true,
            Strategy::ProceedVariant(v) => v != Variant::FeedbackOnly,
            _ => false,
        }
    }

    pub fn is_oracle(self) -> bool {
        self == Strategy::GdOptimal
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Frozen => "frozen",
            Strategy::GdPractical => "gd_practical",
            Strategy::GdOptimal => "gd_optimal",
            Strategy::Proceed | Strategy::ProceedVariant(_) => "proceed",
        }
    }

    /// Ablation tag for reports; "none" for the full method and for the
    /// non-adaptive strategies.
    pub fn variant_name(self) -> &'static str {
        match self {
            Strategy::ProceedVariant(v) => v.name(),
            _ => "none",
        }
    }

    /// Parses the identifiers accepted in configs. Ablations are spelled
    /// by their own name and imply the proactive strategy.
    pub fn parse(s: &str) -> Option<Strategy> {
        Some(match s {
            "frozen" => Strategy::Frozen,
            "gd_practical" => Strategy::GdPractical,
            "gd_optimal" => Strategy::GdOptimal,
            "proceed" => Strategy::Proceed,
            "feedback_only" => Strategy::ProceedVariant(Variant::FeedbackOnly),
            "concept_only" => Strategy::ProceedVariant(Variant::ConceptOnly),
            "shared_encoder" => Strategy::ProceedVariant(Variant::SharedEncoder),
            "unshared_w1w2" => Strategy::ProceedVariant(Variant::UnsharedW1W2),
            _ => return None,
        })
    }

    /// Config identifier; ablations parse back through [`Strategy::parse`].
    pub fn ident(self) -> &'static str {
        match self {
            Strategy::ProceedVariant(v) => v.name(),
            other => other.name(),
        }
    }
}

/// Everything a single run needs beyond the model and the data. Also
/// echoed verbatim into reports so results stay self-describing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnlineConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub pretrain_lr: f64,
    /// Step size for the per-step online update; a tenth of the
    /// pretraining rate unless overridden.
    pub online_lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub d_c: usize,
    pub r: usize,
    pub aggregation: AggregationMode,
    pub seeds: Vec<u64>,
    pub strategy: Strategy,
    /// Run the delayed feedback step through the adapted parameters
    /// (coefficient gradients discarded) rather than the plain ones.
    pub feedback_through_adapter: bool,
    /// During adapter training, encode the previous batch with the
    /// lookback-only encoder instead of the lookback-and-target one.
    pub prev_batch_encoder_eprime: bool,
    /// Train only the forecaster during adapter training; the adapter
    /// keeps its initialization.
    pub freeze_adapter: bool,
    #[serde(default)]
    pub record_trace: bool,
    #[serde(default)]
    pub record_concepts: bool,
}

impl OnlineConfig {
    pub fn new(lookback: usize, horizon: usize) -> OnlineConfig {
        let pretrain_lr = 1e-3;
        OnlineConfig {
            lookback,
            horizon,
            pretrain_lr,
            online_lr: pretrain_lr * 0.1,
            epochs: 20,
            batch: 32,
            d_c: 100,
            r: 32,
            aggregation: AggregationMode::Average,
            seeds: vec![0, 1, 2],
            strategy: Strategy::Frozen,
            feedback_through_adapter: true,
            prev_batch_encoder_eprime: false,
            freeze_adapter: false,
            record_trace: false,
            record_concepts: false,
        }
    }
}

/// Leakage counters copied out of the stream guard at the end of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub oracle_reads: u64,
    pub violations: u64,
}

/// Outcome of one online run: one (dataset, model, strategy, horizon,
/// seed) cell. Serializes to the on-disk report format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub model: String,
    pub strategy: String,
    pub variant: String,
    #[serde(rename = "L")]
    pub lookback: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub seed: u64,
    pub mse: f64,
    pub mae: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta_mae: Option<f64>,
    pub leakage_audit: AuditSummary,
    pub test_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub adapter_params: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub naive_adapter_params: Option<usize>,
    pub config: OnlineConfig,
    /// Per-step test MSE, kept only when the config asks for it.
    #[serde(skip)]
    pub trace: Vec<(usize, f64)>,
    /// Per-step concept estimates, kept only when the config asks for it.
    #[serde(skip)]
    pub concepts: Vec<ConceptRow>,
}

/// Relative regret of `practical` against `optimal`, in percent, for MSE
/// and MAE. Positive means the delay cost money.
pub fn compute_gap(practical: &RunReport, optimal: &RunReport) -> Result<(f64, f64), EngineError> {
    if practical.dataset != optimal.dataset
        || practical.model != optimal.model
        || practical.lookback != optimal.lookback
        || practical.horizon != optimal.horizon
        || practical.seed != optimal.seed
    {
        return Err(EngineError::ConfigMismatch);
    }
    if optimal.mse == 0.0 || optimal.mae == 0.0 {
        return Err(EngineError::ZeroDenominator);
    }
    let dm = (practical.mse - optimal.mse) / optimal.mse * 100.0;
    let da = (practical.mae - optimal.mae) / optimal.mae * 100.0;
    Ok((dm, da))
}

/// Mean per-window MSE of the plain model over a window set.
pub fn eval_model_mse(model: &ForecastModel, windows: &[WindowSample]) -> Result<f64, EngineError> {
    assert!(!windows.is_empty(), "at least one evaluation window");
    let mut acc = 0.0;
    for s in windows {
        let yhat = model.forward(&s.x)?;
        acc += mse(&yhat, &s.y)?;
    }
    Ok(acc / windows.len() as f64)
}

/// Mean per-window MAE counterpart of [`eval_model_mse`].
pub fn eval_model_mae(model: &ForecastModel, windows: &[WindowSample]) -> Result<f64, EngineError> {
    assert!(!windows.is_empty(), "at least one evaluation window");
    let mut acc = 0.0;
    for s in windows {
        let yhat = model.forward(&s.x)?;
        acc += mae(&yhat, &s.y)?;
    }
    Ok(acc / windows.len() as f64)
}
