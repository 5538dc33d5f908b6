//! Streaming multivariate time-series forecasting with an honest model of
//! the feedback delay of online learning, plus a drift-driven parameter
//! rescaling adapter that counteracts it.
//!
//! Module map:
//! - [`seriesdata`]: frames, chronological splits, rolling windows,
//!   standardization, a regime-switching synthetic generator, and a
//!   leakage-guarded stream view.
//! - [`nncore`]: dense tensor/parameter store, layer primitives with
//!   analytic backward passes, losses, Adam, instance normalization,
//!   and the checkpoint format.
//! - [`forecasters`]: reference per-variate linear and MLP forecast
//!   models exposing the layer-type registry the adapter consumes.
//! - [`adapter`]: concept encoders, drift estimation, the bottleneck
//!   coefficient generator, and both application forms of the
//!   multiplicative adaptation.
//! - [`engine`]: offline pretraining, adapter training on shuffled
//!   batches, the delay-aware online harness with all strategies, and
//!   gap analysis.

pub mod adapter;
pub mod engine;
pub mod forecasters;
pub mod nncore;
pub mod seriesdata;
