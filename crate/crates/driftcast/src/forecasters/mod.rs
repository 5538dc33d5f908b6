//! Reference forecast models: a direct linear map and a two-hidden-layer
//! MLP, both applied per variate with shared weights and an optional
//! reversible-normalization wrapper. Models expose the layer-type
//! registry that groups parameters of identical structure.

mod model;
mod registry;

pub use model::{build_linear, build_mlp, ForecastModel, ParamSnapshot};
pub use registry::{LayerTypeRegistry, RegistryEntry};

use thiserror::Error;

use crate::nncore::NncoreError;

#[derive(Debug, Error)]
pub enum ForecasterError {
    #[error("snapshot or checkpoint does not match the model wiring")]
    WiringMismatch,
    #[error(transparent)]
    Nncore(#[from] NncoreError),
}
