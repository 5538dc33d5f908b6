//! Minimal dense neural-network core.
//!
//! Everything numeric is f64 and hand-rolled: a flat row-major tensor, a
//! tagged parameter store, forward/backward for affine, causal-conv and
//! GeLU primitives, MSE/MAE losses, Adam with bias correction, reversible
//! instance normalization, and a binary checkpoint format.

mod adam;
mod checkpoint;
mod layers;
mod loss;
mod params;
mod revin;
mod tensor;

pub use adam::AdamState;
pub use checkpoint::{
    read_checkpoint, write_checkpoint, CheckpointError, CheckpointSection, CKPT_MAGIC,
};
pub use layers::{
    chain_backward, chain_forward, chain_forward_cached, gelu, gelu_grad, sigmoid, ChainCache,
    LayerOp,
};
pub use loss::{mae, mse, mse_with_grad};
pub use params::{ParamKind, ParamTensor};
pub use revin::{revin_denormalize, revin_normalize, RevinState, REVIN_EPS};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NncoreError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("cache does not match the wiring/parameters it was built from")]
    StaleCache,
    #[error("wiring references parameter index {0} which does not exist")]
    BadParamIndex(usize),
}

/// FNV-1a over the raw bit patterns of a parameter list. Used by the
/// engine to assert bit-level immutability across online steps.
pub fn params_checksum(params: &[ParamTensor]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for p in params {
        for &v in p.values.as_slice() {
            for byte in v.to_bits().to_le_bytes() {
                hash ^= u64::from(byte);
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    hash
}
