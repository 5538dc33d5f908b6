//! Series data handling: frames, chronological splits, rolling windows,
//! train-range standardization, synthetic regime-switching generation,
//! and a leakage-guarded stream view for online runs.
//!
//! Time indices are 1-based everywhere in this crate (a lookback window
//! with origin t ends at v_t; the target starts at v_{t+1}); conversion
//! to 0-based storage happens exactly once, inside the frame accessors.

mod frame;
mod guard;
mod split;
mod standardize;
mod synthetic;
mod windows;

pub use frame::{load_csv, SeriesFrame};
pub use guard::{guarded_view, GuardedStream, LeakageAudit};
pub use split::{chronological_split, SplitIndices};
pub use standardize::{standardize, StandardizeRecord, VariateStats};
pub use synthetic::{generate_synthetic, RegimeSpec, SyntheticSpec};
pub use windows::{make_windows, WindowSample};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("csv read: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row} has {got} cells, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("cell at data row {row}, value column {col} is not a finite number")]
    NonNumericCell { row: usize, col: usize },
    #[error("no usable data (zero rows or zero value columns)")]
    EmptyData,
    #[error("degenerate split: segments (train {train}, valid {valid}, test {test}) must all be nonempty")]
    DegenerateSplit {
        train: usize,
        valid: usize,
        test: usize,
    },
    #[error("no valid window origin in the requested range")]
    EmptyRange,
    #[error("bad synthetic schedule: {0}")]
    BadSchedule(String),
    #[error("leakage violation: read of index {index} past clock {clock}")]
    LeakageViolation { index: usize, clock: usize },
}
