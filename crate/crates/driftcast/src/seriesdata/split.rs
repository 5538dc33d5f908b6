use super::{DataError, SeriesFrame};

/// Inclusive 1-based boundaries of a chronological split. Train covers
/// `1..=train_end`, validation `train_end+1..=valid_end`, test
/// `valid_end+1..=test_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitIndices {
    pub train_end: usize,
    pub valid_end: usize,
    pub test_end: usize,
}

/// Splits by floor of the cumulative ratio; the test segment absorbs the
/// remainder so the three segments always partition `1..=n_steps`.
pub fn chronological_split(
    frame: &SeriesFrame,
    ratios: (f64, f64, f64),
) -> Result<SplitIndices, DataError> {
    let (r1, r2, r3) = ratios;
    let sum = r1 + r2 + r3;
    let t = frame.n_steps();
    if !(r1 >= 0.0 && r2 >= 0.0 && r3 >= 0.0 && sum > 0.0 && sum.is_finite()) {
        return Err(DataError::DegenerateSplit {
            train: 0,
            valid: 0,
            test: 0,
        });
    }
    let train_end = (t as f64 * r1 / sum).floor() as usize;
    let valid_end = (t as f64 * (r1 + r2) / sum).floor() as usize;
    let test_end = t;
    if train_end < 1 || valid_end <= train_end || test_end <= valid_end {
        return Err(DataError::DegenerateSplit {
            train: train_end,
            valid: valid_end.saturating_sub(train_end),
            test: test_end.saturating_sub(valid_end),
        });
    }
    Ok(SplitIndices {
        train_end,
        valid_end,
        test_end,
    })
}
