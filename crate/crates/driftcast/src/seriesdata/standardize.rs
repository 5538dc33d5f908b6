use super::{DataError, SeriesFrame};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariateStats {
    pub mean: f64,
    pub std: f64,
    /// True when the variate was constant over the stats range and its
    /// std was clamped to 1 to keep the transform invertible.
    pub clamped: bool,
}

/// Per-variate affine transform fitted on one range, applicable to the
/// whole frame and exactly invertible.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizeRecord {
    pub stats: Vec<VariateStats>,
}

impl StandardizeRecord {
    /// Maps a standardized frame back to original units.
    pub fn invert(&self, frame: &SeriesFrame) -> SeriesFrame {
        assert_eq!(frame.n_variates(), self.stats.len(), "stats arity");
        frame.map_values(|v, x| x * self.stats[v].std + self.stats[v].mean)
    }

    /// Inverse transform for a single value of variate `v`.
    pub fn invert_value(&self, v: usize, x: f64) -> f64 {
        x * self.stats[v].std + self.stats[v].mean
    }
}

/// Standardizes every variate with the mean and population std computed
/// over the inclusive 1-based `stats_range` only (the fit range leaks no
/// information from later segments), then applies the transform to all
/// steps.
pub fn standardize(
    frame: &SeriesFrame,
    stats_range: (usize, usize),
) -> Result<(SeriesFrame, StandardizeRecord), DataError> {
    let (lo, hi) = stats_range;
    if lo < 1 || hi > frame.n_steps() || lo > hi {
        return Err(DataError::EmptyRange);
    }
    let n = (hi - lo + 1) as f64;
    let mut stats = Vec::with_capacity(frame.n_variates());
    for v in 0..frame.n_variates() {
        let slice = &frame.variate(v)[lo - 1..hi];
        let mean = slice.iter().sum::<f64>() / n;
        let var = slice.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let raw_std = var.sqrt();
        let clamped = raw_std == 0.0;
        stats.push(VariateStats {
            mean,
            std: if clamped { 1.0 } else { raw_std },
            clamped,
        });
    }
    let out = frame.map_values(|v, x| (x - stats[v].mean) / stats[v].std);
    Ok((out, StandardizeRecord { stats }))
}
