use crate::nncore::Tensor;

use super::{DataError, SeriesFrame};

/// Counters kept by a [`GuardedStream`]. `oracle_reads` counts values
/// served from beyond the clock (possible only in oracle mode);
/// `violations` counts reads that were refused.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LeakageAudit {
    pub oracle_reads: u64,
    pub violations: u64,
}

/// A view of a frame that refuses to serve any value past its clock.
/// Every model-facing read in an online run goes through one of these, so
/// the audit is a complete account of what the model was shown. In oracle
/// mode future reads are served but counted, never silent.
#[derive(Debug)]
pub struct GuardedStream<'a> {
    frame: &'a SeriesFrame,
    clock: usize,
    oracle_mode: bool,
    audit: LeakageAudit,
}

/// Opens a guarded view at `clock`, `1 <= clock <= n_steps`.
pub fn guarded_view(frame: &SeriesFrame, clock: usize, oracle_mode: bool) -> GuardedStream<'_> {
    assert!(
        clock >= 1 && clock <= frame.n_steps(),
        "clock {clock} outside 1..={}",
        frame.n_steps()
    );
    GuardedStream {
        frame,
        clock,
        oracle_mode,
        audit: LeakageAudit::default(),
    }
}

impl<'a> GuardedStream<'a> {
    pub fn clock(&self) -> usize {
        self.clock
    }

    pub fn oracle_mode(&self) -> bool {
        self.oracle_mode
    }

    pub fn frame(&self) -> &'a SeriesFrame {
        self.frame
    }

    pub fn audit(&self) -> LeakageAudit {
        self.audit
    }

    /// Moves the clock forward. Time never runs backwards mid-run.
    pub fn advance_to(&mut self, clock: usize) {
        assert!(
            clock >= self.clock && clock <= self.frame.n_steps(),
            "clock must advance monotonically within the frame"
        );
        self.clock = clock;
    }

    /// Single guarded read. Past-clock reads fail unless oracle mode is
    /// on, in which case they are served and tallied.
    pub fn read(&mut self, variate: usize, t: usize) -> Result<f64, DataError> {
        if t > self.clock {
            if self.oracle_mode {
                self.audit.oracle_reads += 1;
            } else {
                self.audit.violations += 1;
                return Err(DataError::LeakageViolation {
                    index: t,
                    clock: self.clock,
                });
            }
        }
        Ok(self.frame.value(variate, t))
    }

    /// Guarded lookback block ending at `t`, shape `[n_variates, l]`.
    pub fn x_window(&mut self, t: usize, l: usize) -> Result<Tensor, DataError> {
        assert!(l >= 1 && l <= t, "lookback [{}..={t}] out of range", t + 1 - l);
        let mut out = Tensor::zeros(&[self.frame.n_variates(), l]);
        for v in 0..self.frame.n_variates() {
            for k in 0..l {
                let val = self.read(v, t - l + 1 + k)?;
                out.row_mut(v)[k] = val;
            }
        }
        Ok(out)
    }

    /// Guarded target block after `t`, shape `[n_variates, h]`.
    pub fn y_window(&mut self, t: usize, h: usize) -> Result<Tensor, DataError> {
        assert!(
            h >= 1 && t + h <= self.frame.n_steps(),
            "target [{}..={}] out of range",
            t + 1,
            t + h
        );
        let mut out = Tensor::zeros(&[self.frame.n_variates(), h]);
        for v in 0..self.frame.n_variates() {
            for k in 0..h {
                let val = self.read(v, t + 1 + k)?;
                out.row_mut(v)[k] = val;
            }
        }
        Ok(out)
    }
}
