use crate::nncore::Tensor;

use super::{DataError, SeriesFrame};

/// One supervised sample: lookback `x` of shape `[n_variates, l]` ending
/// at time `origin`, target `y` of shape `[n_variates, h]` starting at
/// `origin + 1`.
#[derive(Debug, Clone)]
pub struct WindowSample {
    pub origin: usize,
    pub x: Tensor,
    pub y: Tensor,
}

/// Materializes every (lookback, target) pair whose origin lies in the
/// inclusive `range`. Origins are clamped so the lookback never reaches
/// before time 1 and the target never past the end of the frame:
/// `max(range.0, l) <= origin <= min(range.1, n_steps - h)`.
pub fn make_windows(
    frame: &SeriesFrame,
    l: usize,
    h: usize,
    range: (usize, usize),
) -> Result<Vec<WindowSample>, DataError> {
    assert!(l >= 1 && h >= 1, "window lengths must be positive");
    let t = frame.n_steps();
    if t < h {
        return Err(DataError::EmptyRange);
    }
    let lo = range.0.max(l);
    let hi = range.1.min(t - h);
    if lo > hi {
        return Err(DataError::EmptyRange);
    }
    let mut out = Vec::with_capacity(hi - lo + 1);
    for origin in lo..=hi {
        out.push(WindowSample {
            origin,
            x: frame.x_window(origin, l),
            y: frame.y_window(origin, h),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp_frame(t: usize) -> SeriesFrame {
        SeriesFrame::from_parts(
            vec!["v".into()],
            vec![(1..=t).map(|i| i as f64).collect()],
        )
    }

    #[test]
    fn origins_are_clamped_to_feasible_bounds() {
        // 10 steps, l=3, h=2: feasible origins are 3..=8 whatever the range asks.
        let frame = ramp_frame(10);
        let ws = make_windows(&frame, 3, 2, (1, 10)).unwrap();
        let origins: Vec<usize> = ws.iter().map(|w| w.origin).collect();
        assert_eq!(origins, vec![3, 4, 5, 6, 7, 8]);
        let ws = make_windows(&frame, 3, 2, (2, 5)).unwrap();
        let origins: Vec<usize> = ws.iter().map(|w| w.origin).collect();
        assert_eq!(origins, vec![3, 4, 5]);
    }

    #[test]
    fn sample_contents_match_the_frame() {
        let frame = ramp_frame(10);
        let ws = make_windows(&frame, 3, 2, (4, 4)).unwrap();
        assert_eq!(ws.len(), 1);
        assert_eq!(ws[0].x.row(0), &[2.0, 3.0, 4.0]);
        assert_eq!(ws[0].y.row(0), &[5.0, 6.0]);
    }

    #[test]
    fn infeasible_range_is_empty() {
        let frame = ramp_frame(10);
        assert!(matches!(
            make_windows(&frame, 8, 8, (1, 10)).unwrap_err(),
            DataError::EmptyRange
        ));
        assert!(matches!(
            make_windows(&frame, 3, 2, (9, 10)).unwrap_err(),
            DataError::EmptyRange
        ));
    }

    proptest! {
        #[test]
        fn every_window_stays_in_bounds(
            t in 4usize..200,
            l in 1usize..12,
            h in 1usize..12,
            lo in 1usize..200,
            span in 0usize..200,
        ) {
            let frame = ramp_frame(t);
            if let Ok(ws) = make_windows(&frame, l, h, (lo, lo + span)) {
                prop_assert!(!ws.is_empty());
                for w in &ws {
                    prop_assert!(w.origin >= l);
                    prop_assert!(w.origin + h <= t);
                    prop_assert!(w.origin >= lo && w.origin <= lo + span);
                    // The ramp makes position checks exact.
                    prop_assert_eq!(w.x.row(0)[l - 1], w.origin as f64);
                    prop_assert_eq!(w.y.row(0)[0], (w.origin + 1) as f64);
                }
                let n = ws.len();
                prop_assert_eq!(ws[n - 1].origin - ws[0].origin + 1, n);
            }
        }
    }
}
