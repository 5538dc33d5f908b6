use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DataError, SeriesFrame};

/// Per-regime dynamics: an autoregression over the previous `ar.len()`
/// steps plus a sinusoid and white noise.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSpec {
    pub ar: Vec<f64>,
    pub amplitude: f64,
    pub period: f64,
    pub noise: f64,
}

/// Regime-switching generator spec. `schedule` lists `(start, regime_id)`
/// with 1-based starts; each entry governs from its start until the next
/// entry (the last one until `n_steps`). A valid schedule must revisit at
/// least two distinct regimes at non-adjacent positions, so the stream
/// contains genuine recurring drift rather than a single long transition.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_variates: usize,
    pub n_steps: usize,
    pub regimes: Vec<RegimeSpec>,
    pub schedule: Vec<(usize, usize)>,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Fixed benchmark stream: 4 variates, 6000 steps, three regimes with
    /// contrasting amplitude and periodicity cycling in 250-step blocks.
    pub fn desk_default() -> SyntheticSpec {
        let regimes = vec![
            RegimeSpec {
                ar: vec![0.5, -0.2],
                amplitude: 1.0,
                period: 24.0,
                noise: 0.1,
            },
            RegimeSpec {
                ar: vec![-0.4, 0.1],
                amplitude: 3.0,
                period: 12.0,
                noise: 0.1,
            },
            RegimeSpec {
                ar: vec![0.7, -0.3],
                amplitude: 0.5,
                period: 48.0,
                noise: 0.1,
            },
        ];
        let schedule = (0..24).map(|b| (b * 250 + 1, b % 3)).collect();
        SyntheticSpec {
            n_variates: 4,
            n_steps: 6000,
            regimes,
            schedule,
            seed: 7,
        }
    }
}

fn validate(spec: &SyntheticSpec) -> Result<(), DataError> {
    let bad = |msg: String| Err(DataError::BadSchedule(msg));
    if spec.n_variates == 0 || spec.n_steps == 0 {
        return bad("need at least one variate and one step".into());
    }
    if spec.regimes.is_empty() {
        return bad("no regimes defined".into());
    }
    if spec.schedule.is_empty() {
        return bad("empty schedule".into());
    }
    if spec.schedule[0].0 != 1 {
        return bad(format!(
            "schedule must start at step 1, got {}",
            spec.schedule[0].0
        ));
    }
    for pair in spec.schedule.windows(2) {
        if pair[1].0 <= pair[0].0 {
            return bad(format!(
                "starts must be strictly increasing, got {} after {}",
                pair[1].0, pair[0].0
            ));
        }
    }
    if let Some(&(start, _)) = spec.schedule.iter().find(|&&(s, _)| s > spec.n_steps) {
        return bad(format!(
            "start {start} lies past the last step {}",
            spec.n_steps
        ));
    }
    if let Some(&(_, id)) = spec
        .schedule
        .iter()
        .find(|&&(_, id)| id >= spec.regimes.len())
    {
        return bad(format!(
            "regime id {id} out of range, only {} defined",
            spec.regimes.len()
        ));
    }
    let mut recurring = 0usize;
    for id in 0..spec.regimes.len() {
        let positions: Vec<usize> = spec
            .schedule
            .iter()
            .enumerate()
            .filter(|(_, &(_, r))| r == id)
            .map(|(i, _)| i)
            .collect();
        if positions.windows(2).any(|p| p[1] > p[0] + 1) {
            recurring += 1;
        }
    }
    if recurring < 2 {
        return bad(format!(
            "need at least two regimes recurring at non-adjacent slots, found {recurring}"
        ));
    }
    Ok(())
}

/// Generates the stream and the per-step regime label. The AR state runs
/// through regime switches uninterrupted, so each switch produces a
/// transient rather than a reset. Variate `v` carries a phase offset of
/// `v / n_variates` of a period. Identical specs generate bit-identical
/// output.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(SeriesFrame, Vec<usize>), DataError> {
    validate(spec)?;
    let mut labels = vec![0usize; spec.n_steps];
    {
        let mut seg = 0usize;
        for t in 1..=spec.n_steps {
            while seg + 1 < spec.schedule.len() && spec.schedule[seg + 1].0 <= t {
                seg += 1;
            }
            labels[t - 1] = spec.schedule[seg].1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut per_variate = vec![vec![0.0f64; spec.n_steps]; spec.n_variates];
    for t in 1..=spec.n_steps {
        let regime = &spec.regimes[labels[t - 1]];
        for (v, series) in per_variate.iter_mut().enumerate() {
            let mut x = 0.0;
            for (j, &coef) in regime.ar.iter().enumerate() {
                if t > j + 1 {
                    x += coef * series[t - 2 - j];
                }
            }
            let phase = regime.period * v as f64 / spec.n_variates as f64;
            x += regime.amplitude
                * (2.0 * std::f64::consts::PI * (t as f64 + phase) / regime.period).sin();
            let draw: f64 = rng.sample(StandardNormal);
            x += regime.noise * draw;
            series[t - 1] = x;
        }
    }
    let names = (0..spec.n_variates).map(|v| format!("s{v}")).collect();
    Ok((SeriesFrame::from_parts(names, per_variate), labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_regime_spec() -> SyntheticSpec {
        let regime = RegimeSpec {
            ar: vec![],
            amplitude: 1.0,
            period: 8.0,
            noise: 0.0,
        };
        SyntheticSpec {
            n_variates: 1,
            n_steps: 64,
            regimes: vec![regime.clone(), regime],
            schedule: vec![(1, 0), (17, 1), (33, 0), (49, 1)],
            seed: 3,
        }
    }

    #[test]
    fn identical_specs_generate_identical_frames() {
        let spec = SyntheticSpec::desk_default();
        let (a, la) = generate_synthetic(&spec).unwrap();
        let (b, lb) = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn noiseless_ar_free_stream_is_a_pure_sinusoid() {
        // Both schedule entries point at regimes with equal parameters, so
        // the whole stream must be sin(2*pi*t/8) exactly.
        let spec = two_regime_spec();
        let (frame, labels) = generate_synthetic(&spec).unwrap();
        for t in 1..=64usize {
            let want = (2.0 * std::f64::consts::PI * t as f64 / 8.0).sin();
            assert!(
                (frame.value(0, t) - want).abs() < 1e-12,
                "step {t}: {} vs {want}",
                frame.value(0, t)
            );
        }
        assert_eq!(labels[0], 0);
        assert_eq!(labels[16], 1);
        assert_eq!(labels[32], 0);
        assert_eq!(labels[63], 1);
    }

    #[test]
    fn labels_follow_the_schedule_boundaries() {
        let (_, labels) = generate_synthetic(&SyntheticSpec::desk_default()).unwrap();
        assert_eq!(labels.len(), 6000);
        assert_eq!(labels[0], 0);
        assert_eq!(labels[249], 0);
        assert_eq!(labels[250], 1);
        assert_eq!(labels[499], 1);
        assert_eq!(labels[500], 2);
        assert_eq!(labels[5999], 2);
    }

    #[test]
    fn schedule_validation_rejects_malformed_inputs() {
        let reason = |spec: &SyntheticSpec| match generate_synthetic(spec).unwrap_err() {
            DataError::BadSchedule(msg) => msg,
            other => panic!("unexpected error {other:?}"),
        };

        let mut spec = two_regime_spec();
        spec.schedule = vec![];
        assert!(reason(&spec).contains("empty"));

        let mut spec = two_regime_spec();
        spec.schedule[0].0 = 2;
        assert!(reason(&spec).contains("start at step 1"));

        let mut spec = two_regime_spec();
        spec.schedule[2].0 = spec.schedule[1].0;
        assert!(reason(&spec).contains("strictly increasing"));

        let mut spec = two_regime_spec();
        spec.schedule[3].0 = 1000;
        assert!(reason(&spec).contains("past the last step"));

        let mut spec = two_regime_spec();
        spec.schedule[1].1 = 9;
        assert!(reason(&spec).contains("out of range"));
    }

    #[test]
    fn schedule_without_recurring_regimes_is_rejected() {
        // One-way progression 0 -> 1: nothing recurs.
        let mut spec = two_regime_spec();
        spec.schedule = vec![(1, 0), (33, 1)];
        assert!(matches!(
            generate_synthetic(&spec).unwrap_err(),
            DataError::BadSchedule(_)
        ));
        // Only one regime recurs non-adjacently: still rejected.
        let mut spec = two_regime_spec();
        spec.schedule = vec![(1, 0), (17, 1), (33, 0)];
        assert!(matches!(
            generate_synthetic(&spec).unwrap_err(),
            DataError::BadSchedule(_)
        ));
        // The desk default satisfies the rule.
        assert!(generate_synthetic(&SyntheticSpec::desk_default()).is_ok());
    }

    #[test]
    fn variates_carry_distinct_phases() {
        let mut spec = two_regime_spec();
        spec.n_variates = 2;
        let (frame, _) = generate_synthetic(&spec).unwrap();
        let same = (1..=spec.n_steps).all(|t| frame.value(0, t) == frame.value(1, t));
        assert!(!same, "phase offset must separate the variates");
    }
}
