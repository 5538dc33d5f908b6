//! Reversible per-instance normalization of lookback windows.
//!
//! Statistics are captured per variate over the lookback and restored on
//! the forecast. No learned affine parameters, so nothing here enters
//! the adaptable parameter set.

use crate::nncore::{NncoreError, Tensor};

/// Divisor floor; variates with std below this normalize through the
/// clamped path instead of dividing by ~0.
pub const REVIN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct RevinState {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub eps: f64,
}

impl RevinState {
    /// Divisor actually applied to variate `i` (population std clamped
    /// to eps from below), also the backward scale through denormalize.
    pub fn divisor(&self, i: usize) -> f64 {
        self.std[i].max(self.eps)
    }
}

/// Normalize an N×L lookback per variate to mean 0 / std 1 (population
/// convention) and capture the statistics.
pub fn revin_normalize(x: &Tensor, eps: f64) -> Result<(Tensor, RevinState), NncoreError> {
    if x.shape().len() != 2 || x.shape()[1] == 0 {
        return Err(NncoreError::ShapeMismatch {
            context: "revin_normalize input",
            expected: vec![0, 1],
            got: x.shape().to_vec(),
        });
    }
    let (n, l) = (x.shape()[0], x.shape()[1]);
    let mut mean = vec![0.0; n];
    let mut std = vec![0.0; n];
    let mut out = x.clone();
    for i in 0..n {
        let row = x.row(i);
        let mu = row.iter().sum::<f64>() / l as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / l as f64;
        mean[i] = mu;
        std[i] = var.sqrt();
        let div = std[i].max(eps);
        for v in out.row_mut(i) {
            *v = (*v - mu) / div;
        }
    }
    Ok((out, RevinState { mean, std, eps }))
}

/// Restore captured statistics onto an N×H forecast: ŷ·std + mean.
pub fn revin_denormalize(y: &Tensor, state: &RevinState) -> Result<Tensor, NncoreError> {
    if y.shape().len() != 2 || y.shape()[0] != state.mean.len() {
        return Err(NncoreError::ShapeMismatch {
            context: "revin_denormalize input",
            expected: vec![state.mean.len(), 0],
            got: y.shape().to_vec(),
        });
    }
    let mut out = y.clone();
    for i in 0..state.mean.len() {
        let div = state.divisor(i);
        let mu = state.mean[i];
        for v in out.row_mut(i) {
            *v = *v * div + mu;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_stats_are_zero_one() {
        let x = Tensor::from_vec(&[2, 4], vec![1.0, 2.0, 3.0, 4.0, -5.0, 0.0, 5.0, 10.0]).unwrap();
        let (xn, _) = revin_normalize(&x, REVIN_EPS).unwrap();
        for i in 0..2 {
            let row = xn.row(i);
            let mu = row.iter().sum::<f64>() / 4.0;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 4.0;
            assert!(mu.abs() < 1e-10);
            assert!((var.sqrt() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_model_denormalizes_to_input_statistics() {
        // Forward the normalized window through the identity "forecast"
        // (repeat the last normalized value): constant inputs come back
        // as the per-variate mean.
        let x = Tensor::from_vec(&[1, 3], vec![7.0, 7.0, 7.0]).unwrap();
        let (xn, st) = revin_normalize(&x, REVIN_EPS).unwrap();
        let last = xn.at2(0, 2);
        let yhat = Tensor::from_vec(&[1, 2], vec![last, last]).unwrap();
        let y = revin_denormalize(&yhat, &st).unwrap();
        for v in y.as_slice() {
            assert!((v - 7.0).abs() < 1e-9);
        }
    }

    #[test]
    fn round_trip_inverts() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0, 4.0, -2.0, 0.5, 0.7, 0.9]).unwrap();
        let (xn, st) = revin_normalize(&x, REVIN_EPS).unwrap();
        let back = revin_denormalize(&xn, &st).unwrap();
        for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_variate_uses_clamped_divisor() {
        let x = Tensor::from_vec(&[1, 3], vec![5.0, 5.0, 5.0]).unwrap();
        let (xn, st) = revin_normalize(&x, REVIN_EPS).unwrap();
        assert!(xn.as_slice().iter().all(|v| *v == 0.0));
        assert_eq!(st.divisor(0), REVIN_EPS);
        assert!(st.std[0] + st.eps > 0.0);
    }
}
