//! Forecast losses.
//!
//! Per-sample convention: squared (or absolute) error summed over every
//! entry of the N×H matrices, divided by the number of variates N — not
//! by the horizon. Callers average over samples or test steps.

use crate::nncore::{NncoreError, Tensor};

fn check(yhat: &Tensor, y: &Tensor) -> Result<usize, NncoreError> {
    if yhat.shape() != y.shape() || yhat.shape().len() != 2 {
        return Err(NncoreError::ShapeMismatch {
            context: "loss operands",
            expected: y.shape().to_vec(),
            got: yhat.shape().to_vec(),
        });
    }
    Ok(yhat.shape()[0])
}

pub fn mse(yhat: &Tensor, y: &Tensor) -> Result<f64, NncoreError> {
    let n = check(yhat, y)?;
    let sum: f64 = yhat
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n as f64)
}

pub fn mae(yhat: &Tensor, y: &Tensor) -> Result<f64, NncoreError> {
    let n = check(yhat, y)?;
    let sum: f64 = yhat
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / n as f64)
}

/// MSE plus its gradient with respect to `yhat`: 2(ŷ−y)/N.
pub fn mse_with_grad(yhat: &Tensor, y: &Tensor) -> Result<(f64, Tensor), NncoreError> {
    let n = check(yhat, y)? as f64;
    let mut grad = Tensor::zeros(yhat.shape());
    let mut sum = 0.0;
    for ((g, a), b) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(yhat.as_slice())
        .zip(y.as_slice())
    {
        let d = a - b;
        sum += d * d;
        *g = 2.0 * d / n;
    }
    Ok((sum / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_forecast_has_zero_loss() {
        let y = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 0.5, 4.0, 0.0, 3.0]).unwrap();
        assert_eq!(mse(&y, &y).unwrap(), 0.0);
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn per_variate_convention() {
        // One variate, horizon 2, unit errors everywhere: the sum of
        // squares is divided by N=1, not by H.
        let yhat = Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap();
        let y = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        assert_eq!(mse(&yhat, &y).unwrap(), 2.0);
        assert_eq!(mae(&yhat, &y).unwrap(), 2.0);
    }

    #[test]
    fn error_homogeneity() {
        let y = Tensor::zeros(&[2, 2]);
        let e1 = Tensor::from_vec(&[2, 2], vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let mut e2 = e1.clone();
        for v in e2.as_mut_slice() {
            *v *= 2.0;
        }
        assert!((mse(&e2, &y).unwrap() - 4.0 * mse(&e1, &y).unwrap()).abs() < 1e-12);
        assert!((mae(&e2, &y).unwrap() - 2.0 * mae(&e1, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let yhat = Tensor::from_vec(&[2, 2], vec![0.3, 1.0, -0.7, 2.0]).unwrap();
        let y = Tensor::from_vec(&[2, 2], vec![0.0, 1.5, 0.2, 2.0]).unwrap();
        let (_, grad) = mse_with_grad(&yhat, &y).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let mut up = yhat.clone();
            up.as_mut_slice()[i] += h;
            let mut down = yhat.clone();
            down.as_mut_slice()[i] -= h;
            let fd = (mse(&up, &y).unwrap() - mse(&down, &y).unwrap()) / (2.0 * h);
            assert!((grad.as_slice()[i] - fd).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn symmetry_and_nonnegativity(vals in prop::collection::vec(-1e3f64..1e3, 8)) {
            let a = Tensor::from_vec(&[2, 2], vals[..4].to_vec()).unwrap();
            let b = Tensor::from_vec(&[2, 2], vals[4..].to_vec()).unwrap();
            let ab = mse(&a, &b).unwrap();
            let ba = mse(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(mae(&a, &b).unwrap(), mae(&b, &a).unwrap());
            if a != b {
                prop_assert!(ab > 0.0);
            }
        }
    }
}
