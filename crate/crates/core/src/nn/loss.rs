use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{arg, Error, Result};

/// Critic regression loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Loss {
    /// Mean of squared errors.
    Mse,
    /// Quadratic inside `|e| <= delta`, linear outside.
    Huber { delta: f64 },
}

impl Loss {
    /// Weighted mean loss and its gradient with respect to `pred`.
    pub fn evaluate(&self, pred: &Tensor, target: &Tensor, weights: Option<&[f64]>) -> Result<(f64, Tensor)> {
        match *self {
            Loss::Mse => mse_loss_weighted(pred, target, weights),
            Loss::Huber { delta } => huber_loss_weighted(pred, target, weights, delta),
        }
    }
}

fn check(pred: &Tensor, target: &Tensor, weights: Option<&[f64]>) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!("prediction {:?} vs target {:?}", pred.shape(), target.shape())));
    }
    if let Some(w) = weights {
        if w.len() != pred.len() {
            return Err(Error::Shape(format!("{} weights for {} elements", w.len(), pred.len())));
        }
    }
    Ok(())
}

/// Mean Huber loss over all elements and its gradient.
pub fn huber_loss(pred: &Tensor, target: &Tensor, delta: f64) -> Result<(f64, Tensor)> {
    huber_loss_weighted(pred, target, None, delta)
}

/// `(1/n) Σ w_i L_δ(e_i)` with `e = pred - target`; weights default to 1.
pub fn huber_loss_weighted(pred: &Tensor, target: &Tensor, weights: Option<&[f64]>, delta: f64) -> Result<(f64, Tensor)> {
    check(pred, target, weights)?;
    if !(delta > 0.0) {
        return arg(format!("huber delta must be positive, got {delta}"));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (i, (p, t)) in pred.data().iter().zip(target.data()).enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let e = p - t;
        if e.abs() <= delta {
            loss += w * 0.5 * e * e;
            grad.push(w * e / n);
        } else {
            loss += w * delta * (e.abs() - 0.5 * delta);
            grad.push(w * delta * e.signum() / n);
        }
    }
    Ok((loss / n, Tensor::new(pred.shape().to_vec(), grad)?))
}

/// `(1/n) Σ w_i e_i²`.
pub fn mse_loss_weighted(pred: &Tensor, target: &Tensor, weights: Option<&[f64]>) -> Result<(f64, Tensor)> {
    check(pred, target, weights)?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (i, (p, t)) in pred.data().iter().zip(target.data()).enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let e = p - t;
        loss += w * e * e;
        grad.push(2.0 * w * e / n);
    }
    Ok((loss / n, Tensor::new(pred.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::new(vec![1], vec![v]).unwrap()
    }

    #[test]
    fn huber_reference_values() {
        assert_eq!(huber_loss(&scalar(0.5), &scalar(0.0), 1.0).unwrap().0, 0.125);
        assert_eq!(huber_loss(&scalar(2.0), &scalar(0.0), 1.0).unwrap().0, 1.5);
        assert_eq!(huber_loss(&scalar(-2.0), &scalar(0.0), 1.0).unwrap().1.data(), &[-1.0]);
    }

    #[test]
    fn huber_is_continuous_at_delta() {
        let d = 1.3;
        let (lo, glo) = huber_loss(&scalar(d - 1e-9), &scalar(0.0), d).unwrap();
        let (hi, ghi) = huber_loss(&scalar(d + 1e-9), &scalar(0.0), d).unwrap();
        assert!((lo - hi).abs() < 1e-6);
        assert!((glo.data()[0] - ghi.data()[0]).abs() < 1e-6);
    }

    #[test]
    fn loss_errors() {
        let a = Tensor::zeros(&[2]);
        let b = Tensor::zeros(&[3]);
        assert!(huber_loss(&a, &b, 1.0).is_err());
        assert!(huber_loss(&a, &a, 0.0).is_err());
        assert!(mse_loss_weighted(&a, &a, Some(&[1.0])).is_err());
    }

    #[test]
    fn mse_matches_definition() {
        let p = Tensor::new(vec![2], vec![1.0, 3.0]).unwrap();
        let t = Tensor::new(vec![2], vec![0.0, 1.0]).unwrap();
        let (l, g) = mse_loss_weighted(&p, &t, None).unwrap();
        assert_eq!(l, 2.5);
        assert_eq!(g.data(), &[1.0, 2.0]);
    }
}
