//! Mean-reduced losses returning `(value, ∂value/∂prediction)`.

use super::tensor::{Float, Tensor};
use super::NnError;

pub const PROB_CLAMP: f64 = 1e-7;

fn clamp_prob<T: Float>(p: T) -> (T, bool) {
    let lo = T::lit(PROB_CLAMP);
    let hi = T::lit(1.0 - PROB_CLAMP);
    if p < lo {
        (lo, true)
    } else if p > hi {
        (hi, true)
    } else {
        (p, false)
    }
}

/// Binary cross-entropy averaged over elements. Targets are 0 or 1.
pub fn loss_bce<T: Float>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>), NnError> {
    target.expect_shape(pred.shape())?;
    let n = T::lit(pred.len() as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let (pc, clamped) = clamp_prob(p);
        total -= t * pc.ln() + (T::one() - t) * (T::one() - pc).ln();
        grad.push(if clamped {
            T::zero()
        } else {
            (-t / pc + (T::one() - t) / (T::one() - pc)) / n
        });
    }
    Ok((total / n, Tensor::new(pred.shape().to_vec(), grad)?))
}

/// Categorical cross-entropy `−Σ t·ln p` over the last axis, averaged over
/// any leading axes. `probs` are softmax outputs, `target` one-hot rows.
pub fn loss_ce<T: Float>(probs: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>), NnError> {
    target.expect_shape(probs.shape())?;
    let classes = *probs.shape().last().expect("non-empty shape");
    let rows = T::lit((probs.len() / classes) as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(probs.len());
    for (&p, &t) in probs.data().iter().zip(target.data()) {
        let (pc, clamped) = clamp_prob(p);
        total -= t * pc.ln();
        grad.push(if clamped { T::zero() } else { -t / pc / rows });
    }
    Ok((total / rows, Tensor::new(probs.shape().to_vec(), grad)?))
}

/// Mean absolute error. The subgradient at equality is 0.
pub fn loss_l1<T: Float>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>), NnError> {
    target.expect_shape(pred.shape())?;
    let n = T::lit(pred.len() as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        total += d.abs();
        grad.push(if d > T::zero() {
            T::one() / n
        } else if d < T::zero() {
            -T::one() / n
        } else {
            T::zero()
        });
    }
    Ok((total / n, Tensor::new(pred.shape().to_vec(), grad)?))
}
