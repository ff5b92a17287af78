use super::Scalar;
use crate::error::{Error, Result};

/// Log floor applied inside cross-entropy.
pub const LOG_FLOOR: f64 = 1e-8;

/// `-sum_i target_i * ln(max(probs_i, 1e-8))` for a one-hot `target`.
pub fn cross_entropy<T: Scalar>(probs: &[T], target: &[T]) -> Result<T> {
    if probs.len() != target.len() || probs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "cross_entropy: {} probabilities vs {} targets",
            probs.len(),
            target.len()
        )));
    }
    let ones = target.iter().filter(|&&t| t == T::one()).count();
    let zeros = target.iter().filter(|&&t| t == T::zero()).count();
    if ones != 1 || ones + zeros != target.len() {
        return Err(Error::InvalidArgument("cross_entropy: target is not one-hot".into()));
    }
    let sum: T = probs.iter().copied().sum();
    if probs.iter().any(|&p| p < T::zero()) || (sum.as_f64() - 1.0).abs() > 1e-5 {
        return Err(Error::InvalidArgument(format!(
            "cross_entropy: probabilities must be non-negative and sum to 1 (sum = {})",
            sum.as_f64()
        )));
    }
    let floor = T::of(LOG_FLOOR);
    Ok(probs
        .iter()
        .zip(target)
        .map(|(&p, &t)| -t * p.max(floor).ln())
        .sum())
}

/// Gradient of softmax followed by cross-entropy w.r.t. the pre-softmax
/// logits: `probs - target`.
pub fn cross_entropy_logit_grad<T: Scalar>(probs: &[T], target: &[T]) -> Vec<T> {
    probs.iter().zip(target).map(|(&p, &t)| p - t).collect()
}

/// Huber loss of a residual and its derivative w.r.t. the residual.
pub fn huber<T: Scalar>(residual: T, delta: T) -> (T, T) {
    let half = T::of(0.5);
    if residual.abs() <= delta {
        (half * residual * residual, residual)
    } else {
        (delta * (residual.abs() - half * delta), delta * residual.signum())
    }
}

/// One-hot vector at the argmax, lowest index winning ties.
pub fn one_hot_argmax<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); values.len()];
    if let Some(i) = argmax(values) {
        out[i] = T::one();
    }
    out
}

/// Index of the maximum, lowest index winning ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if !(v > values[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}
