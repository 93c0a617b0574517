use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside the log.
pub const PROB_EPS: f64 = 1e-7;

fn clamp_prob<T: Real>(p: T) -> T {
    let eps = T::of(PROB_EPS);
    p.max(eps).min(T::one() - eps)
}

fn bce<T: Real>(p: T, y: T) -> T {
    let p = clamp_prob(p);
    -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
}

/// Cross-entropy summed over the masked-in elements.
///
/// Returns the loss and its gradient with respect to `pred`; the gradient is
/// exactly zero wherever `mask == 0`.
pub fn masked_cross_entropy<T: Real>(
    pred: &Tensor<T>,
    truth: &Tensor<T>,
    mask: &Tensor<T>,
) -> Result<(T, Tensor<T>)> {
    if pred.dims() != truth.dims() || pred.dims() != mask.dims() {
        return Err(Error::shape(
            format!("{:?}", pred.dims()),
            format!("truth {:?}, mask {:?}", truth.dims(), mask.dims()),
        ));
    }
    let mut loss = T::zero();
    let mut grad = Tensor::zeros(pred.dims());
    let eps = T::of(PROB_EPS);
    for (((g, &p), &y), &m) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(truth.data())
        .zip(mask.data())
    {
        if m == T::zero() {
            continue;
        }
        loss += m * bce(p, y);
        // derivative of the clamped loss is zero outside the clamp
        if p > eps && p < T::one() - eps {
            *g = m * (-(y / p) + (T::one() - y) / (T::one() - p));
        }
    }
    Ok((loss, grad))
}

/// Fused sigmoid + masked cross-entropy: writes `dL/dlogit = mask·(p − y)`
/// into `grad` and returns the loss.
pub fn masked_logit_grad<T: Real>(pred: &[T], truth: &[T], mask: &[T], grad: &mut [T]) -> T {
    let mut loss = T::zero();
    for i in 0..pred.len() {
        if mask[i] == T::zero() {
            grad[i] = T::zero();
            continue;
        }
        loss += mask[i] * bce(pred[i], truth[i]);
        grad[i] = mask[i] * (pred[i] - truth[i]);
    }
    loss
}
