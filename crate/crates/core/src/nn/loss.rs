use super::tensor::{Scalar, Tensor};
use super::NnError;

/// Probability clamp keeping the logs finite.
const CLAMP: f64 = 1e-7;

fn check_shapes<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(), NnError> {
    if pred.shape() != target.shape() {
        return Err(NnError::ShapeMismatch { expected: pred.shape(), got: target.shape() });
    }
    Ok(())
}

fn clamp_prob<T: Scalar>(p: T) -> T {
    p.maxs(T::from_f64(CLAMP)).mins(T::from_f64(1.0 - CLAMP))
}

/// Mean binary cross-entropy; accepts fractional (soft) targets.
pub fn loss_bce<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T, NnError> {
    check_shapes(pred, target)?;
    let n = T::from_f64(pred.numel() as f64);
    let sum: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let p = clamp_prob(p);
            -(t * p.ln() + (T::ONE - t) * (T::ONE - p).ln())
        })
        .sum();
    Ok(sum / n)
}

/// Gradient of [`loss_bce`] w.r.t. the predictions.
pub fn loss_bce_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    check_shapes(pred, target)?;
    let inv_n = T::ONE / T::from_f64(pred.numel() as f64);
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let p = clamp_prob(p);
            (p - t) / (p * (T::ONE - p)) * inv_n
        })
        .collect();
    Ok(Tensor::from_vec(pred.shape(), data))
}

/// Mean focal loss
/// `alpha*(1-p)^gamma*t*(-ln p) + (1-alpha)*p^gamma*(1-t)*(-ln(1-p))`.
///
/// With `gamma = 0, alpha = 0.5` this reduces to `0.5 *` BCE.
pub fn loss_focal<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    gamma: T,
    alpha: T,
) -> Result<T, NnError> {
    check_shapes(pred, target)?;
    let n = T::from_f64(pred.numel() as f64);
    let sum: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let p = clamp_prob(p);
            let pos = alpha * (T::ONE - p).powf(gamma) * t * (-(p.ln()));
            let neg = (T::ONE - alpha) * p.powf(gamma) * (T::ONE - t) * (-((T::ONE - p).ln()));
            pos + neg
        })
        .sum();
    Ok(sum / n)
}

/// Gradient of [`loss_focal`] w.r.t. the predictions.
pub fn loss_focal_backward<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    gamma: T,
    alpha: T,
) -> Result<Tensor<T>, NnError> {
    check_shapes(pred, target)?;
    let inv_n = T::ONE / T::from_f64(pred.numel() as f64);
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let p = clamp_prob(p);
            let q = T::ONE - p;
            // d/dp [(1-p)^g * (-ln p)] = g*(1-p)^(g-1)*ln(p) - (1-p)^g / p
            let dpos = if gamma.to_f64() == 0.0 {
                -(T::ONE / p)
            } else {
                gamma * q.powf(gamma - T::ONE) * p.ln() - q.powf(gamma) / p
            };
            // d/dp [p^g * (-ln(1-p))] = g*p^(g-1)*(-ln(1-p)) + p^g / (1-p)
            let dneg = if gamma.to_f64() == 0.0 {
                T::ONE / q
            } else {
                gamma * p.powf(gamma - T::ONE) * (-(q.ln())) + p.powf(gamma) / q
            };
            (alpha * t * dpos + (T::ONE - alpha) * (T::ONE - t) * dneg) * inv_n
        })
        .collect();
    Ok(Tensor::from_vec(pred.shape(), data))
}
