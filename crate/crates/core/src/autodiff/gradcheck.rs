//! Central finite differences, used as the reference for reverse-mode gradients.

use crate::error::Result;
use crate::tensor::Tensor;

/// Estimates `∂f/∂x` elementwise by `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h`.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let original = x.data()[i];
        probe.data_mut()[i] = original + h;
        let plus = f(&probe)?;
        probe.data_mut()[i] = original - h;
        let minus = f(&probe)?;
        probe.data_mut()[i] = original;
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), grad))
}

/// Relative disagreement between an analytic and a numeric gradient:
/// `max|a − n| / max(|a|, |n|)` over the whole tensor. Tensors whose
/// largest magnitude is below `floor` report their absolute difference.
pub fn relative_error(analytic: &Tensor, numeric: &Tensor, floor: f64) -> f64 {
    let diff = analytic
        .max_abs_diff(numeric)
        .unwrap_or(f64::INFINITY);
    let scale = analytic
        .data()
        .iter()
        .chain(numeric.data())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale > floor {
        diff / scale
    } else {
        diff
    }
}
