//! Central finite differences, the reference every backward pass is checked against.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::params::Params;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Tolerance applied to [`relative_error`] across the gradient suite.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

/// `g[i] = (f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every coordinate.
pub fn finite_diff_gradient<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> f64,
{
    let mut probe = x.clone();
    let mut grad = x.zeros_like();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective not finite when perturbing coordinate {i}"
            )));
        }
        grad.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// `max|a − g| / max(1, max|g|)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, g)| (a - g).abs())
        .fold(0.0, f64::max);
    let scale = numeric.iter().map(|g| g.abs()).fold(1.0, f64::max);
    diff / scale
}

/// Compare `analytic` against finite differences of `loss` for every tensor
/// of `params`; returns `(name, relative error)` in traversal order.
pub fn param_gradient_errors<P, F>(
    params: &P,
    analytic: &P,
    mut loss: F,
    h: f64,
) -> Result<Vec<(String, f64)>>
where
    P: Params + Clone,
    F: FnMut(&P) -> f64,
{
    let theirs = analytic.named_tensors();
    let mine = params.named_tensors();
    if theirs.len() != mine.len() {
        return Err(Error::dim("gradient layout differs from parameter layout"));
    }
    let mut report = Vec::with_capacity(mine.len());
    for (idx, ((name, tensor), (_, grad))) in mine.into_iter().zip(theirs).enumerate() {
        let mut probe = params.clone();
        let num = finite_diff_gradient(
            |t| {
                let mut i = 0;
                probe.visit_mut("", &mut |_, dst| {
                    if i == idx {
                        dst.data_mut().copy_from_slice(t.data());
                    }
                    i += 1;
                });
                loss(&probe)
            },
            &tensor,
            h,
        )?;
        if grad.shape() != num.shape() {
            return Err(Error::dim(format!(
                "gradient of {name} has shape {:?}",
                grad.shape()
            )));
        }
        report.push((name, relative_error(grad.data(), num.data())));
    }
    Ok(report)
}

fn set_coordinate<P: Params>(params: &mut P, tensor: usize, i: usize, value: f64) {
    let mut k = 0;
    params.visit_mut("", &mut |_, t| {
        if k == tensor {
            t.data_mut()[i] = value;
        }
        k += 1;
    });
}

/// As [`param_gradient_errors`], but differences at most `per_tensor`
/// coordinates of each tensor, drawn without replacement by `rng`.
pub fn sampled_param_gradient_errors<P, F, R>(
    params: &P,
    analytic: &P,
    mut loss: F,
    h: f64,
    per_tensor: usize,
    rng: &mut R,
) -> Result<Vec<(String, f64)>>
where
    P: Params + Clone,
    F: FnMut(&P) -> f64,
    R: Rng + ?Sized,
{
    let theirs = analytic.named_tensors();
    let mine = params.named_tensors();
    if theirs.len() != mine.len() {
        return Err(Error::dim("gradient layout differs from parameter layout"));
    }
    let mut report = Vec::with_capacity(mine.len());
    for (idx, ((name, tensor), (_, grad))) in mine.into_iter().zip(theirs).enumerate() {
        if grad.shape() != tensor.shape() {
            return Err(Error::dim(format!(
                "gradient of {name} has shape {:?}",
                grad.shape()
            )));
        }
        let coords = sample(rng, tensor.len(), per_tensor.min(tensor.len())).into_vec();
        let mut probe = params.clone();
        let (mut a, mut g) = (
            Vec::with_capacity(coords.len()),
            Vec::with_capacity(coords.len()),
        );
        for i in coords {
            let orig = tensor.data()[i];
            set_coordinate(&mut probe, idx, i, orig + h);
            let plus = loss(&probe);
            set_coordinate(&mut probe, idx, i, orig - h);
            let minus = loss(&probe);
            set_coordinate(&mut probe, idx, i, orig);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "objective not finite when perturbing {name}[{i}]"
                )));
            }
            a.push(grad.data()[i]);
            g.push((plus - minus) / (2.0 * h));
        }
        report.push((name, relative_error(&a, &g)));
    }
    Ok(report)
}
