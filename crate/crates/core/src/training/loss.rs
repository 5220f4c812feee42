use crate::error::{Error, Result};
use crate::metrics::{FixationMap, MIN_STD};
use crate::numerics::Tensor;

/// Negative NSS and its exact gradient with respect to every pixel of `saliency`.
///
/// The gradient includes the dependence of the mean and the (population)
/// standard deviation on each pixel.
pub fn nss_loss(saliency: &Tensor, fixations: &FixationMap) -> Result<(f64, Tensor)> {
    let (h, w) = saliency.dims2()?;
    if (h, w) != (fixations.height(), fixations.width()) {
        return Err(Error::dim(format!(
            "saliency map is {h}×{w} but fixations are {}×{}",
            fixations.height(),
            fixations.width()
        )));
    }
    if fixations.is_empty() {
        return Err(Error::Data("empty fixation set".into()));
    }
    saliency.ensure_finite("saliency map")?;
    let s = saliency.data();
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let std = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std < MIN_STD {
        return Err(Error::Degenerate(format!(
            "saliency map is constant (σ = {std:e})"
        )));
    }
    let k = fixations.len() as f64;
    let nss = fixations
        .points()
        .iter()
        .map(|&(r, c)| (s[r * w + c] - mean) / std)
        .sum::<f64>()
        / k;
    let mut grad: Vec<f64> = s
        .iter()
        .map(|v| (1.0 / n + nss * (v - mean) / std / n) / std)
        .collect();
    for &(r, c) in fixations.points() {
        grad[r * w + c] -= 1.0 / (k * std);
    }
    Ok((-nss, Tensor::new(saliency.shape(), grad)?))
}
