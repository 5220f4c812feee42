use crate::error::Result;
use crate::numerics::Tensor;

/// Softmax over every position of a single-channel map.
pub fn softmax_map(logits: &Tensor) -> Result<Tensor> {
    logits.dims2()?;
    logits.ensure_finite("softmax logits")?;
    let max = logits.max();
    let exps: Vec<f64> = logits.data().iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Tensor::new(
        logits.shape(),
        exps.into_iter().map(|e| e / total).collect(),
    )
}

/// Vector-Jacobian product of [`softmax_map`] given its output.
pub fn softmax_map_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    output.ensure_same_shape(grad_out, "softmax backward")?;
    let inner = output.dot(grad_out);
    Tensor::new(
        output.shape(),
        output
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(y, g)| y * (g - inner))
            .collect(),
    )
}
