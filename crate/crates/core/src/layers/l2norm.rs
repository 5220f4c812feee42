use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Norms below this are treated as a collapsed input.
pub const MIN_NORM: f64 = 1e-12;

/// Normalizes the whole tensor to unit L2 norm and multiplies by a learnable scale.
#[derive(Clone, Debug, PartialEq)]
pub struct L2NormScaleParams {
    /// Single-element tensor holding the scale.
    pub scale: Tensor,
}

#[derive(Clone, Debug)]
pub struct L2NormCache {
    unit: Tensor,
    norm: f64,
}

impl L2NormScaleParams {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::Config(format!(
                "L2 scale must be positive, got {scale}"
            )));
        }
        Ok(L2NormScaleParams {
            scale: Tensor::scalar(scale),
        })
    }

    pub fn value(&self) -> f64 {
        self.scale.data()[0]
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, L2NormCache)> {
        let norm = input.norm();
        if !(norm >= MIN_NORM) {
            return Err(Error::Degenerate(format!(
                "L2 normalization of a tensor with norm {norm:e}"
            )));
        }
        let unit = input.scale(1.0 / norm);
        Ok((unit.scale(self.value()), L2NormCache { unit, norm }))
    }

    /// Returns `(d input, d scale)`.
    pub fn backward(
        &self,
        cache: &L2NormCache,
        grad_out: &Tensor,
    ) -> Result<(Tensor, L2NormScaleParams)> {
        cache.unit.ensure_same_shape(grad_out, "l2norm backward")?;
        let proj = cache.unit.dot(grad_out);
        let k = self.value() / cache.norm;
        let dx = Tensor::new(
            grad_out.shape(),
            grad_out
                .data()
                .iter()
                .zip(cache.unit.data())
                .map(|(g, u)| k * (g - u * proj))
                .collect(),
        )?;
        Ok((
            dx,
            L2NormScaleParams {
                scale: Tensor::scalar(proj),
            },
        ))
    }
}

pub fn l2norm_scale(input: &Tensor, params: &L2NormScaleParams) -> Result<Tensor> {
    Ok(params.forward(input)?.0)
}
