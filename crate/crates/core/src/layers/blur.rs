use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Blur width relative to the shorter image side used for post-processing.
pub const BLUR_SIGMA_FRACTION: f64 = 0.035;

/// Separable Gaussian filter truncated to `size` taps.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBlur {
    sigma: f64,
    size: usize,
    kernel: Vec<f64>,
}

/// `round(4σ)`, bumped to the next odd number when even.
pub fn gaussian_kernel_size(sigma: f64) -> usize {
    let size = (4.0 * sigma).round() as usize;
    if size % 2 == 0 {
        size + 1
    } else {
        size
    }
}

impl GaussianBlur {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!(
                "blur sigma must be positive, got {sigma}"
            )));
        }
        let size = gaussian_kernel_size(sigma);
        let r = (size / 2) as f64;
        let mut kernel: Vec<f64> = (0..size)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|v| *v /= total);
        Ok(GaussianBlur {
            sigma,
            size,
            kernel,
        })
    }

    /// Post-processing blur for a `p × q` image: `σ = 0.035·min(p, q)`.
    pub fn for_image(p: usize, q: usize) -> Result<Self> {
        Self::new(BLUR_SIGMA_FRACTION * p.min(q) as f64)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Normalized 1-D kernel (sums to 1).
    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    fn pass(
        &self,
        src: &[f64],
        n: usize,
        stride: usize,
        lines: usize,
        line_stride: usize,
        out: &mut [f64],
    ) {
        let r = (self.size / 2) as isize;
        for l in 0..lines {
            let base = l * line_stride;
            for t in 0..n as isize {
                let mut acc = 0.0;
                let mut wsum = 0.0;
                let lo = (t - r).max(0);
                let hi = (t + r).min(n as isize - 1);
                for s in lo..=hi {
                    let wgt = self.kernel[(s - t + r) as usize];
                    acc += wgt * src[base + s as usize * stride];
                    wsum += wgt;
                }
                out[base + t as usize * stride] = acc / wsum;
            }
        }
    }

    pub fn apply(&self, map: &Tensor) -> Result<Tensor> {
        let (h, w) = map.dims2()?;
        let mut tmp = vec![0.0; h * w];
        self.pass(map.data(), w, 1, h, w, &mut tmp);
        let mut out = vec![0.0; h * w];
        self.pass(&tmp, h, w, w, 1, &mut out);
        Tensor::new(map.shape(), out)
    }
}

pub fn gaussian_blur(map: &Tensor, sigma: f64) -> Result<Tensor> {
    GaussianBlur::new(sigma)?.apply(map)
}
