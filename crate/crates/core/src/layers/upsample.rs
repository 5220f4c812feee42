use crate::error::{Error, Result};
use crate::numerics::ops::{gemm, MatRef};
use crate::numerics::Tensor;

/// 1-D factor of the fixed bilinear kernel: length `2f − f%2`,
/// `w(i) = 1 − |i/f − c|` with `c = (2f − f%2 − 1) / 2f`.
pub fn bilinear_kernel_1d(factor: usize) -> Vec<f64> {
    let f = factor as f64;
    let size = 2 * factor - factor % 2;
    let center = (size as f64 - 1.0) / (2.0 * f);
    (0..size)
        .map(|i| 1.0 - (i as f64 / f - center).abs())
        .collect()
}

/// Transposed convolution with a frozen bilinear kernel, stride `factor`,
/// padding `⌊factor/2⌋`, so an H×W map becomes (H·f)×(W·f).
///
/// Taps that fall outside the input read the nearest edge cell, which keeps
/// constant maps constant up to the border.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearUpsample {
    factor: usize,
    weights: Vec<f64>,
    kernel: Tensor,
}

impl BilinearUpsample {
    pub fn new(factor: usize) -> Result<Self> {
        if factor < 1 {
            return Err(Error::Config("upsampling factor must be at least 1".into()));
        }
        let w = bilinear_kernel_1d(factor);
        let k = w.len();
        let kernel = Tensor::from_fn(&[k, k], |idx| w[idx / k] * w[idx % k]);
        Ok(BilinearUpsample {
            factor,
            weights: w,
            kernel,
        })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    /// The 2-D kernel; never updated by training.
    pub fn kernel(&self) -> &Tensor {
        &self.kernel
    }

    /// Row-major `(n·f) × n` interpolation matrix along one axis.
    fn axis_matrix(&self, n: usize) -> Vec<f64> {
        let f = self.factor;
        let w = &self.weights;
        let k = w.len();
        let pad = (f / 2) as isize;
        let n_out = n * f;
        let mut m = vec![0.0; n_out * n];
        for out in 0..n_out {
            // input cells whose kernel footprint covers `out`
            let hi = (out as isize + pad).div_euclid(f as isize);
            let lo = (out as isize + pad - k as isize + 1).div_euclid(f as isize);
            for src in lo..=hi {
                let tap = out as isize + pad - src * f as isize;
                if tap < 0 || tap >= k as isize {
                    continue;
                }
                let clamped = src.clamp(0, n as isize - 1) as usize;
                m[out * n + clamped] += w[tap as usize];
            }
        }
        m
    }

    pub fn forward(&self, map: &Tensor) -> Result<Tensor> {
        let (h, w) = map.dims2()?;
        let f = self.factor;
        let uh = self.axis_matrix(h);
        let uw = self.axis_matrix(w);
        let mut tmp = vec![0.0; h * f * w];
        gemm(
            MatRef::new(&uh, h * f, h),
            MatRef::new(map.data(), h, w),
            0.0,
            &mut tmp,
        );
        let mut out = vec![0.0; h * f * w * f];
        gemm(
            MatRef::new(&tmp, h * f, w),
            MatRef::new(&uw, w * f, w).t(),
            0.0,
            &mut out,
        );
        Tensor::new(&[h * f, w * f, 1], out)
    }

    /// Adjoint of [`forward`](Self::forward) for an input of `in_h × in_w`.
    pub fn backward(&self, in_h: usize, in_w: usize, grad_out: &Tensor) -> Result<Tensor> {
        let f = self.factor;
        let (gh, gw) = grad_out.dims2()?;
        if (gh, gw) != (in_h * f, in_w * f) {
            return Err(Error::dim(format!(
                "upsample backward: gradient {gh}×{gw} does not match input {in_h}×{in_w}"
            )));
        }
        let uh = self.axis_matrix(in_h);
        let uw = self.axis_matrix(in_w);
        let mut tmp = vec![0.0; in_h * gw];
        gemm(
            MatRef::new(&uh, gh, in_h).t(),
            MatRef::new(grad_out.data(), gh, gw),
            0.0,
            &mut tmp,
        );
        let mut out = vec![0.0; in_h * in_w];
        gemm(
            MatRef::new(&tmp, in_h, gw),
            MatRef::new(&uw, gw, in_w),
            0.0,
            &mut out,
        );
        Tensor::new(&[in_h, in_w, 1], out)
    }
}

pub fn bilinear_upsample(map: &Tensor, factor: usize) -> Result<Tensor> {
    BilinearUpsample::new(factor)?.forward(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_gradient, relative_error, DEFAULT_STEP};

    /// Scatter the 2-D kernel at stride `f` with padding `⌊f/2⌋`, no edge handling.
    fn scatter_oracle(map: &Tensor, f: usize) -> Tensor {
        let (h, w) = map.dims2().unwrap();
        let w1 = bilinear_kernel_1d(f);
        let k = w1.len() as isize;
        let pad = (f / 2) as isize;
        let mut out = Tensor::zeros(&[h * f, w * f, 1]);
        for y in 0..h {
            for x in 0..w {
                let v = map.get3(y, x, 0);
                for i in 0..k {
                    for j in 0..k {
                        let oy = (y * f) as isize + i - pad;
                        let ox = (x * f) as isize + j - pad;
                        if oy < 0 || ox < 0 || oy >= (h * f) as isize || ox >= (w * f) as isize {
                            continue;
                        }
                        let cur = out.get3(oy as usize, ox as usize, 0);
                        out.set3(
                            oy as usize,
                            ox as usize,
                            0,
                            cur + v * w1[i as usize] * w1[j as usize],
                        );
                    }
                }
            }
        }
        out
    }

    #[test]
    fn kernel_values() {
        assert_eq!(bilinear_kernel_1d(2), vec![0.25, 0.75, 0.75, 0.25]);
        let k3 = bilinear_kernel_1d(3);
        let want = [1.0 / 3.0, 2.0 / 3.0, 1.0, 2.0 / 3.0, 1.0 / 3.0];
        assert!(k3.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(bilinear_kernel_1d(8).len(), 16);
        assert_eq!(bilinear_kernel_1d(1), vec![1.0]);
    }

    #[test]
    fn constant_map_stays_constant() {
        for f in [2, 3, 8] {
            let m = Tensor::filled(&[5, 7, 1], 0.3);
            let up = bilinear_upsample(&m, f).unwrap();
            assert_eq!(up.shape(), &[5 * f, 7 * f, 1]);
            assert!(up.data().iter().all(|&v| (v - 0.3).abs() < 1e-12));
        }
    }

    #[test]
    fn impulse_gives_tent() {
        let mut m = Tensor::zeros(&[5, 5, 1]);
        m.set3(2, 2, 0, 1.0);
        let up = bilinear_upsample(&m, 2).unwrap();
        assert!(up.max_abs_diff(&scatter_oracle(&m, 2)) < 1e-15);
        // row through the impulse: rows 3..=6 carry 0.25, 0.75, 0.75, 0.25 × column profile
        let row: Vec<f64> = (0..10).map(|x| up.get3(4, x, 0)).collect();
        let want = [
            0.0,
            0.0,
            0.0,
            0.75 * 0.25,
            0.75 * 0.75,
            0.75 * 0.75,
            0.75 * 0.25,
            0.0,
            0.0,
            0.0,
        ];
        assert!(row.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn interior_matches_scatter_oracle() {
        let m = Tensor::from_fn(&[6, 5, 1], |i| (i as f64 * 0.61).sin());
        for f in [2, 3, 4, 8] {
            let up = bilinear_upsample(&m, f).unwrap();
            let oracle = scatter_oracle(&m, f);
            let margin = f;
            for y in margin..(6 * f - margin) {
                for x in margin..(5 * f - margin) {
                    assert!((up.get3(y, x, 0) - oracle.get3(y, x, 0)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn stride_eight_shape() {
        let up = bilinear_upsample(&Tensor::filled(&[60, 80, 1], 1.0), 8).unwrap();
        assert_eq!(up.shape(), &[480, 640, 1]);
        assert!(bilinear_upsample(&up, 0).is_err());
    }

    #[test]
    fn backward_is_adjoint() {
        let layer = BilinearUpsample::new(4).unwrap();
        let m = Tensor::from_fn(&[3, 4, 1], |i| (i as f64).cos());
        let g = Tensor::from_fn(&[12, 16, 1], |i| (i as f64 * 0.3).sin());
        let dx = layer.backward(3, 4, &g).unwrap();
        let num =
            finite_diff_gradient(|t| layer.forward(t).unwrap().dot(&g), &m, DEFAULT_STEP).unwrap();
        assert!(relative_error(dx.data(), num.data()) < 1e-4);
    }
}
