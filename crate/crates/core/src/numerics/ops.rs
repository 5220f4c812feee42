//! Elementwise math and matrix products.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Row-major matrix operand for [`gemm`], optionally read transposed.
#[derive(Clone, Copy)]
pub struct MatRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        MatRef {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    pub fn t(self) -> Self {
        MatRef {
            transposed: !self.transposed,
            ..self
        }
    }

    /// Logical (rows, cols) after the optional transpose.
    fn logical(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out = beta·out + a·b` where `out` is row-major `m×n`.
pub fn gemm(a: MatRef<'_>, b: MatRef<'_>, beta: f64, out: &mut [f64]) {
    let (m, k) = a.logical();
    let (k2, n) = b.logical();
    assert_eq!(k, k2, "gemm inner dimension mismatch");
    assert_eq!(out.len(), m * n, "gemm output size mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: strides and extents describe in-bounds views of the slices
    // checked above; `out` is an exclusive m×n row-major buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `y += W·x` for a row-major `rows×cols` matrix.
pub fn matvec_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    for (r, yr) in y.iter_mut().enumerate().take(rows) {
        let row = &w[r * cols..(r + 1) * cols];
        *yr += dot(row, x);
    }
}

/// `y += Wᵀ·x` for a row-major `rows×cols` matrix.
pub fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    for (r, &xr) in x.iter().enumerate().take(rows) {
        if xr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (yc, &wc) in y.iter_mut().zip(row) {
            *yc += wc * xr;
        }
    }
}

/// `W += a·bᵀ` for a row-major `a.len()×b.len()` matrix.
pub fn outer_acc(w: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (r, &ar) in a.iter().enumerate() {
        if ar == 0.0 {
            continue;
        }
        for (wc, &bc) in w[r * cols..(r + 1) * cols].iter_mut().zip(b) {
            *wc += ar * bc;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Matrix product of two rank-2 tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = match a.shape() {
        &[m, k] => (m, k),
        s => return Err(Error::dim(format!("matmul lhs must be rank 2, got {s:?}"))),
    };
    let (k2, n) = match b.shape() {
        &[k2, n] => (k2, n),
        s => return Err(Error::dim(format!("matmul rhs must be rank 2, got {s:?}"))),
    };
    if k != k2 {
        return Err(Error::dim(format!(
            "matmul inner dimensions differ: {m}×{k} · {k2}×{n}"
        )));
    }
    let mut out = vec![0.0; m * n];
    gemm(
        MatRef::new(a.data(), m, k),
        MatRef::new(b.data(), k, n),
        0.0,
        &mut out,
    );
    Tensor::new(&[m, n], out)
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

pub fn tanh(x: &Tensor) -> Tensor {
    x.map(f64::tanh)
}

pub fn hadamard(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.ensure_same_shape(b, "hadamard")?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::new(a.shape(), data)
}

/// Concatenate H×W×Cᵢ maps along the channel axis, first argument first.
pub fn concat_channels(maps: &[&Tensor]) -> Result<Tensor> {
    let first = maps
        .first()
        .ok_or_else(|| Error::dim("concat_channels of an empty list"))?;
    let (h, w, _) = first.dims3()?;
    let mut widths = Vec::with_capacity(maps.len());
    for m in maps {
        let (mh, mw, mc) = m.dims3()?;
        if (mh, mw) != (h, w) {
            return Err(Error::dim(format!(
                "concat_channels spatial mismatch: {h}×{w} vs {mh}×{mw}"
            )));
        }
        widths.push(mc);
    }
    let total: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(h * w * total);
    for pix in 0..h * w {
        for (m, &c) in maps.iter().zip(&widths) {
            out.extend_from_slice(&m.data()[pix * c..(pix + 1) * c]);
        }
    }
    Tensor::new(&[h, w, total], out)
}

/// Inverse of [`concat_channels`]: split an H×W×ΣCᵢ map into the given widths.
pub fn split_channels(map: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>> {
    let (h, w, c) = map.dims3()?;
    if widths.iter().sum::<usize>() != c || widths.contains(&0) {
        return Err(Error::dim(format!(
            "cannot split {c} channels into {widths:?}"
        )));
    }
    let mut parts: Vec<Vec<f64>> = widths
        .iter()
        .map(|&k| Vec::with_capacity(h * w * k))
        .collect();
    for pix in map.data().chunks_exact(c) {
        let mut start = 0;
        for (part, &k) in parts.iter_mut().zip(widths) {
            part.extend_from_slice(&pix[start..start + k]);
            start += k;
        }
    }
    parts
        .into_iter()
        .zip(widths)
        .map(|(d, &k)| Tensor::new(&[h, w, k], d))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn triple_loop(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        Tensor::from_fn(&[m, n], |idx| {
            let (i, j) = (idx / n, idx % n);
            (0..k)
                .map(|t| a.data()[i * k + t] * b.data()[t * n + j])
                .sum()
        })
    }

    #[test]
    fn matmul_examples() {
        let a = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c, triple_loop(&a, &b));
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);

        let eye = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(matmul(&eye, &b).unwrap(), b);

        let z = Tensor::zeros(&[2, 3]);
        let any = Tensor::from_fn(&[3, 4], |i| i as f64 - 5.5);
        assert_eq!(matmul(&z, &any).unwrap(), Tensor::zeros(&[2, 4]));
    }

    #[test]
    fn matmul_rejects_bad_inner_dim() {
        let a = Tensor::zeros(&[2, 3]);
        assert!(matches!(matmul(&a, &a), Err(Error::Dimension(_))));
    }

    #[test]
    fn gemm_transposed_views() {
        let a = Tensor::from_fn(&[3, 2], |i| i as f64 + 1.0);
        let b = Tensor::from_fn(&[3, 4], |i| (i as f64).sin());
        // aᵀ·b
        let mut out = vec![0.0; 8];
        gemm(
            MatRef::new(a.data(), 3, 2).t(),
            MatRef::new(b.data(), 3, 4),
            0.0,
            &mut out,
        );
        let at = Tensor::from_fn(&[2, 3], |i| a.data()[(i % 3) * 2 + i / 3]);
        let want = triple_loop(&at, &b);
        for (x, y) in out.iter().zip(want.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn activation_examples() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert_eq!(0f64.tanh(), 0.0);
        // 1/(1+e^-1)
        assert!((sigmoid_scalar(1.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!(sigmoid_scalar(-800.0).is_finite());
        assert!(sigmoid_scalar(800.0) == 1.0);
    }

    proptest! {
        #[test]
        fn sigmoid_symmetry_and_tanh_odd(x in -40.0f64..40.0) {
            prop_assert!((sigmoid_scalar(x) + sigmoid_scalar(-x) - 1.0).abs() < 1e-12);
            prop_assert!((x.tanh() + (-x).tanh()).abs() < 1e-12);
        }

        #[test]
        fn concat_then_slice_recovers_inputs(h in 1usize..5, w in 1usize..5, c1 in 1usize..4, c2 in 1usize..4, seed in 0u64..1000) {
            let a = Tensor::from_fn(&[h, w, c1], |i| (i as f64 * 0.37 + seed as f64).sin());
            let b = Tensor::from_fn(&[h, w, c2], |i| (i as f64 * 1.91 - seed as f64).cos());
            let cat = concat_channels(&[&a, &b]).unwrap();
            prop_assert_eq!(cat.slice_channels(0, c1).unwrap(), a.clone());
            prop_assert_eq!(cat.slice_channels(c1, c1 + c2).unwrap(), b.clone());
            prop_assert_eq!(split_channels(&cat, &[c1, c2]).unwrap(), vec![a, b]);
        }
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::zeros(&[2, 2, 1]);
        let b = Tensor::zeros(&[2, 3, 1]);
        assert!(concat_channels(&[&a, &b]).is_err());
        assert!(split_channels(&a, &[2]).is_err());
    }

    #[test]
    fn hadamard_checks_shape() {
        let a = Tensor::filled(&[2, 2], 3.0);
        let b = Tensor::filled(&[2, 2], 2.0);
        assert_eq!(hadamard(&a, &b).unwrap().data(), &[6.0; 4]);
        assert!(hadamard(&a, &Tensor::zeros(&[4])).is_err());
    }
}
