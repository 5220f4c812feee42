use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

/// Dense row-major array of `f64` values.
///
/// Feature maps are rank-3 tensors indexed `(row, col, channel)` with the
/// channel index varying fastest.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::dim(format!("zero-sized dimension in {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero-sized dimension");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    /// Uniform samples in `[-range, range]`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], range: f64, rng: &mut R) -> Self {
        Self::from_fn(shape, |_| {
            if range > 0.0 {
                rng.gen_range(-range..=range)
            } else {
                0.0
            }
        })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Tensor {
            shape: vec![n.max(1)],
            data: if n == 0 { vec![0.0] } else { data },
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::dim(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// `(height, width, channels)` of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::dim(format!(
                "expected an H×W×C tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// `(height, width)` of a single-channel map, either H×W or H×W×1.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [h, w] | [h, w, 1] => Ok((h, w)),
            _ => Err(Error::dim(format!(
                "expected a single-channel map, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn get3(&self, row: usize, col: usize, ch: usize) -> f64 {
        let (_, w, c) = (self.shape[0], self.shape[1], self.shape[2]);
        self.data[(row * w + col) * c + ch]
    }

    pub fn set3(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        let (w, c) = (self.shape[1], self.shape[2]);
        self.data[(row * w + col) * c + ch] = value;
    }

    pub fn ensure_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{what}: element {i} is {}",
                self.data[i]
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: f64) -> Tensor {
        self.map(|v| v * k)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// `self += other`, shapes must match.
    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn zeros_like(&self) -> Tensor {
        Tensor::zeros(&self.shape)
    }

    /// Largest absolute elementwise difference; infinite when shapes differ.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        if self.shape != other.shape {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Swap the row and column axes of an H×W×C tensor.
    pub fn transpose_hw(&self) -> Result<Tensor> {
        let (h, w, c) = self.dims3()?;
        let mut out = vec![0.0; self.data.len()];
        for p in 0..h {
            for q in 0..w {
                let src = (p * w + q) * c;
                let dst = (q * h + p) * c;
                out[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        Tensor::new(&[w, h, c], out)
    }

    /// Mirror the column axis of an H×W×C tensor.
    pub fn flip_horizontal(&self) -> Result<Tensor> {
        let (h, w, c) = self.dims3()?;
        let mut out = vec![0.0; self.data.len()];
        for p in 0..h {
            for q in 0..w {
                let src = (p * w + q) * c;
                let dst = (p * w + (w - 1 - q)) * c;
                out[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        Tensor::new(&[h, w, c], out)
    }

    /// Mirror the row axis of an H×W×C tensor.
    pub fn flip_vertical(&self) -> Result<Tensor> {
        let (h, w, c) = self.dims3()?;
        let mut out = vec![0.0; self.data.len()];
        let row = w * c;
        for p in 0..h {
            let dst = (h - 1 - p) * row;
            out[dst..dst + row].copy_from_slice(&self.data[p * row..(p + 1) * row]);
        }
        Tensor::new(&[h, w, c], out)
    }

    pub fn rotate_180(&self) -> Result<Tensor> {
        self.flip_horizontal()?.flip_vertical()
    }

    /// Channels `[start, end)` of an H×W×C tensor.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<Tensor> {
        let (h, w, c) = self.dims3()?;
        if start >= end || end > c {
            return Err(Error::dim(format!(
                "channel range {start}..{end} out of bounds for {c} channels"
            )));
        }
        let k = end - start;
        let mut out = Vec::with_capacity(h * w * k);
        for pix in self.data.chunks_exact(c) {
            out.extend_from_slice(&pix[start..end]);
        }
        Tensor::new(&[h, w, k], out)
    }

    /// Swap the first and second halves of the channel axis.
    pub fn swap_channel_halves(&self) -> Result<Tensor> {
        let (h, w, c) = self.dims3()?;
        if c % 2 != 0 {
            return Err(Error::dim(format!("odd channel count {c}")));
        }
        let half = c / 2;
        let mut out = Vec::with_capacity(self.data.len());
        for pix in self.data.chunks_exact(c) {
            out.extend_from_slice(&pix[half..]);
            out.extend_from_slice(&pix[..half]);
        }
        Tensor::new(&[h, w, c], out)
    }
}
