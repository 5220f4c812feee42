use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Max pooling with window `kernel` and step `stride`; output size `⌈H/stride⌉`.
///
/// Windows start `⌊(kernel−1)/2⌋` cells before `y·stride`, so `[2,2]` tiles
/// the input and `[3,2]` behaves like a padded 3×3 pool. Out-of-range cells
/// are ignored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxPool {
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Clone, Debug)]
pub struct PoolCache {
    in_dims: (usize, usize, usize),
    argmax: Vec<usize>,
}

impl MaxPool {
    pub fn new(kernel: usize, stride: usize) -> Result<Self> {
        if kernel == 0 || stride == 0 {
            return Err(Error::Config(
                "pool kernel and stride must be positive".into(),
            ));
        }
        Ok(MaxPool { kernel, stride })
    }

    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride), w.div_ceil(self.stride))
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, PoolCache)> {
        let (h, w, c) = input.dims3()?;
        let (oh, ow) = self.output_dims(h, w);
        let off = ((self.kernel - 1) / 2) as isize;
        let src = input.data();
        let mut out = vec![f64::NEG_INFINITY; oh * ow * c];
        let mut argmax = vec![0usize; oh * ow * c];
        for y in 0..oh {
            for x in 0..ow {
                let y0 = (y * self.stride) as isize - off;
                let x0 = (x * self.stride) as isize - off;
                for dy in 0..self.kernel as isize {
                    let iy = y0 + dy;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for dx in 0..self.kernel as isize {
                        let ix = x0 + dx;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let base = (iy as usize * w + ix as usize) * c;
                        let obase = (y * ow + x) * c;
                        for ch in 0..c {
                            if src[base + ch] > out[obase + ch] {
                                out[obase + ch] = src[base + ch];
                                argmax[obase + ch] = base + ch;
                            }
                        }
                    }
                }
            }
        }
        Ok((
            Tensor::new(&[oh, ow, c], out)?,
            PoolCache {
                in_dims: (h, w, c),
                argmax,
            },
        ))
    }

    pub fn backward(&self, cache: &PoolCache, grad_out: &Tensor) -> Result<Tensor> {
        if grad_out.len() != cache.argmax.len() {
            return Err(Error::dim("pool backward gradient size"));
        }
        let (h, w, c) = cache.in_dims;
        let mut dx = vec![0.0; h * w * c];
        for (&src, &g) in cache.argmax.iter().zip(grad_out.data()) {
            dx[src] += g;
        }
        Tensor::new(&[h, w, c], dx)
    }
}
