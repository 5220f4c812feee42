use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::ops::{gemm, MatRef};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
}

/// Weights of a zero-padded "same" 2-D convolution with optional dilation.
///
/// Kernels are stored `out × in × kh × kw`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2dParams {
    pub kernels: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub dilation: usize,
    pub activation: Activation,
}

/// Forward intermediates needed by [`Conv2dParams::backward`].
#[derive(Clone, Debug)]
pub struct ConvCache {
    in_dims: (usize, usize, usize),
    cols: Vec<f64>,
    output: Tensor,
}

impl Conv2dParams {
    /// He-uniform for ReLU layers, `1/√fan_in` otherwise; zero bias.
    pub fn init<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let fan_in = (in_channels * kernel * kernel) as f64;
        let range = match activation {
            Activation::Relu => (6.0 / fan_in).sqrt(),
            Activation::None => 1.0 / fan_in.sqrt(),
        };
        Conv2dParams {
            kernels: Tensor::uniform(&[out_channels, in_channels, kernel, kernel], range, rng),
            bias: Tensor::zeros(&[out_channels]),
            stride,
            dilation,
            activation,
        }
    }

    pub fn zeroed(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        activation: Activation,
    ) -> Self {
        Conv2dParams {
            kernels: Tensor::zeros(&[out_channels, in_channels, kernel, kernel]),
            bias: Tensor::zeros(&[out_channels]),
            stride,
            dilation,
            activation,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernels.shape()[2], self.kernels.shape()[3])
    }

    pub fn validate(&self) -> Result<()> {
        let (kh, kw) = self.kernel_size();
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Config(format!("kernel {kh}×{kw} must be odd")));
        }
        if self.stride == 0 || self.dilation == 0 {
            return Err(Error::Config("stride and dilation must be positive".into()));
        }
        if self.bias.len() != self.out_channels() {
            return Err(Error::dim("bias length differs from output channels"));
        }
        Ok(())
    }

    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride), w.div_ceil(self.stride))
    }

    /// Receptive-field growth contributed by this layer, in units of its input grid.
    pub fn receptive_span(&self) -> usize {
        self.dilation * (self.kernel_size().0 - 1)
    }

    fn im2col(&self, input: &Tensor) -> (Vec<f64>, usize, usize) {
        let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (kh, kw) = self.kernel_size();
        let (oh, ow) = self.output_dims(h, w);
        let k = c * kh * kw;
        let (ch, cw) = ((kh / 2) as isize, (kw / 2) as isize);
        let d = self.dilation as isize;
        let s = self.stride as isize;
        let src = input.data();
        let mut cols = vec![0.0; oh * ow * k];
        for y in 0..oh {
            for x in 0..ow {
                let row = &mut cols[(y * ow + x) * k..(y * ow + x + 1) * k];
                for i in 0..kh {
                    let iy = y as isize * s + (i as isize - ch) * d;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for j in 0..kw {
                        let ix = x as isize * s + (j as isize - cw) * d;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let base = (iy as usize * w + ix as usize) * c;
                        for ci in 0..c {
                            row[ci * kh * kw + i * kw + j] = src[base + ci];
                        }
                    }
                }
            }
        }
        (cols, oh, ow)
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, ConvCache)> {
        let (h, w, c) = input.dims3()?;
        if c != self.in_channels() {
            return Err(Error::dim(format!(
                "convolution expects {} input channels, got {c}",
                self.in_channels()
            )));
        }
        let (cols, oh, ow) = self.im2col(input);
        let cout = self.out_channels();
        let k = cols.len() / (oh * ow);
        let mut out = Vec::with_capacity(oh * ow * cout);
        for _ in 0..oh * ow {
            out.extend_from_slice(self.bias.data());
        }
        gemm(
            MatRef::new(&cols, oh * ow, k),
            MatRef::new(self.kernels.data(), cout, k).t(),
            1.0,
            &mut out,
        );
        if self.activation == Activation::Relu {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        let output = Tensor::new(&[oh, ow, cout], out)?;
        Ok((
            output.clone(),
            ConvCache {
                in_dims: (h, w, c),
                cols,
                output,
            },
        ))
    }

    /// Gradients w.r.t. the input and the parameters.
    pub fn backward(&self, cache: &ConvCache, grad_out: &Tensor) -> Result<(Tensor, Conv2dParams)> {
        cache.output.ensure_same_shape(grad_out, "conv backward")?;
        let (h, w, c) = cache.in_dims;
        let (oh, ow, cout) = cache.output.dims3()?;
        let (kh, kw) = self.kernel_size();
        let k = c * kh * kw;
        let n = oh * ow;

        let mut dz = grad_out.data().to_vec();
        if self.activation == Activation::Relu {
            for (g, &y) in dz.iter_mut().zip(cache.output.data()) {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }
        }

        let mut grads =
            Conv2dParams::zeroed(c, cout, kh, self.stride, self.dilation, self.activation);
        for row in dz.chunks_exact(cout) {
            for (b, g) in grads.bias.data_mut().iter_mut().zip(row) {
                *b += g;
            }
        }
        gemm(
            MatRef::new(&dz, n, cout).t(),
            MatRef::new(&cache.cols, n, k),
            0.0,
            grads.kernels.data_mut(),
        );

        let mut dcols = vec![0.0; n * k];
        gemm(
            MatRef::new(&dz, n, cout),
            MatRef::new(self.kernels.data(), cout, k),
            0.0,
            &mut dcols,
        );
        let mut dx = vec![0.0; h * w * c];
        let (ch, cw) = ((kh / 2) as isize, (kw / 2) as isize);
        let d = self.dilation as isize;
        let s = self.stride as isize;
        for y in 0..oh {
            for x in 0..ow {
                let row = &dcols[(y * ow + x) * k..(y * ow + x + 1) * k];
                for i in 0..kh {
                    let iy = y as isize * s + (i as isize - ch) * d;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for j in 0..kw {
                        let ix = x as isize * s + (j as isize - cw) * d;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let base = (iy as usize * w + ix as usize) * c;
                        for ci in 0..c {
                            dx[base + ci] += row[ci * kh * kw + i * kw + j];
                        }
                    }
                }
            }
        }
        Ok((Tensor::new(&[h, w, c], dx)?, grads))
    }
}

pub fn dilated_conv_forward(input: &Tensor, params: &Conv2dParams) -> Result<Tensor> {
    params.validate()?;
    Ok(params.forward(input)?.0)
}
