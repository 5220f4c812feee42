//! Fully connected layer, global average pooling and bilinear image resizing.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::ops::{dot, matvec_t_acc, outer_acc};
use crate::numerics::Tensor;

use super::conv::Activation;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams {
    /// `out × in`
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct LinearCache {
    input: Vec<f64>,
    output: Vec<f64>,
}

impl LinearParams {
    pub fn init<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let range = match activation {
            Activation::Relu => (6.0 / inputs as f64).sqrt(),
            Activation::None => 1.0 / (inputs as f64).sqrt(),
        };
        LinearParams {
            weight: Tensor::uniform(&[outputs, inputs], range, rng),
            bias: Tensor::zeros(&[outputs]),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, LinearCache)> {
        if x.len() != self.inputs() {
            return Err(Error::dim(format!(
                "linear layer expects {} inputs, got {}",
                self.inputs(),
                x.len()
            )));
        }
        let n = self.inputs();
        let out: Vec<f64> = (0..self.outputs())
            .map(|o| {
                let v = dot(&self.weight.data()[o * n..(o + 1) * n], x) + self.bias.data()[o];
                match self.activation {
                    Activation::Relu => v.max(0.0),
                    Activation::None => v,
                }
            })
            .collect();
        Ok((
            out.clone(),
            LinearCache {
                input: x.to_vec(),
                output: out,
            },
        ))
    }

    pub fn backward(&self, cache: &LinearCache, grad_out: &[f64]) -> (Vec<f64>, LinearParams) {
        let dz: Vec<f64> = grad_out
            .iter()
            .zip(&cache.output)
            .map(|(&g, &y)| match self.activation {
                Activation::Relu if y <= 0.0 => 0.0,
                _ => g,
            })
            .collect();
        let mut grads = LinearParams {
            weight: self.weight.zeros_like(),
            bias: Tensor::new(&[dz.len()], dz.clone()).expect("bias shape"),
            activation: self.activation,
        };
        outer_acc(grads.weight.data_mut(), &dz, &cache.input);
        let mut dx = vec![0.0; self.inputs()];
        matvec_t_acc(
            self.weight.data(),
            self.outputs(),
            self.inputs(),
            &dz,
            &mut dx,
        );
        (dx, grads)
    }
}

/// Mean over all spatial positions of an H×W×C map.
pub fn global_avg_pool(map: &Tensor) -> Result<Vec<f64>> {
    let (h, w, c) = map.dims3()?;
    let mut out = vec![0.0; c];
    for pix in map.data().chunks_exact(c) {
        for (o, v) in out.iter_mut().zip(pix) {
            *o += v;
        }
    }
    let n = (h * w) as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

pub fn global_avg_pool_backward(h: usize, w: usize, grad: &[f64]) -> Tensor {
    let c = grad.len();
    let n = (h * w) as f64;
    Tensor::from_fn(&[h, w, c], |i| grad[i % c] / n)
}

/// Bilinear resize of an H×W×C image (half-pixel centers, clamped edges).
pub fn resize_bilinear(image: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w, c) = image.dims3().or_else(|_| {
        let (h, w) = image.dims2()?;
        Ok::<_, Error>((h, w, 1))
    })?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::dim("resize to an empty image"));
    }
    if (h, w) == (out_h, out_w) {
        return image.clone().reshape(&[h, w, c]);
    }
    let coords = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        (0..n_out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5)
                    .clamp(0.0, (n_in - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let ys = coords(h, out_h);
    let xs = coords(w, out_w);
    let src = image.data();
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let at = |y: usize, x: usize| src[(y * w + x) * c + ch];
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::new(&[out_h, out_w, c], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_gradient, relative_error, DEFAULT_STEP};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for act in [Activation::None, Activation::Relu] {
            let p = LinearParams::init(4, 3, act, &mut rng);
            let x = Tensor::uniform(&[4], 1.0, &mut rng);
            let g = [0.3, -1.2, 0.8];
            let (_, cache) = p.forward(x.data()).unwrap();
            let (dx, grads) = p.backward(&cache, &g);
            let f = |q: &LinearParams, x: &Tensor| dot(&q.forward(x.data()).unwrap().0, &g);
            let num = finite_diff_gradient(|t| f(&p, t), &x, DEFAULT_STEP).unwrap();
            assert!(relative_error(&dx, num.data()) < 1e-4);
            let num = finite_diff_gradient(
                |w| {
                    let mut q = p.clone();
                    q.weight = w.clone();
                    f(&q, &x)
                },
                &p.weight,
                DEFAULT_STEP,
            )
            .unwrap();
            assert!(relative_error(grads.weight.data(), num.data()) < 1e-4);
        }
    }

    #[test]
    fn avg_pool_roundtrip() {
        let m = Tensor::from_fn(&[2, 3, 2], |i| i as f64);
        assert_eq!(global_avg_pool(&m).unwrap(), vec![5.0, 6.0]);
        let g = global_avg_pool_backward(2, 3, &[6.0, 12.0]);
        assert_eq!(g.get3(1, 2, 1), 2.0);
    }

    #[test]
    fn resize_constant_and_identity() {
        let m = Tensor::filled(&[4, 6, 3], 0.25);
        let r = resize_bilinear(&m, 9, 5).unwrap();
        assert_eq!(r.shape(), &[9, 5, 3]);
        assert!(r.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let x = Tensor::from_fn(&[3, 3, 1], |i| i as f64);
        assert_eq!(resize_bilinear(&x, 3, 3).unwrap(), x);
    }

    #[test]
    fn resize_halves_average_pairs() {
        let x = Tensor::from_fn(&[1, 4, 1], |i| i as f64);
        let r = resize_bilinear(&x, 1, 2).unwrap();
        assert_eq!(r.data(), &[0.5, 2.5]);
    }
}
