//! Convolutional feature extractors: a stride-8 local encoder, a multilayer
//! fusion variant, a global scene encoder, and loaders for external features.

pub mod image;

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::{
    global_avg_pool, global_avg_pool_backward, resize_bilinear, Activation, Conv2dParams,
    ConvCache, L2NormCache, L2NormScaleParams, LinearCache, LinearParams, MaxPool, PoolCache,
};
use crate::numerics::{concat_channels, serialize, split_channels, Tensor};
use crate::params::{join, Params};

/// Total downsampling of every local encoder.
pub const ENCODER_STRIDE: usize = 8;
pub const DEFAULT_LOCAL_SCALE: f64 = 400.0;
pub const DEFAULT_SCENE_SCALE: f64 = 9.0;
pub const SCENE_WIDTH: usize = 128;

/// `[channels, kernel, stride, dilation] × repeat`, optionally followed by a
/// `[kernel, stride]` max pool.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub repeat: usize,
    pub activation: Activation,
    pub pool: Option<(usize, usize)>,
}

impl ConvBlock {
    pub fn new(channels: usize, kernel: usize, stride: usize, dilation: usize) -> Self {
        ConvBlock {
            channels,
            kernel,
            stride,
            dilation,
            repeat: 1,
            activation: Activation::Relu,
            pool: None,
        }
    }

    pub fn times(mut self, repeat: usize) -> Self {
        self.repeat = repeat;
        self
    }

    pub fn pool(mut self, kernel: usize, stride: usize) -> Self {
        self.pool = Some((kernel, stride));
        self
    }
}

/// One expanded layer of a conv stack.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerSpec {
    Conv {
        channels: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        activation: Activation,
    },
    Pool {
        kernel: usize,
        stride: usize,
    },
}

impl LayerSpec {
    fn stride(&self) -> usize {
        match *self {
            LayerSpec::Conv { stride, .. } | LayerSpec::Pool { stride, .. } => stride,
        }
    }

    /// Input-grid interval `[lo, hi]` read by output cell `y`.
    fn window(&self, lo: isize, hi: isize) -> (isize, isize) {
        match *self {
            LayerSpec::Conv {
                kernel,
                stride,
                dilation,
                ..
            } => {
                let reach = ((kernel / 2) * dilation) as isize;
                (lo * stride as isize - reach, hi * stride as isize + reach)
            }
            LayerSpec::Pool { kernel, stride } => {
                let off = ((kernel - 1) / 2) as isize;
                (
                    lo * stride as isize - off,
                    hi * stride as isize - off + kernel as isize - 1,
                )
            }
        }
    }
}

fn expand(blocks: &[ConvBlock]) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    for b in blocks {
        for _ in 0..b.repeat {
            specs.push(LayerSpec::Conv {
                channels: b.channels,
                kernel: b.kernel,
                stride: b.stride,
                dilation: b.dilation,
                activation: b.activation,
            });
        }
        if let Some((kernel, stride)) = b.pool {
            specs.push(LayerSpec::Pool { kernel, stride });
        }
    }
    specs
}

fn validate_blocks(blocks: &[ConvBlock]) -> Result<()> {
    if blocks.is_empty() {
        return Err(Error::Config("encoder needs at least one block".into()));
    }
    for b in blocks {
        if b.channels == 0 || b.repeat == 0 || b.stride == 0 || b.dilation == 0 || b.kernel % 2 == 0
        {
            return Err(Error::Config(format!("invalid conv block {b:?}")));
        }
        if let Some((k, s)) = b.pool {
            if k == 0 || s == 0 {
                return Err(Error::Config(format!("invalid pool in block {b:?}")));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub blocks: Vec<ConvBlock>,
    /// A 1×1 ReLU reduction is appended when this differs from the last block width.
    pub output_channels: usize,
    pub l2_scale: f64,
}

impl EncoderConfig {
    /// Desk-scale stand-in with the dilated tail of the VGG layout.
    pub fn toy(channels: usize) -> Self {
        EncoderConfig::toy_with_tail(channels, &[2, 4, 4])
    }

    /// Toy layout whose three post-pool layers use the given dilations.
    pub fn toy_with_tail(channels: usize, dilations: &[usize]) -> Self {
        let mut blocks = vec![
            ConvBlock::new(16, 3, 1, 1).pool(2, 2),
            ConvBlock::new(channels, 3, 1, 1).pool(2, 2),
            ConvBlock::new(channels, 3, 1, 1).pool(2, 2),
        ];
        blocks.extend(dilations.iter().map(|&d| ConvBlock::new(channels, 3, 1, d)));
        EncoderConfig {
            blocks,
            output_channels: channels,
            l2_scale: DEFAULT_LOCAL_SCALE,
        }
    }

    /// Full-width dilated VGG-16 layout.
    pub fn vgg16_dilated() -> Self {
        EncoderConfig {
            blocks: vec![
                ConvBlock::new(64, 3, 1, 1).times(2).pool(2, 2),
                ConvBlock::new(128, 3, 1, 1).times(2).pool(2, 2),
                ConvBlock::new(256, 3, 1, 1).times(3).pool(2, 2),
                ConvBlock::new(512, 3, 1, 1).times(3),
                ConvBlock::new(512, 3, 1, 2).times(3),
                ConvBlock::new(512, 3, 1, 4).times(2),
                ConvBlock::new(512, 3, 1, 4).times(2),
            ],
            output_channels: 512,
            l2_scale: DEFAULT_LOCAL_SCALE,
        }
    }

    /// Layer geometry of the dilated ResNet-50 extractor as a plain chain.
    /// Residual additions and batch normalization are not modelled.
    pub fn resnet50_dilated_schema() -> Self {
        let bottleneck = |mid: usize, out: usize, stride: usize, dilation: usize| {
            vec![
                ConvBlock::new(mid, 1, stride, 1),
                ConvBlock::new(mid, 3, 1, dilation),
                ConvBlock::new(out, 1, 1, 1),
            ]
        };
        let mut blocks = vec![ConvBlock::new(64, 7, 2, 1).pool(3, 2)];
        for _ in 0..3 {
            blocks.extend(bottleneck(64, 256, 1, 1));
        }
        blocks.extend(bottleneck(128, 512, 2, 1));
        for _ in 0..3 {
            blocks.extend(bottleneck(128, 512, 1, 1));
        }
        for _ in 0..6 {
            blocks.extend(bottleneck(256, 1024, 1, 2));
        }
        for _ in 0..3 {
            blocks.extend(bottleneck(512, 2048, 1, 2));
        }
        EncoderConfig {
            blocks,
            output_channels: 512,
            l2_scale: DEFAULT_LOCAL_SCALE,
        }
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        expand(&self.blocks)
    }

    pub fn stride_product(&self) -> usize {
        self.layers().iter().map(LayerSpec::stride).product()
    }

    pub fn last_channels(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.channels)
    }

    /// Receptive field side length of one output cell, in input pixels.
    pub fn receptive_field(&self) -> usize {
        let (lo, hi) = self.receptive_window(0);
        (hi - lo + 1) as usize
    }

    /// Input rows (or columns) `[lo, hi]` that can influence output index `y`;
    /// bounds may fall outside the image.
    pub fn receptive_window(&self, y: usize) -> (isize, isize) {
        self.layers()
            .iter()
            .rev()
            .fold((y as isize, y as isize), |(lo, hi), s| s.window(lo, hi))
    }

    pub fn output_dims(&self, p: usize, q: usize) -> (usize, usize) {
        (p.div_ceil(ENCODER_STRIDE), q.div_ceil(ENCODER_STRIDE))
    }

    pub fn validate(&self) -> Result<()> {
        validate_blocks(&self.blocks)?;
        let s = self.stride_product();
        if s != ENCODER_STRIDE {
            return Err(Error::Config(format!(
                "encoder strides multiply to {s}, expected {ENCODER_STRIDE}"
            )));
        }
        if self.output_channels == 0 || !(self.l2_scale > 0.0) {
            return Err(Error::Config(
                "encoder output channels and scale must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EncoderLayer {
    Conv(Conv2dParams),
    Pool(MaxPool),
}

#[derive(Clone, Debug)]
enum LayerCache {
    Conv(ConvCache),
    Pool(PoolCache),
}

/// A sequence of convolutions and pools.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvStack {
    pub layers: Vec<EncoderLayer>,
}

#[derive(Clone, Debug)]
pub struct StackCache {
    layers: Vec<LayerCache>,
    outputs: Vec<Tensor>,
}

impl StackCache {
    /// Activation after layer `index`.
    pub fn output(&self, index: usize) -> &Tensor {
        &self.outputs[index]
    }
}

impl ConvStack {
    pub fn init<R: Rng + ?Sized>(
        in_channels: usize,
        specs: &[LayerSpec],
        rng: &mut R,
    ) -> Result<Self> {
        let mut c = in_channels;
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            layers.push(match *spec {
                LayerSpec::Conv {
                    channels,
                    kernel,
                    stride,
                    dilation,
                    activation,
                } => {
                    let conv =
                        Conv2dParams::init(c, channels, kernel, stride, dilation, activation, rng);
                    c = channels;
                    EncoderLayer::Conv(conv)
                }
                LayerSpec::Pool { kernel, stride } => {
                    EncoderLayer::Pool(MaxPool::new(kernel, stride)?)
                }
            });
        }
        Ok(ConvStack { layers })
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, StackCache)> {
        let mut x = input.clone();
        let mut cache = StackCache {
            layers: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        for layer in &self.layers {
            let (y, c) = match layer {
                EncoderLayer::Conv(p) => {
                    let (y, c) = p.forward(&x)?;
                    (y, LayerCache::Conv(c))
                }
                EncoderLayer::Pool(p) => {
                    let (y, c) = p.forward(&x)?;
                    (y, LayerCache::Pool(c))
                }
            };
            cache.layers.push(c);
            cache.outputs.push(y.clone());
            x = y;
        }
        Ok((x, cache))
    }

    /// Backward from `grad_out` at the last layer plus extra gradients
    /// arriving at intermediate outputs (`(layer index, gradient)`).
    /// Returns the input gradient and parameter gradients with the same layout.
    pub fn backward(
        &self,
        cache: &StackCache,
        grad_out: &Tensor,
        taps: &[(usize, &Tensor)],
    ) -> Result<(Tensor, ConvStack)> {
        let mut grad = grad_out.clone();
        let mut grads = self.clone();
        for (i, (layer, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            for (_, g) in taps.iter().filter(|(t, _)| *t == i) {
                grad.add_assign(g);
            }
            grad = match (layer, lc) {
                (EncoderLayer::Conv(p), LayerCache::Conv(c)) => {
                    let (dx, gp) = p.backward(c, &grad)?;
                    grads.layers[i] = EncoderLayer::Conv(gp);
                    dx
                }
                (EncoderLayer::Pool(p), LayerCache::Pool(c)) => p.backward(c, &grad)?,
                _ => return Err(Error::dim("stack cache does not match its layers")),
            };
        }
        Ok((grad, grads))
    }

    pub fn out_channels(&self, in_channels: usize) -> usize {
        self.layers.iter().fold(in_channels, |c, l| match l {
            EncoderLayer::Conv(p) => p.out_channels(),
            EncoderLayer::Pool(_) => c,
        })
    }
}

impl Params for ConvStack {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, layer) in self.layers.iter().enumerate() {
            if let EncoderLayer::Conv(p) = layer {
                p.visit(&join(prefix, &format!("conv{i}")), f);
            }
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if let EncoderLayer::Conv(p) = layer {
                p.visit_mut(&join(prefix, &format!("conv{i}")), f);
            }
        }
    }
}

/// Stride-8 local feature extractor ending in an L2-norm scale layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalEncoder {
    pub stack: ConvStack,
    pub reduce: Option<Conv2dParams>,
    pub norm: L2NormScaleParams,
}

#[derive(Clone, Debug)]
pub struct LocalCache {
    stack: StackCache,
    reduce: Option<ConvCache>,
    norm: L2NormCache,
}

impl LocalEncoder {
    pub fn init<R: Rng + ?Sized>(config: &EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let stack = ConvStack::init(3, &config.layers(), rng)?;
        let last = config.last_channels();
        let reduce = (last != config.output_channels).then(|| {
            Conv2dParams::init(last, config.output_channels, 1, 1, 1, Activation::Relu, rng)
        });
        Ok(LocalEncoder {
            stack,
            reduce,
            norm: L2NormScaleParams::new(config.l2_scale)?,
        })
    }

    pub fn output_channels(&self) -> usize {
        match &self.reduce {
            Some(r) => r.out_channels(),
            None => self.stack.out_channels(3),
        }
    }

    /// Features before the L2-norm layer.
    pub fn features(&self, image: &Tensor) -> Result<Tensor> {
        let (x, _) = self.stack.forward(image)?;
        match &self.reduce {
            Some(r) => Ok(r.forward(&x)?.0),
            None => Ok(x),
        }
    }

    pub fn forward(&self, image: &Tensor) -> Result<(Tensor, LocalCache)> {
        let (x, stack) = self.stack.forward(image)?;
        let (x, reduce) = match &self.reduce {
            Some(r) => {
                let (y, c) = r.forward(&x)?;
                (y, Some(c))
            }
            None => (x, None),
        };
        let (out, norm) = self.norm.forward(&x)?;
        Ok((
            out,
            LocalCache {
                stack,
                reduce,
                norm,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &LocalCache,
        grad_out: &Tensor,
    ) -> Result<(Tensor, LocalEncoder)> {
        let (mut g, norm) = self.norm.backward(&cache.norm, grad_out)?;
        let reduce = match (&self.reduce, &cache.reduce) {
            (Some(r), Some(c)) => {
                let (dx, gr) = r.backward(c, &g)?;
                g = dx;
                Some(gr)
            }
            _ => None,
        };
        let (dx, stack) = self.stack.backward(&cache.stack, &g, &[])?;
        Ok((
            dx,
            LocalEncoder {
                stack,
                reduce,
                norm,
            },
        ))
    }
}

impl Params for LocalEncoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.stack.visit(prefix, f);
        if let Some(r) = &self.reduce {
            r.visit(&join(prefix, "reduce"), f);
        }
        self.norm.visit(&join(prefix, "norm"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.stack.visit_mut(prefix, f);
        if let Some(r) = &mut self.reduce {
            r.visit_mut(&join(prefix, "reduce"), f);
        }
        self.norm.visit_mut(&join(prefix, "norm"), f);
    }
}

/// Encode a `P×Q×3` image in `[0, 1]` into a `⌈P/8⌉×⌈Q/8⌉×C` feature map.
pub fn toy_local_encode(image: &Tensor, encoder: &LocalEncoder) -> Result<Tensor> {
    let (_, _, c) = image.dims3()?;
    if c != 3 {
        return Err(Error::dim(format!(
            "local encoder expects an RGB image, got {c} channels"
        )));
    }
    Ok(encoder.forward(image)?.0)
}

/// Two intermediate layers, each reduced by a 1×1 ReLU conv and normalized
/// with one shared scale, concatenated and reduced to the output width.
#[derive(Clone, Debug, PartialEq)]
pub struct MultilayerEncoder {
    pub stack: ConvStack,
    /// Indices into `stack.layers` whose outputs are tapped.
    pub taps: (usize, usize),
    pub tap_reduce: [Conv2dParams; 2],
    pub norm: L2NormScaleParams,
    pub fuse: Conv2dParams,
}

#[derive(Clone, Debug)]
pub struct MultilayerCache {
    stack: StackCache,
    tap_reduce: [ConvCache; 2],
    norms: [L2NormCache; 2],
    fuse: ConvCache,
    reduced_channels: usize,
}

impl MultilayerEncoder {
    pub fn init<R: Rng + ?Sized>(
        config: &EncoderConfig,
        taps: (usize, usize),
        tap_channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let specs = config.layers();
        let stack = ConvStack::init(3, &specs, rng)?;
        if taps.0 >= specs.len() || taps.1 >= specs.len() {
            return Err(Error::Config(format!(
                "tap indices {taps:?} exceed {} layers",
                specs.len()
            )));
        }
        let width = |i: usize| {
            ConvStack {
                layers: stack.layers[..=i].to_vec(),
            }
            .out_channels(3)
        };
        let tap_reduce = [
            Conv2dParams::init(width(taps.0), tap_channels, 1, 1, 1, Activation::Relu, rng),
            Conv2dParams::init(width(taps.1), tap_channels, 1, 1, 1, Activation::Relu, rng),
        ];
        let fuse = Conv2dParams::init(
            2 * tap_channels,
            config.output_channels,
            1,
            1,
            1,
            Activation::Relu,
            rng,
        );
        Ok(MultilayerEncoder {
            stack,
            taps,
            tap_reduce,
            norm: L2NormScaleParams::new(config.l2_scale)?,
            fuse,
        })
    }

    /// Returns the fused map and the two normalized taps.
    pub fn forward(&self, image: &Tensor) -> Result<(Tensor, [Tensor; 2], MultilayerCache)> {
        let (_, stack) = self.stack.forward(image)?;
        let (a, b) = (stack.output(self.taps.0), stack.output(self.taps.1));
        if a.shape()[..2] != b.shape()[..2] {
            return Err(Error::dim(format!(
                "tap spatial dims differ: {:?} vs {:?}",
                &a.shape()[..2],
                &b.shape()[..2]
            )));
        }
        let (ra, ca) = self.tap_reduce[0].forward(a)?;
        let (rb, cb) = self.tap_reduce[1].forward(b)?;
        let (na, la) = self.norm.forward(&ra)?;
        let (nb, lb) = self.norm.forward(&rb)?;
        let cat = concat_channels(&[&na, &nb])?;
        let (out, fc) = self.fuse.forward(&cat)?;
        let reduced_channels = na.shape()[2];
        Ok((
            out,
            [na, nb],
            MultilayerCache {
                stack,
                tap_reduce: [ca, cb],
                norms: [la, lb],
                fuse: fc,
                reduced_channels,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &MultilayerCache,
        grad_out: &Tensor,
    ) -> Result<(Tensor, MultilayerEncoder)> {
        let (dcat, fuse) = self.fuse.backward(&cache.fuse, grad_out)?;
        let c = cache.reduced_channels;
        let [ga, gb] = split_channels(&dcat, &[c, c])?
            .try_into()
            .map_err(|_| Error::dim("fusion split"))?;
        let (da, sa) = self.norm.backward(&cache.norms[0], &ga)?;
        let (db, sb) = self.norm.backward(&cache.norms[1], &gb)?;
        let mut norm = sa;
        norm.accumulate(&sb);
        let (ta, ra) = self.tap_reduce[0].backward(&cache.tap_reduce[0], &da)?;
        let (tb, rb) = self.tap_reduce[1].backward(&cache.tap_reduce[1], &db)?;
        let last = self.stack.layers.len() - 1;
        let zero = cache.stack.output(last).zeros_like();
        let (dx, stack) = self.stack.backward(
            &cache.stack,
            &zero,
            &[(self.taps.0, &ta), (self.taps.1, &tb)],
        )?;
        Ok((
            dx,
            MultilayerEncoder {
                stack,
                taps: self.taps,
                tap_reduce: [ra, rb],
                norm,
                fuse,
            },
        ))
    }
}

impl Params for MultilayerEncoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.stack.visit(prefix, f);
        self.tap_reduce[0].visit(&join(prefix, "tap0"), f);
        self.tap_reduce[1].visit(&join(prefix, "tap1"), f);
        self.norm.visit(&join(prefix, "norm"), f);
        self.fuse.visit(&join(prefix, "fuse"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.stack.visit_mut(prefix, f);
        self.tap_reduce[0].visit_mut(&join(prefix, "tap0"), f);
        self.tap_reduce[1].visit_mut(&join(prefix, "tap1"), f);
        self.norm.visit_mut(&join(prefix, "norm"), f);
        self.fuse.visit_mut(&join(prefix, "fuse"), f);
    }
}

pub fn toy_local_encode_multilayer(image: &Tensor, encoder: &MultilayerEncoder) -> Result<Tensor> {
    Ok(encoder.forward(image)?.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneEncoderConfig {
    /// Images are resized to `input_size × input_size` first.
    pub input_size: usize,
    pub blocks: Vec<ConvBlock>,
    pub width: usize,
    pub l2_scale: f64,
}

impl Default for SceneEncoderConfig {
    fn default() -> Self {
        SceneEncoderConfig {
            input_size: 32,
            blocks: vec![ConvBlock::new(16, 3, 2, 1), ConvBlock::new(32, 3, 2, 1)],
            width: SCENE_WIDTH,
            l2_scale: DEFAULT_SCENE_SCALE,
        }
    }
}

impl SceneEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        validate_blocks(&self.blocks)?;
        if self.input_size == 0 || self.width == 0 || !(self.l2_scale > 0.0) {
            return Err(Error::Config(
                "scene encoder size, width and scale must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Global image descriptor: convs, average pooling, FC + ReLU, L2 scale.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneEncoder {
    pub input_size: usize,
    pub stack: ConvStack,
    pub fc: LinearParams,
    pub norm: L2NormScaleParams,
}

#[derive(Clone, Debug)]
pub struct SceneCache {
    stack: StackCache,
    pooled_dims: (usize, usize),
    fc: LinearCache,
    norm: L2NormCache,
}

impl SceneEncoder {
    pub fn init<R: Rng + ?Sized>(config: &SceneEncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let stack = ConvStack::init(3, &expand(&config.blocks), rng)?;
        let c = stack.out_channels(3);
        Ok(SceneEncoder {
            input_size: config.input_size,
            stack,
            fc: LinearParams::init(c, config.width, Activation::Relu, rng),
            norm: L2NormScaleParams::new(config.l2_scale)?,
        })
    }

    /// Returns the scene vector and the pre-normalization activations.
    pub fn forward(&self, image: &Tensor) -> Result<(Vec<f64>, Vec<f64>, SceneCache)> {
        let resized = resize_bilinear(image, self.input_size, self.input_size)?;
        let (maps, stack) = self.stack.forward(&resized)?;
        let (h, w, _) = maps.dims3()?;
        let pooled = global_avg_pool(&maps)?;
        let (act, fc) = self.fc.forward(&pooled)?;
        let (out, norm) = self.norm.forward(&Tensor::vector(act.clone()))?;
        Ok((
            out.into_data(),
            act,
            SceneCache {
                stack,
                pooled_dims: (h, w),
                fc,
                norm,
            },
        ))
    }

    /// Parameter gradients given the gradient at the scene vector.
    pub fn backward(&self, cache: &SceneCache, grad_out: &[f64]) -> Result<SceneEncoder> {
        let (g, norm) = self
            .norm
            .backward(&cache.norm, &Tensor::vector(grad_out.to_vec()))?;
        let (dpool, fc) = self.fc.backward(&cache.fc, g.data());
        let (h, w) = cache.pooled_dims;
        let dmaps = global_avg_pool_backward(h, w, &dpool);
        let (_, stack) = self.stack.backward(&cache.stack, &dmaps, &[])?;
        Ok(SceneEncoder {
            input_size: self.input_size,
            stack,
            fc,
            norm,
        })
    }
}

impl Params for SceneEncoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.stack.visit(prefix, f);
        self.fc.visit(&join(prefix, "fc"), f);
        self.norm.visit(&join(prefix, "norm"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.stack.visit_mut(prefix, f);
        self.fc.visit_mut(&join(prefix, "fc"), f);
        self.norm.visit_mut(&join(prefix, "norm"), f);
    }
}

pub fn toy_scene_encode(image: &Tensor, encoder: &SceneEncoder) -> Result<Vec<f64>> {
    Ok(encoder.forward(image)?.0)
}

fn load_checked(path: &Path, rank: usize, what: &str, renormalize: Option<f64>) -> Result<Tensor> {
    let t = serialize::load(path)?;
    if t.rank() != rank {
        return Err(Error::Format(format!(
            "{}: {what} must have rank {rank}, file has rank {}",
            path.display(),
            t.rank()
        )));
    }
    t.ensure_finite(what)?;
    match renormalize {
        Some(scale) => L2NormScaleParams::new(scale)?.forward(&t).map(|(y, _)| y),
        None => Ok(t),
    }
}

/// Load an externally computed H×W×C feature map, optionally rescaled to L2 norm `renormalize`.
pub fn load_feature_map(path: &Path, renormalize: Option<f64>) -> Result<Tensor> {
    load_checked(path, 3, "feature map", renormalize)
}

pub fn load_scene_vector(path: &Path, renormalize: Option<f64>) -> Result<Vec<f64>> {
    Ok(load_checked(path, 1, "scene vector", renormalize)?.into_data())
}
