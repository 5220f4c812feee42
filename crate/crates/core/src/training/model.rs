use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{join_list, push, take, take_list, Entries};
use crate::encoders::{
    EncoderConfig, LocalCache, LocalEncoder, SceneCache, SceneEncoder, SceneEncoderConfig,
    DEFAULT_LOCAL_SCALE, DEFAULT_SCENE_SCALE, ENCODER_STRIDE, SCENE_WIDTH,
};
use crate::error::{Error, Result};
use crate::layers::{
    resize_bilinear, softmax_map, softmax_map_backward, Activation, BilinearUpsample, Conv2dParams,
    ConvCache, GaussianBlur,
};
use crate::numerics::Tensor;
use crate::params::{join, Params};
use crate::spatial::{DsclstmCache, DsclstmParams, SceneInjection, MAX_DEPTH};

/// Learning-rate group of a parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    /// Encoders (pretrained in the full-scale setting).
    Pretrained,
    /// Contextual stack and saliency head.
    New,
}

/// Architecture of a trainable toy model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Width of the toy local encoder.
    pub channels: usize,
    /// Dilations of the encoder's post-pooling layers; controls the receptive field.
    pub dilations: Vec<usize>,
    pub local_scale: f64,
    pub hidden: usize,
    /// Stacked SLSTM layers; 0 puts the head directly on the local features.
    pub depth: usize,
    pub scene: bool,
    pub scene_width: usize,
    pub scene_scale: f64,
    pub injection: SceneInjection,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: 16,
            dilations: vec![1],
            local_scale: DEFAULT_LOCAL_SCALE,
            hidden: 8,
            depth: 2,
            scene: true,
            scene_width: SCENE_WIDTH,
            scene_scale: DEFAULT_SCENE_SCALE,
            injection: SceneInjection::FirstStep,
        }
    }
}

impl ModelConfig {
    pub fn encoder_config(&self) -> EncoderConfig {
        let mut c = EncoderConfig::toy_with_tail(self.channels, &self.dilations);
        c.l2_scale = self.local_scale;
        c
    }

    pub fn scene_config(&self) -> Option<SceneEncoderConfig> {
        self.scene.then(|| SceneEncoderConfig {
            width: self.scene_width,
            l2_scale: self.scene_scale,
            ..SceneEncoderConfig::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder_config().validate()?;
        if let Some(s) = self.scene_config() {
            s.validate()?;
        }
        if self.depth > MAX_DEPTH {
            return Err(Error::Config(format!(
                "depth must be 0..={MAX_DEPTH}, got {}",
                self.depth
            )));
        }
        if self.depth > 0 && self.hidden == 0 {
            return Err(Error::Config("hidden size must be positive".into()));
        }
        if self.depth == 0 && self.scene {
            return Err(Error::Config(
                "scene context needs at least one SLSTM layer".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn take_from(&mut self, e: &mut Entries) -> Result<()> {
        take(e, "channels", &mut self.channels)?;
        take_list(e, "dilations", &mut self.dilations)?;
        take(e, "local_scale", &mut self.local_scale)?;
        take(e, "hidden", &mut self.hidden)?;
        take(e, "depth", &mut self.depth)?;
        take(e, "scene", &mut self.scene)?;
        take(e, "scene_width", &mut self.scene_width)?;
        take(e, "scene_scale", &mut self.scene_scale)?;
        take(e, "injection", &mut self.injection)
    }

    pub(crate) fn write_to(&self, out: &mut String) {
        push(out, "channels", self.channels);
        push(out, "dilations", join_list(&self.dilations));
        push(out, "local_scale", self.local_scale);
        push(out, "hidden", self.hidden);
        push(out, "depth", self.depth);
        push(out, "scene", self.scene);
        push(out, "scene_width", self.scene_width);
        push(out, "scene_scale", self.scene_scale);
        push(out, "injection", self.injection);
    }
}

/// Local encoder, optional scene encoder, contextual stack and 1×1 head.
/// Softmax and the frozen ×8 bilinear upsampling follow the head.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: LocalEncoder,
    pub scene: Option<SceneEncoder>,
    pub context: Option<DsclstmParams>,
    pub head: Conv2dParams,
}

#[derive(Clone, Debug)]
pub struct ModelCache {
    local: LocalCache,
    scene: Option<SceneCache>,
    context: Option<DsclstmCache>,
    head: ConvCache,
    probs: Tensor,
}

impl Model {
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let encoder = LocalEncoder::init(&config.encoder_config(), rng)?;
        let scene = config
            .scene_config()
            .map(|c| SceneEncoder::init(&c, rng))
            .transpose()?;
        let features = encoder.output_channels();
        let context = if config.depth == 0 {
            None
        } else {
            let scene_dim = config.scene.then_some(config.scene_width);
            let mut d = DsclstmParams::init(features, config.hidden, config.depth, scene_dim, rng)?;
            d.injection = config.injection;
            Some(d)
        };
        let head_in = context
            .as_ref()
            .map_or(features, DsclstmParams::output_channels);
        let head = Conv2dParams::init(head_in, 1, 1, 1, 1, Activation::None, rng);
        Ok(Model {
            config: config.clone(),
            encoder,
            scene,
            context,
            head,
        })
    }

    /// [`Model::init`] with a ChaCha8 stream seeded by `seed`.
    pub fn seeded(config: &ModelConfig, seed: u64) -> Result<Self> {
        Model::init(config, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn group(name: &str) -> ParamGroup {
        if name.starts_with("encoder.") || name.starts_with("scene.") {
            ParamGroup::Pretrained
        } else {
            ParamGroup::New
        }
    }

    fn upsample() -> BilinearUpsample {
        BilinearUpsample::new(ENCODER_STRIDE).expect("stride is a valid factor")
    }

    /// Saliency probabilities on the ×8 grid of the feature map (sums to 1).
    /// The encoders see the image with its per-channel mean removed.
    pub fn forward(&self, image: &Tensor) -> Result<(Tensor, ModelCache)> {
        let centered = center_channels(image)?;
        let image = &centered;
        let (features, local) = self.encoder.forward(image)?;
        let (scene_vec, scene) = match &self.scene {
            Some(enc) => {
                let (v, _, c) = enc.forward(image)?;
                (Some(v), Some(c))
            }
            None => (None, None),
        };
        let (ctx, context) = match &self.context {
            Some(d) => {
                let (y, c) = d.forward(&features, scene_vec.as_deref())?;
                (y, Some(c))
            }
            None => (features, None),
        };
        let (logits, head) = self.head.forward(&ctx)?;
        let probs = softmax_map(&logits)?;
        let up = Self::upsample().forward(&probs)?;
        Ok((
            up,
            ModelCache {
                local,
                scene,
                context,
                head,
                probs,
            },
        ))
    }

    /// Parameter gradients given the gradient at the upsampled map.
    pub fn backward(&self, cache: &ModelCache, grad_out: &Tensor) -> Result<Model> {
        let (h, w) = cache.probs.dims2()?;
        let dprobs = Self::upsample().backward(h, w, grad_out)?;
        let dlogits = softmax_map_backward(&cache.probs, &dprobs)?.reshape(&[h, w, 1])?;
        let (dctx, head) = self.head.backward(&cache.head, &dlogits)?;
        let (dfeatures, context, dscene) = match (&self.context, &cache.context) {
            (Some(d), Some(c)) => {
                let g = d.backward(c, &dctx)?;
                (g.input, Some(g.params), g.scene)
            }
            _ => (dctx, None, None),
        };
        let (_, encoder) = self.encoder.backward(&cache.local, &dfeatures)?;
        let scene = match (&self.scene, &cache.scene) {
            (Some(enc), Some(c)) => {
                let ds = dscene.unwrap_or_else(|| vec![0.0; self.config.scene_width]);
                Some(enc.backward(c, &ds)?)
            }
            _ => None,
        };
        Ok(Model {
            config: self.config.clone(),
            encoder,
            scene,
            context,
            head,
        })
    }

    /// Saliency map at the input resolution: forward pass, resize, then the
    /// `σ = 0.035·min(P, Q)` Gaussian blur.
    pub fn predict(&self, image: &Tensor) -> Result<Tensor> {
        let (p, q, _) = image.dims3()?;
        let (up, _) = self.forward(image)?;
        let resized = resize_bilinear(&up, p, q)?;
        GaussianBlur::for_image(p, q)?.apply(&resized)
    }
}

/// Subtract each channel's mean over all pixels.
pub fn center_channels(image: &Tensor) -> Result<Tensor> {
    let (h, w, c) = image.dims3()?;
    let mut mean = vec![0.0; c];
    for px in image.data().chunks_exact(c) {
        for (m, v) in mean.iter_mut().zip(px) {
            *m += v;
        }
    }
    let n = (h * w) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let mut out = image.clone();
    for px in out.data_mut().chunks_exact_mut(c) {
        for (v, m) in px.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    Ok(out)
}

impl Params for Model {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        if let Some(s) = &self.scene {
            s.visit(&join(prefix, "scene"), f);
        }
        if let Some(c) = &self.context {
            c.visit(&join(prefix, "context"), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        if let Some(s) = &mut self.scene {
            s.visit_mut(&join(prefix, "scene"), f);
        }
        if let Some(c) = &mut self.context {
            c.visit_mut(&join(prefix, "context"), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
