//! Finite-difference checks of every backward pass, from single layers up to
//! the full trainable pipeline.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoders::{
    ConvBlock, EncoderConfig, LocalEncoder, MultilayerEncoder, SceneEncoder, SceneEncoderConfig,
};
use crate::error::{Error, Result};
use crate::layers::{
    global_avg_pool, global_avg_pool_backward, softmax_map, softmax_map_backward, Activation,
    BilinearUpsample, Conv2dParams, L2NormScaleParams, LinearParams, MaxPool,
};
use crate::lstm::{lstm_step_backward, lstm_step_cached, LstmParams, LstmState};
use crate::metrics::FixationMap;
use crate::numerics::gradcheck::{param_gradient_errors, sampled_param_gradient_errors};
use crate::numerics::{
    finite_diff_gradient, relative_error, Tensor, DEFAULT_STEP, GRADIENT_TOLERANCE,
};
use crate::params::Params;
use crate::spatial::{
    bidirectional_scan, bidirectional_scan_backward, DsclstmParams, ScanAxis, SceneInjection,
    SlstmParams,
};
use crate::training::{nss_loss, sample_gradient, Model, ModelConfig, Sample};

/// Outcome of one comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub module: &'static str,
    pub name: String,
    /// Largest relative error over the checked tensors.
    pub error: f64,
    pub seconds: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.error < GRADIENT_TOLERANCE
    }
}

/// Hidden size and feature grid of the end-to-end check.
pub const PIPELINE_HIDDEN: usize = 8;
pub const PIPELINE_GRID: usize = 8;
/// Coordinates differenced per parameter tensor in the end-to-end check.
pub const PIPELINE_COORDINATES: usize = 24;
/// Finite-difference step of the end-to-end check. Smaller than the default
/// because a bias shift moves thousands of ReLU inputs at once.
pub const PIPELINE_STEP: f64 = 1e-6;
const PIPELINE_BIAS_JITTER: f64 = 0.05;

/// Check groups, in run order.
pub const MODULES: [&str; 4] = ["layers", "lstm", "encoders", "pipeline"];

struct Suite {
    module: &'static str,
    rng: ChaCha8Rng,
    checks: Vec<GradCheck>,
}

impl Suite {
    fn tensor(&mut self, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| self.rng.gen_range(-1.0..1.0))
    }

    fn vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.rng.gen_range(-1.0..1.0)).collect()
    }

    fn record(&mut self, name: &str, start: Instant, errors: impl IntoIterator<Item = f64>) {
        let error = errors.into_iter().fold(0.0, f64::max);
        self.checks.push(GradCheck {
            module: self.module,
            name: name.to_string(),
            error,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn vdot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Relative error of `analytic` against finite differences of `f` at `x`.
fn input_error(f: impl FnMut(&Tensor) -> f64, x: &Tensor, analytic: &Tensor) -> Result<f64> {
    let num = finite_diff_gradient(f, x, DEFAULT_STEP)?;
    Ok(relative_error(analytic.data(), num.data()))
}

fn param_error<P: Params + Clone>(
    params: &P,
    analytic: &P,
    loss: impl FnMut(&P) -> f64,
) -> Result<f64> {
    Ok(param_gradient_errors(params, analytic, loss, DEFAULT_STEP)?
        .into_iter()
        .map(|(_, e)| e)
        .fold(0.0, f64::max))
}

fn conv(
    s: &mut Suite,
    name: &str,
    stride: usize,
    dilation: usize,
    activation: Activation,
) -> Result<()> {
    let t = Instant::now();
    let p = Conv2dParams::init(3, 4, 3, stride, dilation, activation, &mut s.rng);
    let x = s.tensor(&[7, 6, 3]);
    let (y, cache) = p.forward(&x)?;
    let r = s.tensor(y.shape());
    let (dx, dp) = p.backward(&cache, &r)?;
    let e1 = input_error(|x| dot(&p.forward(x).unwrap().0, &r), &x, &dx)?;
    let e2 = param_error(&p, &dp, |q| dot(&q.forward(&x).unwrap().0, &r))?;
    s.record(name, t, [e1, e2]);
    Ok(())
}

fn layers(s: &mut Suite) -> Result<()> {
    conv(s, "conv2d relu", 1, 1, Activation::Relu)?;
    conv(s, "conv2d strided", 2, 1, Activation::None)?;
    conv(s, "conv2d dilated", 1, 2, Activation::Relu)?;

    let t = Instant::now();
    let pool = MaxPool::new(2, 2)?;
    let x = s.tensor(&[6, 5, 2]);
    let (y, cache) = pool.forward(&x)?;
    let r = s.tensor(y.shape());
    let dx = pool.backward(&cache, &r)?;
    let e = input_error(|x| dot(&pool.forward(x).unwrap().0, &r), &x, &dx)?;
    s.record("max pool", t, [e]);

    let t = Instant::now();
    let p = L2NormScaleParams::new(3.5)?;
    let x = s.tensor(&[3, 4, 2]);
    let (y, cache) = p.forward(&x)?;
    let r = s.tensor(y.shape());
    let (dx, dp) = p.backward(&cache, &r)?;
    let e1 = input_error(|x| dot(&p.forward(x).unwrap().0, &r), &x, &dx)?;
    let e2 = param_error(&p, &dp, |q| dot(&q.forward(&x).unwrap().0, &r))?;
    s.record("l2 norm and scale", t, [e1, e2]);

    for (name, act) in [
        ("linear relu", Activation::Relu),
        ("linear", Activation::None),
    ] {
        let t = Instant::now();
        let p = LinearParams::init(5, 4, act, &mut s.rng);
        let x = Tensor::vector(s.vec(5));
        let (y, cache) = p.forward(x.data())?;
        let r = s.vec(y.len());
        let (dx, dp) = p.backward(&cache, &r);
        let e1 = input_error(
            |x| vdot(&p.forward(x.data()).unwrap().0, &r),
            &x,
            &Tensor::vector(dx),
        )?;
        let e2 = param_error(&p, &dp, |q| vdot(&q.forward(x.data()).unwrap().0, &r))?;
        s.record(name, t, [e1, e2]);
    }

    let t = Instant::now();
    let x = s.tensor(&[4, 3, 5]);
    let r = s.vec(5);
    let dx = global_avg_pool_backward(4, 3, &r);
    let e = input_error(|x| vdot(&global_avg_pool(x).unwrap(), &r), &x, &dx)?;
    s.record("global average pool", t, [e]);

    let t = Instant::now();
    let x = s.tensor(&[4, 5, 1]);
    let y = softmax_map(&x)?;
    let r = s.tensor(y.shape());
    let dx = softmax_map_backward(&y, &r)?;
    let e = input_error(|x| dot(&softmax_map(x).unwrap(), &r), &x, &dx)?;
    s.record("spatial softmax", t, [e]);

    let t = Instant::now();
    let up = BilinearUpsample::new(8)?;
    let x = s.tensor(&[3, 4]);
    let y = up.forward(&x)?;
    let r = s.tensor(y.shape());
    let dx = up.backward(3, 4, &r)?;
    let e = input_error(|x| dot(&up.forward(x).unwrap(), &r), &x, &dx)?;
    s.record("bilinear upsample x8", t, [e]);

    let t = Instant::now();
    let x = s.tensor(&[5, 6, 1]).map(|v| v + 1.5);
    let f = FixationMap::new(5, 6, vec![(0, 1), (2, 2), (4, 5)])?;
    let (_, dx) = nss_loss(&x, &f)?;
    let e = input_error(|x| nss_loss(x, &f).unwrap().0, &x, &dx)?;
    s.record("negative nss loss", t, [e]);
    Ok(())
}

fn lstm(s: &mut Suite) -> Result<()> {
    let t = Instant::now();
    let (m, n, d) = (3, 4, 2);
    let p = LstmParams::init(m, n, Some(d), &mut s.rng);
    let x = s.vec(m);
    let prev = LstmState {
        h: s.vec(n),
        c: s.vec(n),
    };
    let scene = s.vec(d);
    let (rh, rc) = (s.vec(n), s.vec(n));
    let loss = |x: &[f64], prev: &LstmState, scene: &[f64], p: &LstmParams| {
        let (next, _) = lstm_step_cached(x, prev, Some(scene), p).unwrap();
        vdot(&next.h, &rh) + vdot(&next.c, &rc)
    };
    let (_, cache) = lstm_step_cached(&x, &prev, Some(&scene), &p)?;
    let mut dp = p.zeros_like();
    let g = lstm_step_backward(&rh, &rc, &cache, &p, &mut dp)?;
    let xs = Tensor::vector(x.clone());
    let e1 = input_error(
        |v| loss(v.data(), &prev, &scene, &p),
        &xs,
        &Tensor::vector(g.dx),
    )?;
    let e2 = input_error(
        |v| {
            loss(
                &x,
                &LstmState {
                    h: v.data().to_vec(),
                    c: prev.c.clone(),
                },
                &scene,
                &p,
            )
        },
        &Tensor::vector(prev.h.clone()),
        &Tensor::vector(g.dh_prev),
    )?;
    let e3 = input_error(
        |v| {
            loss(
                &x,
                &LstmState {
                    h: prev.h.clone(),
                    c: v.data().to_vec(),
                },
                &scene,
                &p,
            )
        },
        &Tensor::vector(prev.c.clone()),
        &Tensor::vector(g.dc_prev),
    )?;
    let e4 = input_error(
        |v| loss(&x, &prev, v.data(), &p),
        &Tensor::vector(scene.clone()),
        &Tensor::vector(g.dscene.expect("scene was used")),
    )?;
    let e5 = param_error(&p, &dp, |q| loss(&x, &prev, &scene, q))?;
    s.record("lstm step", t, [e1, e2, e3, e4, e5]);

    for (name, axis) in [
        ("row scan", ScanAxis::Rows),
        ("column scan", ScanAxis::Columns),
    ] {
        let t = Instant::now();
        let fwd = LstmParams::init(2, 3, Some(2), &mut s.rng);
        let bwd = LstmParams::init(2, 3, Some(2), &mut s.rng);
        let map = s.tensor(&[3, 4, 2]);
        let scene = s.vec(2);
        let inj = SceneInjection::FirstStep;
        let (y, cache) = bidirectional_scan(&map, &fwd, &bwd, Some(&scene), axis, inj)?;
        let r = s.tensor(y.shape());
        let g = bidirectional_scan_backward(&cache, &fwd, &bwd, &r)?;
        let run = |m: &Tensor, f: &LstmParams, b: &LstmParams, sc: &[f64]| {
            dot(
                &bidirectional_scan(m, f, b, Some(sc), axis, inj).unwrap().0,
                &r,
            )
        };
        let e1 = input_error(|m| run(m, &fwd, &bwd, &scene), &map, &g.input)?;
        let e2 = param_error(&fwd, &g.forward, |f| run(&map, f, &bwd, &scene))?;
        let e3 = param_error(&bwd, &g.backward, |b| run(&map, &fwd, b, &scene))?;
        let e4 = input_error(
            |v| run(&map, &fwd, &bwd, v.data()),
            &Tensor::vector(scene.clone()),
            &Tensor::vector(g.scene.expect("scene was used")),
        )?;
        s.record(name, t, [e1, e2, e3, e4]);
    }

    for (name, inj) in [
        ("slstm", SceneInjection::FirstStep),
        ("slstm every-step scene", SceneInjection::EveryStep),
    ] {
        let t = Instant::now();
        let p = SlstmParams::init(3, 3, Some(2), &mut s.rng);
        let map = s.tensor(&[3, 3, 3]);
        let scene = s.vec(2);
        let (y, cache) = p.forward(&map, Some(&scene), inj)?;
        let r = s.tensor(y.shape());
        let (dx, dp, ds) = p.backward(&cache, &r)?;
        let run = |m: &Tensor, q: &SlstmParams, sc: &[f64]| {
            dot(&q.forward(m, Some(sc), inj).unwrap().0, &r)
        };
        let e1 = input_error(|m| run(m, &p, &scene), &map, &dx)?;
        let e2 = param_error(&p, &dp, |q| run(&map, q, &scene))?;
        let e3 = input_error(
            |v| run(&map, &p, v.data()),
            &Tensor::vector(scene.clone()),
            &Tensor::vector(ds.expect("scene was used")),
        )?;
        s.record(name, t, [e1, e2, e3]);
    }

    let t = Instant::now();
    let p = DsclstmParams::init(3, 3, 2, Some(2), &mut s.rng)?;
    let map = s.tensor(&[3, 4, 3]);
    let scene = s.vec(2);
    let (y, cache) = p.forward(&map, Some(&scene))?;
    let r = s.tensor(y.shape());
    let g = p.backward(&cache, &r)?;
    let run =
        |m: &Tensor, q: &DsclstmParams, sc: &[f64]| dot(&q.forward(m, Some(sc)).unwrap().0, &r);
    let e1 = input_error(|m| run(m, &p, &scene), &map, &g.input)?;
    let e2 = param_error(&p, &g.params, |q| run(&map, q, &scene))?;
    let e3 = input_error(
        |v| run(&map, &p, v.data()),
        &Tensor::vector(scene.clone()),
        &Tensor::vector(g.scene.expect("scene was used")),
    )?;
    s.record("dsclstm depth 2", t, [e1, e2, e3]);
    Ok(())
}

fn tiny_encoder_config() -> EncoderConfig {
    EncoderConfig {
        blocks: vec![
            ConvBlock::new(6, 3, 1, 1).pool(2, 2),
            ConvBlock::new(8, 3, 1, 1).pool(2, 2),
            ConvBlock::new(8, 3, 1, 2).pool(2, 2),
        ],
        output_channels: 3,
        l2_scale: 5.0,
    }
}

fn encoders(s: &mut Suite) -> Result<()> {
    let image = s.tensor(&[16, 16, 3]).map(|v| 0.5 + 0.5 * v);

    let t = Instant::now();
    let enc = LocalEncoder::init(&tiny_encoder_config(), &mut s.rng)?;
    let (y, cache) = enc.forward(&image)?;
    let r = s.tensor(y.shape());
    let (dx, dp) = enc.backward(&cache, &r)?;
    let e1 = input_error(|x| dot(&enc.forward(x).unwrap().0, &r), &image, &dx)?;
    let e2 = param_error(&enc, &dp, |q| dot(&q.forward(&image).unwrap().0, &r))?;
    s.record("local encoder", t, [e1, e2]);

    let t = Instant::now();
    let enc = MultilayerEncoder::init(&tiny_encoder_config(), (3, 4), 6, &mut s.rng)?;
    let (y, _, cache) = enc.forward(&image)?;
    let r = s.tensor(y.shape());
    let (dx, dp) = enc.backward(&cache, &r)?;
    let e1 = input_error(|x| dot(&enc.forward(x).unwrap().0, &r), &image, &dx)?;
    let e2 = param_error(&enc, &dp, |q| dot(&q.forward(&image).unwrap().0, &r))?;
    s.record("multilayer encoder", t, [e1, e2]);

    let t = Instant::now();
    let cfg = SceneEncoderConfig {
        input_size: 8,
        blocks: vec![ConvBlock::new(3, 3, 2, 1), ConvBlock::new(4, 3, 2, 1)],
        width: 5,
        l2_scale: 9.0,
    };
    let enc = SceneEncoder::init(&cfg, &mut s.rng)?;
    let (y, _, cache) = enc.forward(&image)?;
    let r = s.vec(y.len());
    let dp = enc.backward(&cache, &r)?;
    let e = param_error(&enc, &dp, |q| vdot(&q.forward(&image).unwrap().0, &r))?;
    s.record("scene encoder", t, [e]);
    Ok(())
}

/// Configuration of the end-to-end check: 64×64 input, 8×8 feature grid,
/// `N = 8`, two SLSTM layers with the scene vector.
pub fn pipeline_config() -> ModelConfig {
    ModelConfig {
        channels: 4,
        hidden: PIPELINE_HIDDEN,
        depth: 2,
        scene: true,
        scene_width: 8,
        ..ModelConfig::default()
    }
}

fn pipeline(s: &mut Suite) -> Result<()> {
    let t = Instant::now();
    let mut model = Model::init(&pipeline_config(), &mut s.rng)?;
    // Zero biases over all-zero ReLU inputs put pre-activations exactly on
    // the kink; jittering them moves the check to a generic point.
    model.visit_mut("", &mut |name, t| {
        if name.ends_with("bias") {
            for v in t.data_mut() {
                *v += s.rng.gen_range(-PIPELINE_BIAS_JITTER..PIPELINE_BIAS_JITTER);
            }
        }
    });
    let size = PIPELINE_GRID * crate::encoders::ENCODER_STRIDE;
    let points = (0..12)
        .map(|_| (s.rng.gen_range(0..size), s.rng.gen_range(0..size)))
        .collect();
    let sample = Sample {
        image: s.tensor(&[size, size, 3]).map(|v| 0.5 + 0.5 * v),
        fixations: FixationMap::new(size, size, points)?,
        target: None,
    };
    let (_, grads) = sample_gradient(&model, &sample)?;
    let loss = |m: &Model| sample_gradient(m, &sample).unwrap().0;
    let report = sampled_param_gradient_errors(
        &model,
        &grads,
        loss,
        PIPELINE_STEP,
        PIPELINE_COORDINATES,
        &mut s.rng,
    )?;
    s.record("end-to-end pipeline", t, report.into_iter().map(|(_, e)| e));
    Ok(())
}

/// Run every check with inputs and parameters drawn from `seed`.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheck>> {
    gradient_suite_for(seed, &MODULES)
}

/// Run the named groups only. Each group draws from its own stream of
/// `seed`, so a filtered run reproduces the same numbers as a full one.
pub fn gradient_suite_for(seed: u64, modules: &[&str]) -> Result<Vec<GradCheck>> {
    let mut checks = Vec::new();
    for name in modules {
        let Some(index) = MODULES.iter().position(|m| m == name) else {
            return Err(Error::Config(format!(
                "unknown gradient check module {name:?}; expected one of {}",
                MODULES.join(", ")
            )));
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let mut s = Suite {
            module: MODULES[index],
            rng,
            checks: Vec::new(),
        };
        match index {
            0 => layers(&mut s)?,
            1 => lstm(&mut s)?,
            2 => encoders(&mut s)?,
            _ => pipeline(&mut s)?,
        }
        checks.append(&mut s.checks);
    }
    Ok(checks)
}
