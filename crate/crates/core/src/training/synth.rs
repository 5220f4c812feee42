//! Visual-search stimuli: distractors plus one target that differs in a
//! single feature, with fixations clustered on the target.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::config::{push, take, Entries};
use crate::error::{Error, Result};
use crate::metrics::FixationMap;
use crate::numerics::Tensor;

const BACKGROUND: f64 = 0.5;
const PLACEMENT_ATTEMPTS: usize = 2000;

/// Feature in which the target differs from the distractors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PopoutMode {
    /// Discs; the target hue is opposite to the shared distractor hue.
    Color,
    /// Bars of one colour; the target is rotated by 90°.
    Orientation,
    /// A single disc and no distractors.
    Lone,
    /// Distractors only; fixations follow the center-bias component.
    None,
}

impl fmt::Display for PopoutMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PopoutMode::Color => "color",
            PopoutMode::Orientation => "orientation",
            PopoutMode::Lone => "lone",
            PopoutMode::None => "none",
        })
    }
}

impl FromStr for PopoutMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "color" => Ok(PopoutMode::Color),
            "orientation" => Ok(PopoutMode::Orientation),
            "lone" => Ok(PopoutMode::Lone),
            "none" => Ok(PopoutMode::None),
            _ => Err(format!("unknown pop-out mode {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub distractors: usize,
    /// Object radius in pixels.
    pub radius: f64,
    pub mode: PopoutMode,
    pub fixations: usize,
    /// Spread of target fixations as a fraction of `min(height, width)`.
    pub fixation_sigma: f64,
    /// Probability that a fixation comes from the center-bias Gaussian.
    pub center_bias: f64,
    /// Spread of the center-bias Gaussian as a fraction of `min(height, width)`.
    pub center_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            height: 64,
            width: 64,
            distractors: 6,
            radius: 4.5,
            mode: PopoutMode::Color,
            fixations: 16,
            fixation_sigma: 0.04,
            center_bias: 0.1,
            center_sigma: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.fixations == 0 {
            return Err(Error::Config(
                "image size and fixation count must be positive".into(),
            ));
        }
        if !(self.radius > 0.0) || !(self.fixation_sigma > 0.0) || !(self.center_sigma > 0.0) {
            return Err(Error::Config("radius and spreads must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.center_bias) {
            return Err(Error::Config("center_bias must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub(crate) fn take_from(&mut self, e: &mut Entries) -> Result<()> {
        take(e, "height", &mut self.height)?;
        take(e, "width", &mut self.width)?;
        take(e, "distractors", &mut self.distractors)?;
        take(e, "radius", &mut self.radius)?;
        take(e, "mode", &mut self.mode)?;
        take(e, "fixations", &mut self.fixations)?;
        take(e, "fixation_sigma", &mut self.fixation_sigma)?;
        take(e, "center_bias", &mut self.center_bias)?;
        take(e, "center_sigma", &mut self.center_sigma)
    }

    pub(crate) fn write_to(&self, out: &mut String) {
        push(out, "height", self.height);
        push(out, "width", self.width);
        push(out, "distractors", self.distractors);
        push(out, "radius", self.radius);
        push(out, "mode", self.mode);
        push(out, "fixations", self.fixations);
        push(out, "fixation_sigma", self.fixation_sigma);
        push(out, "center_bias", self.center_bias);
        push(out, "center_sigma", self.center_sigma);
    }
}

/// One stimulus with its fixations.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `H×W×3`, values in `[0, 1]`.
    pub image: Tensor,
    pub fixations: FixationMap,
    /// Target center `(row, col)` in pixel coordinates.
    pub target: Option<(f64, f64)>,
}

impl Sample {
    /// Left-right mirror of image, fixations and target.
    pub fn mirrored(&self) -> Result<Sample> {
        Ok(Sample {
            image: self.image.flip_horizontal()?,
            fixations: self.fixations.mirrored(),
            target: self
                .target
                .map(|(r, c)| (r, self.fixations.width() as f64 - c)),
        })
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Disc,
    Bar { angle: f64 },
}

#[derive(Clone, Copy, Debug)]
struct Object {
    center: (f64, f64),
    shape: Shape,
    color: [f64; 3],
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6 % 2.0 - 1.0).abs());
    let (r, g, b) = match h6 as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn covers(obj: &Object, radius: f64, y: f64, x: f64) -> bool {
    let (dy, dx) = (y - obj.center.0, x - obj.center.1);
    match obj.shape {
        Shape::Disc => dy * dy + dx * dx <= radius * radius,
        Shape::Bar { angle } => {
            let (s, c) = angle.sin_cos();
            let along = dx * c + dy * s;
            let across = -dx * s + dy * c;
            along.abs() <= radius && across.abs() <= radius * 0.35
        }
    }
}

fn place(cfg: &SynthConfig, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(f64, f64)>> {
    let r = cfg.radius;
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    if h < 2.0 * r + 2.0 || w < 2.0 * r + 2.0 {
        return Err(Error::Data(format!(
            "objects of radius {r} do not fit in a {}×{} image",
            cfg.height, cfg.width
        )));
    }
    let min_gap = 2.5 * r;
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(count);
    let mut attempts = 0;
    while centers.len() < count {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS {
            return Err(Error::Data(format!(
                "cannot place {count} objects of radius {r} in a {}×{} image",
                cfg.height, cfg.width
            )));
        }
        let c = (
            rng.gen_range(r + 1.0..h - r - 1.0),
            rng.gen_range(r + 1.0..w - r - 1.0),
        );
        if centers
            .iter()
            .all(|o| (o.0 - c.0).powi(2) + (o.1 - c.1).powi(2) >= min_gap * min_gap)
        {
            centers.push(c);
        }
    }
    Ok(centers)
}

/// Render a stimulus and sample its fixations; deterministic per `seed`.
pub fn generate_synthetic_sample(seed: u64, cfg: &SynthConfig) -> Result<Sample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hue = rng.gen::<f64>();
    let angle = rng.gen::<f64>() * std::f64::consts::PI;
    let base = hsv(hue, 0.85, 0.9);
    let (distractors, has_target) = match cfg.mode {
        PopoutMode::Lone => (0, true),
        PopoutMode::None => (cfg.distractors, false),
        _ => (cfg.distractors, true),
    };
    let centers = place(cfg, distractors + has_target as usize, &mut rng)?;
    let mut objects: Vec<Object> = centers
        .iter()
        .map(|&center| Object {
            center,
            shape: match cfg.mode {
                PopoutMode::Orientation => Shape::Bar { angle },
                _ => Shape::Disc,
            },
            color: base,
        })
        .collect();
    // The last placed object is the target.
    if has_target {
        let t = objects.last_mut().expect("target placed");
        match cfg.mode {
            PopoutMode::Color => t.color = hsv(hue + 0.5, 0.85, 0.9),
            PopoutMode::Orientation => {
                t.shape = Shape::Bar {
                    angle: angle + std::f64::consts::FRAC_PI_2,
                }
            }
            _ => {}
        }
    }

    let (h, w) = (cfg.height, cfg.width);
    let mut image = Tensor::filled(&[h, w, 3], BACKGROUND);
    for y in 0..h {
        for x in 0..w {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            if let Some(o) = objects.iter().find(|o| covers(o, cfg.radius, py, px)) {
                for (ch, &v) in o.color.iter().enumerate() {
                    image.set3(y, x, ch, v);
                }
            }
        }
    }

    let target = has_target.then(|| objects.last().expect("target placed").center);
    let short = h.min(w) as f64;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let center = (h as f64 / 2.0, w as f64 / 2.0);
    let points = (0..cfg.fixations)
        .map(|_| {
            let (mu, sigma) = match target {
                Some(t) if rng.gen::<f64>() >= cfg.center_bias => (t, cfg.fixation_sigma * short),
                _ => (center, cfg.center_sigma * short),
            };
            let r = mu.0 + sigma * unit.sample(&mut rng);
            let c = mu.1 + sigma * unit.sample(&mut rng);
            (
                (r.floor().max(0.0) as usize).min(h - 1),
                (c.floor().max(0.0) as usize).min(w - 1),
            )
        })
        .collect();
    Ok(Sample {
        image,
        fixations: FixationMap::new(h, w, points)?,
        target,
    })
}

/// Samples for seeds `first_seed..first_seed + n`.
pub fn generate_dataset(n: usize, first_seed: u64, cfg: &SynthConfig) -> Result<Vec<Sample>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| generate_synthetic_sample(first_seed.wrapping_add(i), cfg))
        .collect()
}
