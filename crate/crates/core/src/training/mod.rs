//! Negative-NSS training: loss, SGD with momentum, the step-decay schedule,
//! synthetic pop-out data, the train/validate loop and checkpoints.

pub mod ablation;
mod baseline;
mod checkpoint;
pub mod config;
pub mod dataset;
mod loss;
mod model;
mod optim;
pub mod synth;
mod trainer;

use std::path::PathBuf;

use crate::error::{Error, Result};
use config::{ensure_consumed, parse_key_values, push, take, Entries};

pub use baseline::CenterGaussian;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use loss::nss_loss;
pub use model::{center_channels, Model, ModelCache, ModelConfig, ParamGroup};
pub use optim::{sgd_momentum_step, OptimizerState};
pub use synth::{generate_dataset, generate_synthetic_sample, PopoutMode, Sample, SynthConfig};
pub use trainer::{
    evaluate, evaluate_maps, history_csv, sample_gradient, train, train_with, EvalSummary,
    HistoryRow, TrainOutcome,
};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_lr_pretrained: f64,
    pub base_lr_new: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub total_steps: usize,
    pub validate_every: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub flip_augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::salicon()
    }
}

impl TrainConfig {
    /// Large-dataset protocol: batch 20, learning rates 0.001 (encoders) and
    /// 0.01 (new layers) divided by 2.5 every 500 of 5000 steps.
    pub fn salicon() -> Self {
        TrainConfig {
            batch_size: 20,
            base_lr_pretrained: 0.001,
            base_lr_new: 0.01,
            lr_decay_factor: 2.5,
            lr_decay_every: 500,
            total_steps: 5000,
            validate_every: 500,
            momentum: 0.9,
            weight_decay: 0.0005,
            seed: 0,
            flip_augment: true,
        }
    }

    /// Fine-tuning protocol: every layer at 0.001, divided by 2.5 every 100 of 1000 steps.
    pub fn mit_finetune() -> Self {
        TrainConfig {
            base_lr_new: 0.001,
            lr_decay_every: 100,
            total_steps: 1000,
            validate_every: 100,
            ..TrainConfig::salicon()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "salicon" => Ok(TrainConfig::salicon()),
            "mit-finetune" => Ok(TrainConfig::mit_finetune()),
            _ => Err(Error::Config(format!(
                "unknown preset {name:?} (salicon, mit-finetune)"
            ))),
        }
    }

    /// Same schedule shape compressed (or stretched) to `total_steps`: decay
    /// and validation intervals scale proportionally.
    pub fn scaled_to(&self, total_steps: usize) -> Self {
        let f = total_steps as f64 / self.total_steps.max(1) as f64;
        let scale = |n: usize| ((n as f64 * f).round() as usize).max(1);
        TrainConfig {
            lr_decay_every: scale(self.lr_decay_every),
            validate_every: scale(self.validate_every).min(total_steps.max(1)),
            total_steps,
            ..self.clone()
        }
    }

    /// `total_steps = 0` is accepted and yields an untrained model.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.batch_size == 0 || self.lr_decay_every == 0 || self.validate_every == 0 {
            return bad("batch_size, lr_decay_every and validate_every must be positive");
        }
        if !(self.base_lr_pretrained > 0.0) || !(self.base_lr_new > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.lr_decay_factor >= 1.0) {
            return bad("lr_decay_factor must be at least 1");
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return bad("momentum must lie in [0, 1) and weight_decay must be non-negative");
        }
        if self.total_steps > 0 && self.validate_every > self.total_steps {
            return bad("validate_every exceeds total_steps");
        }
        Ok(())
    }

    pub(crate) fn take_from(&mut self, e: &mut Entries) -> Result<()> {
        take(e, "batch_size", &mut self.batch_size)?;
        take(e, "base_lr_pretrained", &mut self.base_lr_pretrained)?;
        take(e, "base_lr_new", &mut self.base_lr_new)?;
        take(e, "lr_decay_factor", &mut self.lr_decay_factor)?;
        take(e, "lr_decay_every", &mut self.lr_decay_every)?;
        take(e, "total_steps", &mut self.total_steps)?;
        take(e, "validate_every", &mut self.validate_every)?;
        take(e, "momentum", &mut self.momentum)?;
        take(e, "weight_decay", &mut self.weight_decay)?;
        take(e, "seed", &mut self.seed)?;
        take(e, "flip_augment", &mut self.flip_augment)
    }

    pub(crate) fn write_to(&self, out: &mut String) {
        push(out, "batch_size", self.batch_size);
        push(out, "base_lr_pretrained", self.base_lr_pretrained);
        push(out, "base_lr_new", self.base_lr_new);
        push(out, "lr_decay_factor", self.lr_decay_factor);
        push(out, "lr_decay_every", self.lr_decay_every);
        push(out, "total_steps", self.total_steps);
        push(out, "validate_every", self.validate_every);
        push(out, "momentum", self.momentum);
        push(out, "weight_decay", self.weight_decay);
        push(out, "seed", self.seed);
        push(out, "flip_augment", self.flip_augment);
    }
}

/// `base_lr(group) / decay^⌊step / decay_every⌋`.
pub fn lr_schedule(step: usize, group: ParamGroup, config: &TrainConfig) -> f64 {
    let base = match group {
        ParamGroup::Pretrained => config.base_lr_pretrained,
        ParamGroup::New => config.base_lr_new,
    };
    base / config
        .lr_decay_factor
        .powi((step / config.lr_decay_every) as i32)
}

/// Where training and validation samples come from.
#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub synth: SynthConfig,
    pub train_samples: usize,
    pub val_samples: usize,
    /// Seed of the first training sample; validation seeds follow the training range.
    pub data_seed: u64,
    /// Directories written by the synth command; override generation when set.
    pub train_dir: Option<PathBuf>,
    pub val_dir: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            synth: SynthConfig::default(),
            train_samples: 500,
            val_samples: 100,
            data_seed: 1_000_000,
            train_dir: None,
            val_dir: None,
        }
    }
}

impl DataConfig {
    /// Generated `(train, validation)` sets; validation seeds do not overlap training seeds.
    pub fn generate(&self) -> Result<(Vec<Sample>, Vec<Sample>)> {
        let train = generate_dataset(self.train_samples, self.data_seed, &self.synth)?;
        let val = generate_dataset(
            self.val_samples,
            self.data_seed.wrapping_add(self.train_samples as u64),
            &self.synth,
        )?;
        Ok((train, val))
    }

    /// `(train, validation)` sets, read from `train_dir` / `val_dir` where
    /// set and generated otherwise.
    pub fn load(&self) -> Result<(Vec<Sample>, Vec<Sample>)> {
        let read = |dir: &PathBuf| -> Result<Vec<Sample>> {
            Ok(dataset::read_sample_dir(dir)?
                .into_iter()
                .map(|(_, s)| s)
                .collect())
        };
        let (train, val) = match (&self.train_dir, &self.val_dir) {
            (Some(t), Some(v)) => (read(t)?, read(v)?),
            (None, None) => self.generate()?,
            (Some(t), None) => (read(t)?, self.generate()?.1),
            (None, Some(v)) => (self.generate()?.0, read(v)?),
        };
        Ok((train, val))
    }

    pub(crate) fn take_from(&mut self, e: &mut Entries) -> Result<()> {
        self.synth.take_from(e)?;
        take(e, "train_samples", &mut self.train_samples)?;
        take(e, "val_samples", &mut self.val_samples)?;
        take(e, "data_seed", &mut self.data_seed)?;
        if let Some(v) = e.remove("train_dir") {
            self.train_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = e.remove("val_dir") {
            self.val_dir = Some(PathBuf::from(v));
        }
        Ok(())
    }

    pub(crate) fn write_to(&self, out: &mut String) {
        self.synth.write_to(out);
        push(out, "train_samples", self.train_samples);
        push(out, "val_samples", self.val_samples);
        push(out, "data_seed", self.data_seed);
        if let Some(d) = &self.train_dir {
            push(out, "train_dir", d.display());
        }
        if let Some(d) = &self.val_dir {
            push(out, "val_dir", d.display());
        }
    }
}

/// Everything a training run needs, stored as one flat `key = value` file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl RunConfig {
    /// Keys absent from `text` keep their values from `base`; unknown keys are errors.
    pub fn parse_over(base: RunConfig, text: &str) -> Result<Self> {
        let mut e = parse_key_values(text)?;
        let mut cfg = base;
        cfg.model.take_from(&mut e)?;
        cfg.train.take_from(&mut e)?;
        cfg.data.take_from(&mut e)?;
        ensure_consumed(&e)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        RunConfig::parse_over(RunConfig::default(), text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.data.synth.validate()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.model.write_to(&mut out);
        self.train.write_to(&mut out);
        self.data.write_to(&mut out);
        out
    }
}
