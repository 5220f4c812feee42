//! Toy ablations along the receptive-field, depth and scene axes.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use super::{
    evaluate, generate_dataset, train, DataConfig, EvalSummary, Model, ModelConfig, TrainConfig,
};
use crate::error::Result;
use crate::metrics::DEFAULT_SAUC_SPLITS;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationAxis {
    /// Small versus large encoder receptive field.
    Rf,
    /// One versus two stacked SLSTM layers.
    Depth,
    /// Without versus with the scene vector.
    Scene,
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationAxis::Rf => "rf",
            AblationAxis::Depth => "depth",
            AblationAxis::Scene => "scene",
        })
    }
}

impl FromStr for AblationAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rf" => Ok(AblationAxis::Rf),
            "depth" => Ok(AblationAxis::Depth),
            "scene" => Ok(AblationAxis::Scene),
            _ => Err(format!("unknown ablation axis {s:?} (rf, depth, scene)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationConfig {
    /// Settings not varied by the axis.
    pub base: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    /// Samples after the validation range, used only for the reported scores.
    pub test_samples: usize,
    /// Each seed sets model initialization and batch order.
    pub seeds: Vec<u64>,
    pub sauc_splits: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            base: ModelConfig::default(),
            train: TrainConfig::salicon().scaled_to(1000),
            data: DataConfig {
                val_samples: 50,
                ..DataConfig::default()
            },
            test_samples: 100,
            seeds: vec![1, 2, 3],
            sauc_splits: DEFAULT_SAUC_SPLITS,
        }
    }
}

/// Model variants compared along `axis`, weaker setting first.
pub fn ablation_settings(axis: AblationAxis, base: &ModelConfig) -> Vec<(String, ModelConfig)> {
    let with = |f: &dyn Fn(&mut ModelConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    let variants = match axis {
        AblationAxis::Rf => vec![
            with(&|c| c.dilations = vec![1, 1, 1]),
            with(&|c| c.dilations = vec![2, 4, 4]),
        ],
        AblationAxis::Depth => vec![with(&|c| c.depth = 1), with(&|c| c.depth = 2)],
        AblationAxis::Scene => vec![with(&|c| c.scene = false), with(&|c| c.scene = true)],
    };
    variants
        .into_iter()
        .map(|c| {
            let name = match axis {
                AblationAxis::Rf => format!("rf{}", c.encoder_config().receptive_field()),
                AblationAxis::Depth => format!("depth{}", c.depth),
                AblationAxis::Scene => format!("scene-{}", if c.scene { "on" } else { "off" }),
            };
            (name, c)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub setting: String,
    pub per_seed: Vec<EvalSummary>,
    /// Seed mean.
    pub mean: EvalSummary,
}

/// Train every setting of `axis` once per seed and score the best
/// checkpoints on a held-out set.
pub fn run_ablation(axis: AblationAxis, config: &AblationConfig) -> Result<Vec<AblationRow>> {
    run_ablation_with(axis, config, |_, _, _| {})
}

/// As [`run_ablation`], reporting `(setting, seed, scores)` after each run.
pub fn run_ablation_with(
    axis: AblationAxis,
    config: &AblationConfig,
    progress: impl FnMut(&str, u64, &EvalSummary),
) -> Result<Vec<AblationRow>> {
    Ok(run_ablations_with(&[axis], config, progress)?
        .pop()
        .map(|(_, rows)| rows)
        .unwrap_or_default())
}

/// Several axes over one data set. A model configuration shared by two
/// axes is trained once per seed.
pub fn run_ablations_with(
    axes: &[AblationAxis],
    config: &AblationConfig,
    mut progress: impl FnMut(&str, u64, &EvalSummary),
) -> Result<Vec<(AblationAxis, Vec<AblationRow>)>> {
    let (train_set, val_set) = config.data.generate()?;
    let test_seed = config
        .data
        .data_seed
        .wrapping_add((config.data.train_samples + config.data.val_samples) as u64);
    let test_set = generate_dataset(config.test_samples, test_seed, &config.data.synth)?;
    let mut done: HashMap<String, Vec<EvalSummary>> = HashMap::new();
    let mut out = Vec::with_capacity(axes.len());
    for &axis in axes {
        let mut rows = Vec::new();
        for (setting, model_config) in ablation_settings(axis, &config.base) {
            let mut key = String::new();
            model_config.write_to(&mut key);
            if !done.contains_key(&key) {
                let mut per_seed = Vec::with_capacity(config.seeds.len());
                for &seed in &config.seeds {
                    let model = Model::seeded(&model_config, seed)?;
                    let tc = TrainConfig {
                        seed,
                        ..config.train.clone()
                    };
                    let outcome = train(model, &train_set, &val_set, &tc)?;
                    let scores =
                        evaluate(&outcome.best, &test_set, Some(config.sauc_splits), seed)?;
                    progress(&setting, seed, &scores);
                    per_seed.push(scores);
                }
                done.insert(key.clone(), per_seed);
            }
            let per_seed = done[&key].clone();
            let n = per_seed.len() as f64;
            let mean = |f: &dyn Fn(&EvalSummary) -> f64| per_seed.iter().map(f).sum::<f64>() / n;
            let summary = EvalSummary {
                nss: mean(&|s| s.nss),
                cc: mean(&|s| s.cc),
                auc: mean(&|s| s.auc),
                sauc: Some(mean(&|s| s.sauc.unwrap_or(f64::NAN))),
            };
            rows.push(AblationRow {
                setting,
                per_seed,
                mean: summary,
            });
        }
        out.push((axis, rows));
    }
    Ok(out)
}

/// Settings × {sauc, auc, nss, cc} on seed means.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("setting,sauc,auc,nss,cc\n");
    for r in rows {
        let m = &r.mean;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.setting,
            m.sauc.unwrap_or(f64::NAN),
            m.auc,
            m.nss,
            m.cc
        ));
    }
    out
}
