use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    lr_schedule, nss_loss, sgd_momentum_step, Model, OptimizerState, ParamGroup, Sample,
    TrainConfig,
};
use crate::error::{Error, Result};
use crate::metrics::{auc_judd, cc, fixation_density, nss, sauc, FixationMap};
use crate::numerics::Tensor;
use crate::params::Params;

/// One validation record.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    /// Optimizer steps completed.
    pub step: usize,
    /// New-layer learning rate of the last step.
    pub lr: f64,
    /// Mean training loss since the previous record.
    pub train_loss: f64,
    pub val_nss: f64,
    pub val_cc: f64,
    pub val_auc: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the validation with the highest NSS (initial ones if none ran).
    pub best: Model,
    pub best_step: usize,
    pub last: Model,
    pub history: Vec<HistoryRow>,
}

/// Mean metrics over a set of samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSummary {
    pub nss: f64,
    pub cc: f64,
    pub auc: f64,
    pub sauc: Option<f64>,
}

/// Negative NSS of one sample and the parameter gradients.
pub fn sample_gradient(model: &Model, sample: &Sample) -> Result<(f64, Model)> {
    let (map, cache) = model.forward(&sample.image)?;
    let (h, w) = map.dims2()?;
    let fixations = if (h, w) == (sample.fixations.height(), sample.fixations.width()) {
        sample.fixations.clone()
    } else {
        sample.fixations.rescaled(h, w)?
    };
    let (loss, grad) = nss_loss(&map, &fixations)?;
    Ok((loss, model.backward(&cache, &grad)?))
}

/// Score prediction `maps[i]` against `samples[i]`. sAUC draws its negatives
/// from the fixations of the other samples.
pub fn evaluate_maps(
    maps: &[Tensor],
    samples: &[Sample],
    sauc_splits: Option<usize>,
    seed: u64,
) -> Result<EvalSummary> {
    if maps.len() != samples.len() || samples.is_empty() {
        return Err(Error::Data(
            "need one prediction per sample and at least one sample".into(),
        ));
    }
    let all: Vec<&FixationMap> = samples.iter().map(|s| &s.fixations).collect();
    let rows: Vec<[f64; 4]> = maps
        .par_iter()
        .zip(samples)
        .enumerate()
        .map(|(i, (map, s))| {
            let density = fixation_density(&s.fixations, None)?;
            let shuffled = match sauc_splits {
                Some(splits) => {
                    let others: Vec<FixationMap> = all
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, f)| (*f).clone())
                        .collect();
                    sauc(
                        map,
                        &s.fixations,
                        &others,
                        splits,
                        seed.wrapping_add(i as u64),
                    )?
                }
                None => f64::NAN,
            };
            Ok([
                nss(map, &s.fixations)?,
                cc(map, &density)?,
                auc_judd(map, &s.fixations)?,
                shuffled,
            ])
        })
        .collect::<Result<_>>()?;
    let mean = |k: usize| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64;
    Ok(EvalSummary {
        nss: mean(0),
        cc: mean(1),
        auc: mean(2),
        sauc: sauc_splits.map(|_| mean(3)),
    })
}

/// Evaluate `model` through [`Model::predict`] on every sample.
pub fn evaluate(
    model: &Model,
    samples: &[Sample],
    sauc_splits: Option<usize>,
    seed: u64,
) -> Result<EvalSummary> {
    let maps: Vec<Tensor> = samples
        .par_iter()
        .map(|s| model.predict(&s.image))
        .collect::<Result<_>>()?;
    evaluate_maps(&maps, samples, sauc_splits, seed)
}

pub fn train(
    model: Model,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(model, train_set, val_set, config, |_| {})
}

/// Mini-batch SGD on negative NSS; `on_validate` sees each history row as it is produced.
pub fn train_with(
    mut model: Model,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &TrainConfig,
    mut on_validate: impl FnMut(&HistoryRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut outcome = TrainOutcome {
        best: model.clone(),
        best_step: 0,
        last: model.clone(),
        history: Vec::new(),
    };
    if config.total_steps == 0 {
        return Ok(outcome);
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Data(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let mut data = train_set.to_vec();
    if config.flip_augment {
        for s in train_set {
            data.push(s.mirrored()?);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut state = OptimizerState::new(&model);
    let mut best_nss = f64::NEG_INFINITY;
    let (mut loss_sum, mut loss_count) = (0.0, 0usize);

    for step in 0..config.total_steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size {
            if order.is_empty() {
                order = (0..data.len()).collect();
                order.shuffle(&mut rng);
            }
            batch.push(order.pop().expect("refilled above"));
        }
        let results: Vec<(f64, Model)> = batch
            .par_iter()
            .map(|&i| sample_gradient(&model, &data[i]))
            .collect::<Result<_>>()
            .map_err(|e| match e {
                Error::NonFinite(m) => Error::Diverged(format!("step {}: {m}", step + 1)),
                e => e,
            })?;
        let mut iter = results.into_iter();
        let (mut loss, mut grads) = iter.next().expect("batch is non-empty");
        for (l, g) in iter {
            loss += l;
            grads.accumulate(&g);
        }
        let inv = 1.0 / config.batch_size as f64;
        loss *= inv;
        grads.visit_mut("", &mut |_, t| {
            t.data_mut().iter_mut().for_each(|v| *v *= inv)
        });
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::Diverged(format!(
                "step {}: loss {loss}, non-finite gradients",
                step + 1
            )));
        }
        sgd_momentum_step(
            &mut model,
            &grads,
            &mut state,
            |name| Some(lr_schedule(step, Model::group(name), config)),
            config.momentum,
            config.weight_decay,
        )?;
        if !model.is_finite() {
            return Err(Error::Diverged(format!(
                "step {}: parameters became non-finite",
                step + 1
            )));
        }
        loss_sum += loss;
        loss_count += 1;

        let done = step + 1;
        if done % config.validate_every == 0 || done == config.total_steps {
            let eval = evaluate(&model, val_set, None, 0)?;
            let row = HistoryRow {
                step: done,
                lr: lr_schedule(step, ParamGroup::New, config),
                train_loss: loss_sum / loss_count as f64,
                val_nss: eval.nss,
                val_cc: eval.cc,
                val_auc: eval.auc,
            };
            (loss_sum, loss_count) = (0.0, 0);
            if row.val_nss > best_nss {
                best_nss = row.val_nss;
                outcome.best = model.clone();
                outcome.best_step = done;
            }
            on_validate(&row);
            outcome.history.push(row);
        }
    }
    outcome.last = model;
    Ok(outcome)
}

/// History as CSV with a header row.
pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from("step,lr,train_loss,val_nss,val_cc,val_auc\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step, r.lr, r.train_loss, r.val_nss, r.val_cc, r.val_auc
        ));
    }
    out
}
