use std::fs;
use std::path::Path;
use std::time::Instant;

use saliency_core::encoders::image::{read_pnm, write_pnm};
use saliency_core::gradsuite::{gradient_suite_for, MODULES};
use saliency_core::numerics::GRADIENT_TOLERANCE;
use saliency_core::training::ablation::{ablation_csv, run_ablation_with, AblationAxis, AblationConfig};
use saliency_core::training::dataset::write_sample_dir;
use saliency_core::training::{
    generate_dataset, history_csv, load_checkpoint, save_checkpoint, train_with, Model,
    PopoutMode, RunConfig, SynthConfig, TrainConfig,
};
use saliency_core::{Error, Tensor};

use crate::{AblateArgs, CmdResult, Failure, GradcheckArgs, PredictArgs, SynthArgs, TrainArgs};

/// Checkpoint subdirectory and history file written by `train`.
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const HISTORY_FILE: &str = "history.csv";
pub const CONFIG_FILE: &str = "config.txt";

fn print_resolved(lines: &str) {
    println!("# resolved configuration");
    print!("{lines}");
}

pub fn train(a: TrainArgs) -> CmdResult {
    if a.config.is_none() && a.preset.is_none() {
        return Err(Failure::usage("train needs --config PATH or --preset NAME"));
    }
    let mut base = RunConfig::default();
    if let Some(name) = &a.preset {
        base.train = TrainConfig::preset(name)?;
    }
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
            RunConfig::parse_over(base, &text)?
        }
        None => base,
    };
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    print_resolved(&cfg.to_text());
    println!("seed = {}", cfg.train.seed);

    let (train_set, val_set) = cfg.data.load()?;
    let model = Model::seeded(&cfg.model, cfg.train.seed)?;
    let start = Instant::now();
    let outcome = train_with(model, &train_set, &val_set, &cfg.train, |r| {
        println!(
            "step {} lr {:.3e} train_loss {:.4} val_nss {:.4} val_cc {:.4} val_auc {:.4}",
            r.step, r.lr, r.train_loss, r.val_nss, r.val_cc, r.val_auc
        );
    })?;
    fs::create_dir_all(&a.out).map_err(Error::from)?;
    save_checkpoint(&outcome.best, &a.out.join(CHECKPOINT_DIR))?;
    fs::write(a.out.join(HISTORY_FILE), history_csv(&outcome.history)).map_err(Error::from)?;
    fs::write(a.out.join(CONFIG_FILE), cfg.to_text()).map_err(Error::from)?;
    println!(
        "best step {} after {:.1}s; wrote {}",
        outcome.best_step,
        start.elapsed().as_secs_f64(),
        a.out.display()
    );
    Ok(())
}

/// Accept the checkpoint directory itself or a `train` output directory.
fn checkpoint_dir(path: &Path) -> std::path::PathBuf {
    let nested = path.join(CHECKPOINT_DIR);
    if nested.is_dir() {
        nested
    } else {
        path.to_path_buf()
    }
}

fn as_rgb(image: Tensor) -> saliency_core::Result<Tensor> {
    let (h, w, c) = image.dims3()?;
    match c {
        3 => Ok(image),
        1 => Ok(Tensor::from_fn(&[h, w, 3], |i| image.data()[i / 3])),
        _ => Err(Error::Data(format!("cannot use a {c}-channel image"))),
    }
}

pub fn predict(a: PredictArgs) -> CmdResult {
    print_resolved(&format!(
        "ckpt = {}\nimage = {}\nout = {}\n",
        a.ckpt.display(),
        a.image.display(),
        a.out.display()
    ));
    let model = load_checkpoint(&checkpoint_dir(&a.ckpt))?;
    let image = as_rgb(read_pnm(&a.image)?)?;
    let map = model.predict(&image)?;
    let peak = map.max();
    if !(peak > 0.0) {
        return Err(Error::Degenerate("prediction has no positive value".into()).into());
    }
    write_pnm(&a.out, &map.scale(1.0 / peak), 16)?;
    let (h, w) = map.dims2()?;
    println!("wrote {h}×{w} map to {}", a.out.display());
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs) -> CmdResult {
    let modules: Vec<&str> = match &a.module {
        Some(m) => vec![m.as_str()],
        None => MODULES.to_vec(),
    };
    print_resolved(&format!(
        "modules = {}\nseed = {}\ntolerance = {GRADIENT_TOLERANCE:e}\n",
        modules.join(","),
        a.seed
    ));
    let start = Instant::now();
    let checks = gradient_suite_for(a.seed, &modules)?;
    let mut failed = 0;
    for c in &checks {
        let verdict = if c.passed() { "pass" } else { "FAIL" };
        println!(
            "{verdict} {:<9} {:<24} rel_err {:.3e} ({:.2}s)",
            c.module, c.name, c.error, c.seconds
        );
        failed += usize::from(!c.passed());
    }
    println!(
        "{} of {} checks passed in {:.1}s",
        checks.len() - failed,
        checks.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        return Err(Failure::numerical(format!(
            "{failed} gradient checks exceeded {GRADIENT_TOLERANCE:e}"
        )));
    }
    Ok(())
}

pub fn synth(a: SynthArgs) -> CmdResult {
    let mode: PopoutMode = a.mode.parse().map_err(Failure::usage)?;
    let mut cfg = SynthConfig {
        height: a.size,
        width: a.size,
        mode,
        ..SynthConfig::default()
    };
    if let Some(d) = a.distractors {
        cfg.distractors = d;
    }
    cfg.validate()?;
    print_resolved(&format!(
        "n = {}\nout = {}\nmode = {mode}\nsize = {}\ndistractors = {}\n",
        a.n,
        a.out.display(),
        a.size,
        cfg.distractors
    ));
    println!("seed = {}", a.seed);
    let samples = generate_dataset(a.n, a.seed, &cfg)?;
    let stems = write_sample_dir(&a.out, &samples)?;
    println!("wrote {} samples to {}", stems.len(), a.out.display());
    Ok(())
}

pub fn ablate(a: AblateArgs) -> CmdResult {
    let axis: AblationAxis = a.axis.parse().map_err(Failure::usage)?;
    let mut cfg = AblationConfig::default();
    if let Some(steps) = a.steps {
        cfg.train = TrainConfig::salicon().scaled_to(steps);
    }
    if let Some(seeds) = &a.seeds {
        cfg.seeds = seeds
            .split(',')
            .map(|s| s.trim().parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Failure::usage(format!("--seeds {seeds:?}: {e}")))?;
        if cfg.seeds.is_empty() {
            return Err(Failure::usage("--seeds needs at least one seed"));
        }
    }
    let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
    let run = RunConfig {
        model: cfg.base.clone(),
        train: cfg.train.clone(),
        data: cfg.data.clone(),
    };
    print_resolved(&format!(
        "axis = {axis}\n{}test_samples = {}\n",
        run.to_text(),
        cfg.test_samples
    ));
    println!("seeds = {}", seeds.join(","));

    let rows = run_ablation_with(axis, &cfg, |setting, seed, s| {
        eprintln!(
            "{setting} seed {seed}: nss {:.4} cc {:.4} auc {:.4} sauc {:.4}",
            s.nss,
            s.cc,
            s.auc,
            s.sauc.unwrap_or(f64::NAN)
        );
    })?;
    let csv = ablation_csv(&rows);
    match &a.out {
        Some(path) => {
            fs::write(path, &csv).map_err(Error::from)?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}
