//! Checkpoint directories: `config.txt` (model architecture as `key = value`),
//! `manifest.txt` (one `name<TAB>shape` line per tensor) and one tensor
//! file per parameter under `tensors/`.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ensure_consumed, parse_key_values};
use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::serialize;
use crate::params::Params;

fn shape_string(shape: &[usize]) -> String {
    shape
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

pub fn save_checkpoint(model: &Model, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("tensors"))?;
    let mut config = String::new();
    model.config.write_to(&mut config);
    fs::write(dir.join("config.txt"), config)?;
    let mut manifest = String::new();
    for (name, t) in model.named_tensors() {
        serialize::save(&t, dir.join("tensors").join(format!("{name}.dsct")))?;
        manifest.push_str(&format!("{name}\t{}\n", shape_string(t.shape())));
    }
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Model> {
    let mut entries = parse_key_values(&fs::read_to_string(dir.join("config.txt"))?)?;
    let mut config = ModelConfig::default();
    config.take_from(&mut entries)?;
    ensure_consumed(&entries)?;
    let mut model = Model::init(&config, &mut ChaCha8Rng::seed_from_u64(0))?;

    let manifest = fs::read_to_string(dir.join("manifest.txt"))?;
    let listed: Vec<(&str, &str)> = manifest
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('\t')
                .ok_or_else(|| Error::Format(format!("bad manifest line {l:?}")))
        })
        .collect::<Result<_>>()?;
    let expected = model.named_tensors();
    if listed.len() != expected.len() {
        return Err(Error::Format(format!(
            "checkpoint lists {} tensors, model has {}",
            listed.len(),
            expected.len()
        )));
    }
    let mut loaded = Vec::with_capacity(listed.len());
    for ((name, shape), (want, t)) in listed.iter().zip(&expected) {
        if name != want || *shape != shape_string(t.shape()) {
            return Err(Error::Format(format!(
                "checkpoint tensor {name} ({shape}) does not match model tensor {want} ({})",
                shape_string(t.shape())
            )));
        }
        let v = serialize::load(dir.join("tensors").join(format!("{name}.dsct")))?;
        if v.shape() != t.shape() {
            return Err(Error::Format(format!(
                "{name}: file shape {:?} differs from manifest",
                v.shape()
            )));
        }
        loaded.push(v);
    }
    let mut it = loaded.into_iter();
    model.visit_mut("", &mut |_, t| *t = it.next().expect("counts checked"));
    Ok(model)
}
