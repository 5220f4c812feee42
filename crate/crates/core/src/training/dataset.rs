//! Sample directories on disk: `images/<stem>.ppm`, `fixations/<stem>.csv`
//! and an optional `targets.csv` with `stem,row,col` rows.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::Sample;
use crate::encoders::image::{read_pnm, write_pnm};
use crate::error::{Error, Result};
use crate::metrics::FixationMap;

pub const IMAGE_DIR: &str = "images";
pub const FIXATION_DIR: &str = "fixations";
pub const TARGET_FILE: &str = "targets.csv";

/// Files in `dir` with extension `ext`, keyed and sorted by stem.
pub fn files_by_stem(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::Data(format!("{}: {e}", dir.display())))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_string(), path.clone());
        }
    }
    Ok(out)
}

/// Write `samples` under `dir` with stems `sample_00000`, `sample_00001`, ...
pub fn write_sample_dir(dir: &Path, samples: &[Sample]) -> Result<Vec<String>> {
    let images = dir.join(IMAGE_DIR);
    let fixations = dir.join(FIXATION_DIR);
    fs::create_dir_all(&images)?;
    fs::create_dir_all(&fixations)?;
    let mut stems = Vec::with_capacity(samples.len());
    let mut targets = String::from("stem,row,col\n");
    for (i, s) in samples.iter().enumerate() {
        let stem = format!("sample_{i:05}");
        write_pnm(&images.join(format!("{stem}.ppm")), &s.image, 8)?;
        fs::write(fixations.join(format!("{stem}.csv")), s.fixations.to_csv())?;
        if let Some((r, c)) = s.target {
            targets.push_str(&format!("{stem},{r},{c}\n"));
        }
        stems.push(stem);
    }
    fs::write(dir.join(TARGET_FILE), targets)?;
    Ok(stems)
}

fn parse_targets(text: &str) -> Result<BTreeMap<String, (f64, f64)>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Data(format!("{TARGET_FILE} line {}: {line:?}", n + 1));
        let mut parts = line.split(',');
        let (Some(stem), Some(r), Some(c), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        let r: f64 = r.trim().parse().map_err(|_| bad())?;
        let c: f64 = c.trim().parse().map_err(|_| bad())?;
        out.insert(stem.trim().to_string(), (r, c));
    }
    Ok(out)
}

/// Read a directory written by [`write_sample_dir`], sorted by stem. Every
/// image needs a fixation file with the same stem.
pub fn read_sample_dir(dir: &Path) -> Result<Vec<(String, Sample)>> {
    let images = files_by_stem(&dir.join(IMAGE_DIR), "ppm")?;
    if images.is_empty() {
        return Err(Error::Data(format!(
            "no .ppm images in {}",
            dir.join(IMAGE_DIR).display()
        )));
    }
    let targets = match fs::read_to_string(dir.join(TARGET_FILE)) {
        Ok(text) => parse_targets(&text)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::with_capacity(images.len());
    for (stem, path) in images {
        let image = read_pnm(&path)?;
        let (h, w) = (image.shape()[0], image.shape()[1]);
        if image.shape()[2] != 3 {
            return Err(Error::Data(format!(
                "{}: expected an RGB image",
                path.display()
            )));
        }
        let fix_path = dir.join(FIXATION_DIR).join(format!("{stem}.csv"));
        let text = fs::read_to_string(&fix_path)
            .map_err(|e| Error::Data(format!("{}: {e}", fix_path.display())))?;
        let fixations = FixationMap::parse_csv(&text, h, w)?;
        let target = targets.get(&stem).copied();
        out.push((
            stem,
            Sample {
                image,
                fixations,
                target,
            },
        ));
    }
    Ok(out)
}
