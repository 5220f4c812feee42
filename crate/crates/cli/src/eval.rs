//! `dscl eval`: per-image scores as JSON lines plus a mean row.

use std::fs;
use std::str::FromStr;

use rayon::prelude::*;
use saliency_core::encoders::image::read_pnm;
use saliency_core::metrics::{auc_judd, cc, fixation_density, nss, sauc, FixationMap};
use saliency_core::training::dataset::files_by_stem;
use saliency_core::{Error, Result, Tensor};
use serde::Serialize;

use crate::{CmdResult, EvalArgs, Failure};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Metric {
    Nss,
    Cc,
    Auc,
    Sauc,
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "nss" => Ok(Metric::Nss),
            "cc" => Ok(Metric::Cc),
            "auc" => Ok(Metric::Auc),
            "sauc" => Ok(Metric::Sauc),
            other => Err(format!("unknown metric {other:?} (nss, cc, auc, sauc)")),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct Scores {
    /// Image stem, or `"mean"` for the aggregate row.
    pub image: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sauc: Option<f64>,
}

fn parse_metrics(list: &str) -> std::result::Result<Vec<Metric>, String> {
    let mut out: Vec<Metric> = Vec::new();
    for m in list.split(',').filter(|s| !s.trim().is_empty()) {
        let m: Metric = m.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err("--metrics names no metric".into());
    }
    Ok(out)
}

/// Predictions paired with fixations by stem, in stem order.
fn load_pairs(args: &EvalArgs) -> Result<Vec<(String, Tensor, FixationMap)>> {
    let preds = files_by_stem(&args.pred, "pgm")?;
    let fixes = files_by_stem(&args.fix, "csv")?;
    if preds.is_empty() {
        return Err(Error::Data(format!(
            "no .pgm predictions in {}",
            args.pred.display()
        )));
    }
    let mut out = Vec::with_capacity(preds.len());
    for (stem, path) in preds {
        let fix_path = fixes.get(&stem).ok_or_else(|| {
            Error::Data(format!(
                "prediction {stem} has no fixation file in {}",
                args.fix.display()
            ))
        })?;
        let map = read_pnm(&path)?;
        let (h, w) = map.dims2()?;
        let map = map.reshape(&[h, w])?;
        let text = fs::read_to_string(fix_path)?;
        let fixations = FixationMap::parse_csv(&text, h, w)?;
        out.push((stem, map, fixations));
    }
    Ok(out)
}

/// Scores of every pair; sAUC negatives come from the other images.
fn score(
    pairs: &[(String, Tensor, FixationMap)],
    metrics: &[Metric],
    splits: usize,
    seed: u64,
) -> Result<Vec<Scores>> {
    let all: Vec<FixationMap> = pairs.iter().map(|(_, _, f)| f.clone()).collect();
    pairs
        .par_iter()
        .enumerate()
        .map(|(i, (stem, map, fix))| {
            let mut row = Scores {
                image: stem.clone(),
                ..Scores::default()
            };
            for m in metrics {
                match m {
                    Metric::Nss => row.nss = Some(nss(map, fix)?),
                    Metric::Cc => row.cc = Some(cc(map, &fixation_density(fix, None)?)?),
                    Metric::Auc => row.auc = Some(auc_judd(map, fix)?),
                    Metric::Sauc => {
                        let others: Vec<FixationMap> = all
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != i)
                            .map(|(_, f)| f.clone())
                            .collect();
                        row.sauc = Some(sauc(
                            map,
                            fix,
                            &others,
                            splits,
                            seed.wrapping_add(i as u64),
                        )?);
                    }
                }
            }
            Ok(row)
        })
        .collect()
}

/// Mean of each reported metric over `rows`.
pub fn aggregate(rows: &[Scores]) -> Scores {
    let n = rows.len();
    let mean = |f: fn(&Scores) -> Option<f64>| -> Option<f64> {
        let values: Option<Vec<f64>> = rows.iter().map(f).collect();
        values.map(|v| v.iter().sum::<f64>() / n as f64)
    };
    Scores {
        image: "mean".into(),
        count: Some(n),
        nss: mean(|r| r.nss),
        cc: mean(|r| r.cc),
        auc: mean(|r| r.auc),
        sauc: mean(|r| r.sauc),
    }
}

pub fn run(args: EvalArgs) -> CmdResult {
    let metrics = parse_metrics(&args.metrics).map_err(Failure::usage)?;
    if metrics.contains(&Metric::Sauc) && args.sauc_splits == 0 {
        return Err(Failure::usage("--sauc-splits must be positive"));
    }
    let names: Vec<&str> = args.metrics.split(',').map(str::trim).collect();
    println!("# resolved configuration");
    println!("pred = {}", args.pred.display());
    println!("fix = {}", args.fix.display());
    println!("metrics = {}", names.join(","));
    println!("sauc_splits = {}", args.sauc_splits);
    println!("out = {}", args.out.display());
    println!("seed = {}", args.seed);

    let pairs = load_pairs(&args)?;
    let rows = score(&pairs, &metrics, args.sauc_splits, args.seed)?;
    let mean = aggregate(&rows);
    let mut text = String::new();
    for row in rows.iter().chain(std::iter::once(&mean)) {
        text.push_str(&serde_json::to_string(row).expect("scores serialize"));
        text.push('\n');
    }
    fs::write(&args.out, text).map_err(Error::from)?;
    println!(
        "scored {} images; mean {}",
        rows.len(),
        serde_json::to_string(&mean).expect("scores serialize")
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_list_parsing() {
        assert_eq!(
            parse_metrics("nss, cc,nss").unwrap(),
            vec![Metric::Nss, Metric::Cc]
        );
        assert!(parse_metrics("nss,kl").is_err());
        assert!(parse_metrics("").is_err());
    }

    #[test]
    fn aggregate_is_the_row_mean() {
        let rows = vec![
            Scores {
                image: "a".into(),
                nss: Some(1.0),
                cc: Some(0.25),
                ..Scores::default()
            },
            Scores {
                image: "b".into(),
                nss: Some(2.0),
                cc: Some(0.75),
                ..Scores::default()
            },
        ];
        let m = aggregate(&rows);
        assert_eq!(m.count, Some(2));
        assert_eq!(m.nss, Some(1.5));
        assert_eq!(m.cc, Some(0.5));
        assert_eq!(m.auc, None);
    }
}
