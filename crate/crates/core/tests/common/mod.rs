//! Brute-force metric oracles shared by the integration tests. They work on
//! raw slices with single-pass moments and pairwise counting, so they share
//! no code path with the library implementations.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saliency_core::metrics::FixationMap;
use saliency_core::Tensor;

/// Welford mean and population standard deviation.
pub fn welford(values: &[f64]) -> (f64, f64) {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for &v in values {
        n += 1.0;
        let delta = v - mean;
        mean += delta / n;
        m2 += delta * (v - mean);
    }
    (mean, (m2 / n).sqrt())
}

pub fn is_fixated(f: &FixationMap, r: usize, c: usize) -> bool {
    f.points().iter().any(|&p| p == (r, c))
}

pub fn nss_oracle(map: &[f64], w: usize, f: &FixationMap) -> f64 {
    let (mean, std) = welford(map);
    let mut total = 0.0;
    let mut count = 0.0;
    for (i, v) in map.iter().enumerate() {
        if is_fixated(f, i / w, i % w) {
            total += (v - mean) / std;
            count += 1.0;
        }
    }
    total / count
}

pub fn cc_oracle(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = welford(a);
    let (mb, sb) = welford(b);
    let products: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma) / sa * ((y - mb) / sb))
        .collect();
    welford(&products).0
}

/// Judd AUC: one ROC point per distinct fixated value, swept from the top,
/// with every non-fixated pixel as a negative.
pub fn auc_judd_oracle(map: &[f64], w: usize, f: &FixationMap) -> f64 {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, &v) in map.iter().enumerate() {
        if is_fixated(f, i / w, i % w) {
            pos.push(v);
        } else {
            neg.push(v);
        }
    }
    let mut thresholds: Vec<f64> = Vec::new();
    for &v in &pos {
        if !thresholds.contains(&v) {
            thresholds.push(v);
        }
    }
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let rate = |set: &[f64], t: f64| set.iter().filter(|&&v| v >= t).count() as f64 / set.len() as f64;
    let mut curve = vec![(0.0, 0.0)];
    curve.extend(thresholds.iter().map(|&t| (rate(&neg, t), rate(&pos, t))));
    curve.push((1.0, 1.0));
    curve
        .windows(2)
        .map(|p| (p[1].0 - p[0].0) * (p[1].1 + p[0].1) / 2.0)
        .sum()
}

/// Probability that a positive outscores a negative, ties counting one half.
pub fn mann_whitney(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &p in pos {
        for &n in neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// A random metric instance: an `h×w` map (quantized to tenths when
/// `ties`), its fixations, and fixations of `others` further images with
/// at most `max_other` points each.
pub struct Instance {
    pub map: Tensor,
    pub fixations: FixationMap,
    pub others: Vec<FixationMap>,
}

pub fn random_fixations(h: usize, w: usize, k: usize, rng: &mut ChaCha8Rng) -> FixationMap {
    let points = (0..k)
        .map(|_| (rng.gen_range(0..h), rng.gen_range(0..w)))
        .collect();
    FixationMap::new(h, w, points).unwrap()
}

pub fn random_instance(seed: u64, h: usize, w: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ties = seed % 2 == 1;
    let map = Tensor::from_fn(&[h, w], |_| {
        let v: f64 = rng.gen();
        if ties {
            (v * 10.0).floor() / 10.0
        } else {
            v
        }
    });
    let k = rng.gen_range(12..40);
    let fixations = random_fixations(h, w, k, &mut rng);
    let others = (0..3)
        .map(|_| {
            let k = rng.gen_range(1..4);
            random_fixations(h, w, k, &mut rng)
        })
        .collect();
    Instance {
        map,
        fixations,
        others,
    }
}

/// Saliency values at the other images' fixations, positives excluded,
/// duplicates across images kept.
pub fn shuffled_negatives(inst: &Instance) -> Vec<f64> {
    let w = inst.map.shape()[1];
    let mut out = Vec::new();
    for o in &inst.others {
        for &(r, c) in o.points() {
            if !is_fixated(&inst.fixations, r, c) {
                out.push(inst.map.data()[r * w + c]);
            }
        }
    }
    out
}
