//! Fixation-based evaluation: NSS, CC, AUC-Judd and shuffled AUC.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{GaussianBlur, BLUR_SIGMA_FRACTION};
use crate::numerics::Tensor;

pub const DEFAULT_SAUC_SPLITS: usize = 100;

/// Standard deviations below this mark a map as constant.
pub const MIN_STD: f64 = 1e-12;

/// Fixated pixels of one image, 0-based `(row, col)`, sorted and unique.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixationMap {
    height: usize,
    width: usize,
    points: Vec<(usize, usize)>,
}

impl FixationMap {
    pub fn new(height: usize, width: usize, mut points: Vec<(usize, usize)>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dim("fixation map needs positive dimensions"));
        }
        if let Some(&(r, c)) = points.iter().find(|&&(r, c)| r >= height || c >= width) {
            return Err(Error::Data(format!(
                "fixation ({r},{c}) outside {height}×{width}"
            )));
        }
        points.sort_unstable();
        points.dedup();
        Ok(FixationMap {
            height,
            width,
            points,
        })
    }

    /// Nonzero cells of an H×W map are fixations.
    pub fn from_grid(grid: &Tensor) -> Result<Self> {
        let (h, w) = grid.dims2()?;
        let points = grid
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| (i / w, i % w))
            .collect();
        FixationMap::new(h, w, points)
    }

    /// Lines of `row,col`; blank lines, `#` comments and a non-numeric
    /// header line are skipped.
    pub fn parse_csv(text: &str, height: usize, width: usize) -> Result<Self> {
        let mut points = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed = line.split_once(',').and_then(|(r, c)| {
                Some((
                    r.trim().parse::<usize>().ok()?,
                    c.trim().parse::<usize>().ok()?,
                ))
            });
            match parsed {
                Some(p) => points.push(p),
                None if points.is_empty() && n == 0 => continue,
                None => {
                    return Err(Error::Data(format!(
                        "line {}: expected `row,col`, got {line:?}",
                        n + 1
                    )))
                }
            }
        }
        FixationMap::new(height, width, points)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,col\n");
        for (r, c) in &self.points {
            s.push_str(&format!("{r},{c}\n"));
        }
        s
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, point: (usize, usize)) -> bool {
        self.points.binary_search(&point).is_ok()
    }

    /// Binary H×W×1 grid.
    pub fn to_grid(&self) -> Tensor {
        let mut g = Tensor::zeros(&[self.height, self.width, 1]);
        for &(r, c) in &self.points {
            g.data_mut()[r * self.width + c] = 1.0;
        }
        g
    }

    /// Left-right mirror image.
    pub fn mirrored(&self) -> Self {
        let points = self
            .points
            .iter()
            .map(|&(r, c)| (r, self.width - 1 - c))
            .collect();
        FixationMap::new(self.height, self.width, points).expect("mirror stays in bounds")
    }

    /// Map points onto an `height × width` grid by proportional scaling.
    pub fn rescaled(&self, height: usize, width: usize) -> Result<Self> {
        let points = self
            .points
            .iter()
            .map(|&(r, c)| (r * height / self.height, c * width / self.width))
            .collect();
        FixationMap::new(height, width, points)
    }

    fn check_against(&self, map: &Tensor) -> Result<(usize, usize)> {
        let (h, w) = map.dims2()?;
        if (h, w) != (self.height, self.width) {
            return Err(Error::dim(format!(
                "saliency map is {h}×{w} but fixations are {}×{}",
                self.height, self.width
            )));
        }
        if self.points.is_empty() {
            return Err(Error::Data("empty fixation set".into()));
        }
        Ok((h, w))
    }
}

/// Population mean and standard deviation.
fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn non_constant(map: &Tensor, what: &str) -> Result<(f64, f64)> {
    map.ensure_finite(what)?;
    let (mean, std) = moments(map.data());
    if std < MIN_STD {
        return Err(Error::Degenerate(format!(
            "{what} is constant (σ = {std:e})"
        )));
    }
    Ok((mean, std))
}

/// Mean standardized saliency at fixated pixels.
pub fn nss(saliency: &Tensor, fixations: &FixationMap) -> Result<f64> {
    let (_, w) = fixations.check_against(saliency)?;
    let (mean, std) = non_constant(saliency, "saliency map")?;
    let s = saliency.data();
    let total: f64 = fixations
        .points
        .iter()
        .map(|&(r, c)| (s[r * w + c] - mean) / std)
        .sum();
    Ok(total / fixations.len() as f64)
}

/// Pearson correlation of two maps over all pixels.
pub fn cc(saliency: &Tensor, density: &Tensor) -> Result<f64> {
    let (h, w) = saliency.dims2()?;
    if density.dims2()? != (h, w) {
        return Err(Error::dim("saliency and density maps differ in size"));
    }
    let (ms, ss) = non_constant(saliency, "saliency map")?;
    let (md, sd) = non_constant(density, "density map")?;
    let cov = saliency
        .data()
        .iter()
        .zip(density.data())
        .map(|(a, b)| (a - ms) * (b - md))
        .sum::<f64>()
        / (h * w) as f64;
    Ok((cov / (ss * sd)).clamp(-1.0, 1.0))
}

/// Gaussian-blurred fixation grid, max-normalized to 1. `sigma = None`
/// uses `0.035·min(H, W)`.
pub fn fixation_density(fixations: &FixationMap, sigma: Option<f64>) -> Result<Tensor> {
    if fixations.is_empty() {
        return Err(Error::Data("empty fixation set".into()));
    }
    let sigma = sigma.unwrap_or(BLUR_SIGMA_FRACTION * fixations.height.min(fixations.width) as f64);
    let blurred = GaussianBlur::new(sigma)?.apply(&fixations.to_grid())?;
    let peak = blurred.max();
    Ok(blurred.scale(1.0 / peak))
}

/// Which scores serve as ROC thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Thresholds {
    /// Distinct positive scores only (the Judd convention).
    Positives,
    /// Every distinct score of either class; the area then equals the
    /// Mann-Whitney statistic with ties counted as one half.
    All,
}

/// Trapezoidal ROC area between the `(0,0)` and `(1,1)` endpoints; a
/// sample counts as detected when its score is `≥` the threshold.
pub fn roc_auc(positives: &[f64], negatives: &[f64], thresholds: Thresholds) -> f64 {
    let mut pos = positives.to_vec();
    pos.sort_unstable_by(f64::total_cmp);
    let mut neg = negatives.to_vec();
    neg.sort_unstable_by(f64::total_cmp);
    let mut ts = match thresholds {
        Thresholds::Positives => pos.clone(),
        Thresholds::All => pos.iter().chain(&neg).copied().collect(),
    };
    ts.sort_unstable_by(|a, b| b.total_cmp(a));
    ts.dedup();
    let at_least = |sorted: &[f64], t: f64| sorted.len() - sorted.partition_point(|&v| v < t);

    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut area = 0.0;
    let (mut tpr0, mut fpr0) = (0.0, 0.0);
    for t in ts {
        let tpr = at_least(&pos, t) as f64 / np;
        let fpr = at_least(&neg, t) as f64 / nn;
        area += (fpr - fpr0) * (tpr + tpr0) / 2.0;
        (tpr0, fpr0) = (tpr, fpr);
    }
    area + (1.0 - fpr0) * (1.0 + tpr0) / 2.0
}

/// Min-max normalize; a constant map becomes all zeros.
fn min_max(map: &Tensor) -> Vec<f64> {
    let (lo, hi) = (map.min(), map.max());
    let range = hi - lo;
    map.data()
        .iter()
        .map(|v| if range > 0.0 { (v - lo) / range } else { 0.0 })
        .collect()
}

/// AUC with fixated pixels as positives and all other pixels as negatives.
pub fn auc_judd(saliency: &Tensor, fixations: &FixationMap) -> Result<f64> {
    let (h, w) = fixations.check_against(saliency)?;
    saliency.ensure_finite("saliency map")?;
    if fixations.len() == h * w {
        return Err(Error::Data("every pixel is fixated; no negatives".into()));
    }
    let s = min_max(saliency);
    let mut pos = Vec::with_capacity(fixations.len());
    let mut neg = Vec::with_capacity(h * w - fixations.len());
    let mut fix = fixations.points.iter().peekable();
    for (i, &v) in s.iter().enumerate() {
        if fix.peek().is_some_and(|&&(r, c)| r * w + c == i) {
            fix.next();
            pos.push(v);
        } else {
            neg.push(v);
        }
    }
    Ok(roc_auc(&pos, &neg, Thresholds::Positives))
}

/// Fixations of other images, rescaled to `height × width`, excluding the
/// positive locations. Duplicates across images are kept.
pub fn negative_pool(
    fixations: &FixationMap,
    others: &[FixationMap],
) -> Result<Vec<(usize, usize)>> {
    let mut pool = Vec::new();
    for other in others {
        let other = if (other.height, other.width) == (fixations.height, fixations.width) {
            other.clone()
        } else {
            other.rescaled(fixations.height, fixations.width)?
        };
        pool.extend(
            other
                .points
                .iter()
                .copied()
                .filter(|&p| !fixations.contains(p)),
        );
    }
    Ok(pool)
}

/// Shuffled AUC: negatives are drawn from other images' fixations. Each of
/// `splits` rounds samples `min(#positives, pool size)` negatives without
/// replacement and sweeps every distinct score; the AUCs are averaged.
pub fn sauc(
    saliency: &Tensor,
    fixations: &FixationMap,
    others: &[FixationMap],
    splits: usize,
    seed: u64,
) -> Result<f64> {
    let (_, w) = fixations.check_against(saliency)?;
    saliency.ensure_finite("saliency map")?;
    if splits == 0 {
        return Err(Error::Config("sAUC needs at least one split".into()));
    }
    let pool = negative_pool(fixations, others)?;
    if pool.is_empty() {
        return Err(Error::Data(
            "no negative fixations left after excluding positives".into(),
        ));
    }
    let s = saliency.data();
    let pos: Vec<f64> = fixations
        .points
        .iter()
        .map(|&(r, c)| s[r * w + c])
        .collect();
    let k = pos.len().min(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..splits {
        let neg: Vec<f64> = sample(&mut rng, pool.len(), k)
            .into_iter()
            .map(|i| {
                let (r, c) = pool[i];
                s[r * w + c]
            })
            .collect();
        total += roc_auc(&pos, &neg, Thresholds::All);
    }
    Ok(total / splits as f64)
}

#[cfg(test)]
mod tests;
