use crate::error::{Error, Result};
use crate::metrics::FixationMap;
use crate::numerics::Tensor;

/// Axis-aligned Gaussian fitted to pooled fixation positions, in coordinates
/// relative to the image size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CenterGaussian {
    pub mean: (f64, f64),
    pub sigma: (f64, f64),
}

impl CenterGaussian {
    pub fn fit<'a>(fixations: impl IntoIterator<Item = &'a FixationMap>) -> Result<Self> {
        let mut pts = Vec::new();
        for f in fixations {
            let (h, w) = (f.height() as f64, f.width() as f64);
            pts.extend(
                f.points()
                    .iter()
                    .map(|&(r, c)| ((r as f64 + 0.5) / h, (c as f64 + 0.5) / w)),
            );
        }
        if pts.is_empty() {
            return Err(Error::Data("no fixations to fit a center prior".into()));
        }
        let n = pts.len() as f64;
        let my = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sy = (pts.iter().map(|p| (p.0 - my).powi(2)).sum::<f64>() / n)
            .sqrt()
            .max(1e-3);
        let sx = (pts.iter().map(|p| (p.1 - mx).powi(2)).sum::<f64>() / n)
            .sqrt()
            .max(1e-3);
        Ok(CenterGaussian {
            mean: (my, mx),
            sigma: (sy, sx),
        })
    }

    /// The prior rendered on an `h×w×1` grid.
    pub fn map(&self, h: usize, w: usize) -> Tensor {
        Tensor::from_fn(&[h, w, 1], |i| {
            let y = ((i / w) as f64 + 0.5) / h as f64;
            let x = ((i % w) as f64 + 0.5) / w as f64;
            let dy = (y - self.mean.0) / self.sigma.0;
            let dx = (x - self.mean.1) / self.sigma.1;
            (-(dy * dy + dx * dx) / 2.0).exp()
        })
    }
}
