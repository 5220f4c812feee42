//! Four-direction spatial LSTM scans, their stacking, and scene conditioning.

mod scan;

use rand::Rng;

use crate::error::{Error, Result};
use crate::lstm::LstmParams;
use crate::numerics::Tensor;
use crate::params::{join, Params};

pub use scan::{
    bidirectional_scan, bidirectional_scan_backward, column_scan_bidirectional,
    row_scan_bidirectional, ScanAxis, ScanCache, ScanGrads, SceneInjection,
};

pub const DEFAULT_DEPTH: usize = 2;
pub const MAX_DEPTH: usize = 4;

/// One spatial LSTM: a horizontal pair (`→`, `←`) followed by a vertical
/// pair (`↓`, `↑`); each pair shares a single parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct SlstmParams {
    pub horizontal: LstmParams,
    pub vertical: LstmParams,
}

impl SlstmParams {
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        scene: Option<usize>,
        rng: &mut R,
    ) -> Self {
        SlstmParams {
            horizontal: LstmParams::init(input, hidden, scene, rng),
            vertical: LstmParams::init(2 * hidden, hidden, scene, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.horizontal.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.horizontal.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.horizontal.validate()?;
        self.vertical.validate()?;
        let n = self.hidden();
        if self.vertical.hidden() != n || self.vertical.input_dim() != 2 * n {
            return Err(Error::dim(format!(
                "vertical LSTM must read {} channels with {n} units",
                2 * n
            )));
        }
        Ok(())
    }

    pub fn forward(
        &self,
        map: &Tensor,
        scene: Option<&[f64]>,
        injection: SceneInjection,
    ) -> Result<(Tensor, SlstmCache)> {
        self.validate()?;
        let p = &self.horizontal;
        let (rows, row_cache) = bidirectional_scan(map, p, p, scene, ScanAxis::Rows, injection)?;
        let v = &self.vertical;
        let (out, col_cache) =
            bidirectional_scan(&rows, v, v, scene, ScanAxis::Columns, injection)?;
        Ok((
            out,
            SlstmCache {
                row_cache,
                col_cache,
            },
        ))
    }

    /// Gradients of both shared parameter sets; each accumulates the
    /// contributions of its two directions.
    pub fn backward(
        &self,
        cache: &SlstmCache,
        grad_out: &Tensor,
    ) -> Result<(Tensor, SlstmParams, Option<Vec<f64>>)> {
        let v = &self.vertical;
        let col = bidirectional_scan_backward(&cache.col_cache, v, v, grad_out)?;
        let p = &self.horizontal;
        let row = bidirectional_scan_backward(&cache.row_cache, p, p, &col.input)?;
        let mut horizontal = row.forward;
        horizontal.accumulate(&row.backward);
        let mut vertical = col.forward;
        vertical.accumulate(&col.backward);
        let dscene = match (row.scene, col.scene) {
            (Some(mut a), Some(b)) => {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                Some(a)
            }
            (a, b) => a.or(b),
        };
        Ok((
            row.input,
            SlstmParams {
                horizontal,
                vertical,
            },
            dscene,
        ))
    }
}

impl Params for SlstmParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.horizontal.visit(&join(prefix, "horizontal"), f);
        self.vertical.visit(&join(prefix, "vertical"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.horizontal.visit_mut(&join(prefix, "horizontal"), f);
        self.vertical.visit_mut(&join(prefix, "vertical"), f);
    }
}

#[derive(Clone, Debug)]
pub struct SlstmCache {
    row_cache: ScanCache,
    col_cache: ScanCache,
}

/// Row scan followed by column scan.
pub fn slstm_forward(map: &Tensor, params: &SlstmParams, scene: Option<&[f64]>) -> Result<Tensor> {
    Ok(params.forward(map, scene, SceneInjection::FirstStep)?.0)
}

/// Stacked spatial LSTMs with optional scene conditioning.
#[derive(Clone, Debug, PartialEq)]
pub struct DsclstmParams {
    pub layers: Vec<SlstmParams>,
    /// Whether each layer receives the scene vector.
    pub inject_scene: Vec<bool>,
    pub injection: SceneInjection,
}

#[derive(Clone, Debug)]
pub struct DsclstmCache {
    layers: Vec<SlstmCache>,
}

#[derive(Clone, Debug)]
pub struct DsclstmGrads {
    pub input: Tensor,
    pub params: DsclstmParams,
    pub scene: Option<Vec<f64>>,
}

impl DsclstmParams {
    /// `scene = None` builds the unconditioned stack.
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        depth: usize,
        scene: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        if !(1..=MAX_DEPTH).contains(&depth) {
            return Err(Error::Config(format!(
                "stack depth must be 1..={MAX_DEPTH}, got {depth}"
            )));
        }
        let layers = (0..depth)
            .map(|l| SlstmParams::init(if l == 0 { input } else { 2 * hidden }, hidden, scene, rng))
            .collect();
        Ok(DsclstmParams {
            layers,
            inject_scene: vec![scene.is_some(); depth],
            injection: SceneInjection::FirstStep,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn scene_dim(&self) -> Option<usize> {
        self.layers
            .iter()
            .zip(&self.inject_scene)
            .find(|(_, &on)| on)
            .and_then(|(l, _)| l.horizontal.scene_dim())
    }

    pub fn output_channels(&self) -> usize {
        2 * self.hidden()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_DEPTH).contains(&self.depth()) {
            return Err(Error::Config(format!(
                "stack depth must be 1..={MAX_DEPTH}"
            )));
        }
        if self.inject_scene.len() != self.depth() {
            return Err(Error::Config("one scene switch per layer required".into()));
        }
        let n = self.hidden();
        for (l, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            if layer.hidden() != n || (l > 0 && layer.input_dim() != 2 * n) {
                return Err(Error::dim(format!(
                    "layer {l} does not chain to the previous layer"
                )));
            }
            if self.inject_scene[l]
                && (layer.horizontal.w_s.is_none() || layer.vertical.w_s.is_none())
            {
                return Err(Error::Config(format!(
                    "layer {l} injects the scene but has no scene weights"
                )));
            }
        }
        Ok(())
    }

    pub fn forward(&self, map: &Tensor, scene: Option<&[f64]>) -> Result<(Tensor, DsclstmCache)> {
        self.validate()?;
        let mut x = map.clone();
        let mut caches = Vec::with_capacity(self.depth());
        for (layer, &on) in self.layers.iter().zip(&self.inject_scene) {
            let s = if on { scene } else { None };
            let (y, cache) = layer.forward(&x, s, self.injection)?;
            caches.push(cache);
            x = y;
        }
        Ok((x, DsclstmCache { layers: caches }))
    }

    pub fn backward(&self, cache: &DsclstmCache, grad_out: &Tensor) -> Result<DsclstmGrads> {
        let mut grad = grad_out.clone();
        let mut layers = Vec::with_capacity(self.depth());
        let mut dscene: Option<Vec<f64>> = None;
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            let (dx, grads, ds) = layer.backward(lc, &grad)?;
            if let Some(ds) = ds {
                match &mut dscene {
                    Some(acc) => acc.iter_mut().zip(&ds).for_each(|(a, b)| *a += b),
                    None => dscene = Some(ds),
                }
            }
            layers.push(grads);
            grad = dx;
        }
        layers.reverse();
        Ok(DsclstmGrads {
            input: grad,
            params: DsclstmParams {
                layers,
                inject_scene: self.inject_scene.clone(),
                injection: self.injection,
            },
            scene: dscene,
        })
    }
}

impl Params for DsclstmParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (l, layer) in self.layers.iter().enumerate() {
            layer.visit(&join(prefix, &format!("layer{l}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&join(prefix, &format!("layer{l}")), f);
        }
    }
}

/// Stacked spatial LSTMs over a local feature map. Pass `None` (or a
/// parameter set without scene weights) for the unconditioned variant.
pub fn dsclstm_forward(
    map: &Tensor,
    scene: Option<&[f64]>,
    params: &DsclstmParams,
) -> Result<Tensor> {
    Ok(params.forward(map, scene)?.0)
}
