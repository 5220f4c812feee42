//! Bidirectional LSTM sweeps along the rows or columns of a feature map.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lstm::{activate, cell_backward, cell_update, LstmParams, GATES};
use crate::numerics::ops::{gemm, matvec_acc, matvec_t_acc, MatRef};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanAxis {
    /// Each row is a sequence; `→` starts at column 0, `←` at the last column.
    Rows,
    /// Each column is a sequence; `↓` starts at row 0, `↑` at the last row.
    Columns,
}

/// Where the scene projection enters a contextual scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SceneInjection {
    #[default]
    FirstStep,
    EveryStep,
}

impl std::fmt::Display for SceneInjection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SceneInjection::FirstStep => "first",
            SceneInjection::EveryStep => "every",
        })
    }
}

impl std::str::FromStr for SceneInjection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "first" => Ok(SceneInjection::FirstStep),
            "every" => Ok(SceneInjection::EveryStep),
            _ => Err(format!("expected `first` or `every`, got {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    h: usize,
    w: usize,
    axis: ScanAxis,
}

impl Geometry {
    fn lines(&self) -> usize {
        match self.axis {
            ScanAxis::Rows => self.h,
            ScanAxis::Columns => self.w,
        }
    }

    fn length(&self) -> usize {
        match self.axis {
            ScanAxis::Rows => self.w,
            ScanAxis::Columns => self.h,
        }
    }

    /// Flat row-major position of step `t` on line `l`.
    #[inline]
    fn pos(&self, line: usize, t: usize) -> usize {
        match self.axis {
            ScanAxis::Rows => line * self.w + t,
            ScanAxis::Columns => t * self.w + line,
        }
    }
}

/// Cached activations of one direction, stored per position in row-major order.
#[derive(Clone, Debug)]
struct DirectionCache {
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    c_prev: Vec<f64>,
    h_prev: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ScanCache {
    geom: Geometry,
    input: Tensor,
    scene: Option<Vec<f64>>,
    injection: SceneInjection,
    forward: DirectionCache,
    backward: DirectionCache,
}

/// Gradients of a bidirectional scan.
#[derive(Clone, Debug)]
pub struct ScanGrads {
    pub input: Tensor,
    pub forward: LstmParams,
    pub backward: LstmParams,
    pub scene: Option<Vec<f64>>,
}

struct LineOutput {
    h: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    c_prev: Vec<f64>,
    h_prev: Vec<f64>,
}

fn check_params(params: &LstmParams, channels: usize, scene: Option<&[f64]>) -> Result<()> {
    params.validate()?;
    if params.input_dim() != channels {
        return Err(Error::dim(format!(
            "scan expects {} input channels, map has {channels}",
            params.input_dim()
        )));
    }
    if let Some(s) = scene {
        match params.scene_dim() {
            Some(d) if d == s.len() => {}
            Some(d) => {
                return Err(Error::dim(format!(
                    "scene vector has {} values, expected {d}",
                    s.len()
                )))
            }
            None => {
                return Err(Error::Config(
                    "scene given but LSTM has no scene projections".into(),
                ))
            }
        }
    }
    Ok(())
}

/// Run one direction over every line. Lines are independent and processed in parallel.
fn run_direction(
    geom: Geometry,
    zx: &[f64],
    params: &LstmParams,
    scene_proj: Option<&[f64]>,
    injection: SceneInjection,
    reverse: bool,
) -> (Vec<f64>, DirectionCache) {
    let n = params.hidden();
    let g4 = GATES * n;
    let len = geom.length();
    let lines: Vec<LineOutput> = (0..geom.lines())
        .into_par_iter()
        .map(|line| {
            let mut out = LineOutput {
                h: vec![0.0; len * n],
                gates: vec![0.0; len * g4],
                tanh_c: vec![0.0; len * n],
                c_prev: vec![0.0; len * n],
                h_prev: vec![0.0; len * n],
            };
            let mut h = vec![0.0; n];
            let mut c = vec![0.0; n];
            let mut c_next = vec![0.0; n];
            for step in 0..len {
                let t = if reverse { len - 1 - step } else { step };
                let pos = geom.pos(line, t);
                let pre = &mut out.gates[step * g4..(step + 1) * g4];
                pre.copy_from_slice(&zx[pos * g4..(pos + 1) * g4]);
                for (p, b) in pre.iter_mut().zip(params.bias.data()) {
                    *p += b;
                }
                matvec_acc(params.w_h.data(), g4, n, &h, pre);
                if let Some(sp) = scene_proj {
                    if step == 0 || injection == SceneInjection::EveryStep {
                        for (p, s) in pre.iter_mut().zip(sp) {
                            *p += s;
                        }
                    }
                }
                activate(pre, n);
                out.c_prev[step * n..(step + 1) * n].copy_from_slice(&c);
                out.h_prev[step * n..(step + 1) * n].copy_from_slice(&h);
                let gates = &out.gates[step * g4..(step + 1) * g4];
                cell_update(
                    gates,
                    &c,
                    &mut c_next,
                    &mut out.tanh_c[step * n..(step + 1) * n],
                    &mut h,
                );
                std::mem::swap(&mut c, &mut c_next);
                out.h[step * n..(step + 1) * n].copy_from_slice(&h);
            }
            out
        })
        .collect();

    let total = geom.h * geom.w;
    let mut hidden = vec![0.0; total * n];
    let mut cache = DirectionCache {
        gates: vec![0.0; total * g4],
        tanh_c: vec![0.0; total * n],
        c_prev: vec![0.0; total * n],
        h_prev: vec![0.0; total * n],
    };
    for (line, out) in lines.into_iter().enumerate() {
        for step in 0..len {
            let t = if reverse { len - 1 - step } else { step };
            let pos = geom.pos(line, t);
            let (src, dst) = (step * n..(step + 1) * n, pos * n..(pos + 1) * n);
            hidden[dst.clone()].copy_from_slice(&out.h[src.clone()]);
            cache.tanh_c[dst.clone()].copy_from_slice(&out.tanh_c[src.clone()]);
            cache.c_prev[dst.clone()].copy_from_slice(&out.c_prev[src.clone()]);
            cache.h_prev[dst].copy_from_slice(&out.h_prev[src]);
            cache.gates[pos * g4..(pos + 1) * g4]
                .copy_from_slice(&out.gates[step * g4..(step + 1) * g4]);
        }
    }
    (hidden, cache)
}

fn input_projection(map: &Tensor, params: &LstmParams) -> Vec<f64> {
    let (h, w, m) = (map.shape()[0], map.shape()[1], map.shape()[2]);
    let g4 = GATES * params.hidden();
    let mut zx = vec![0.0; h * w * g4];
    gemm(
        MatRef::new(map.data(), h * w, m),
        MatRef::new(params.w_x.data(), g4, m).t(),
        0.0,
        &mut zx,
    );
    zx
}

fn scene_projection(params: &LstmParams, scene: Option<&[f64]>) -> Option<Vec<f64>> {
    let s = scene?;
    let w_s = params.w_s.as_ref()?;
    let g4 = GATES * params.hidden();
    let mut proj = vec![0.0; g4];
    matvec_acc(w_s.data(), g4, s.len(), s, &mut proj);
    Some(proj)
}

/// Bidirectional scan with independent parameters per direction.
///
/// Output channels `[0, N)` hold the forward-direction hidden states
/// (`→` or `↓`) and `[N, 2N)` the reverse direction (`←` or `↑`).
pub fn bidirectional_scan(
    map: &Tensor,
    forward: &LstmParams,
    backward: &LstmParams,
    scene: Option<&[f64]>,
    axis: ScanAxis,
    injection: SceneInjection,
) -> Result<(Tensor, ScanCache)> {
    let (h, w, m) = map.dims3()?;
    check_params(forward, m, scene)?;
    check_params(backward, m, scene)?;
    let n = forward.hidden();
    if backward.hidden() != n {
        return Err(Error::dim("directional LSTMs differ in hidden size"));
    }
    let geom = Geometry { h, w, axis };

    let zx_f = input_projection(map, forward);
    let shared = std::ptr::eq(forward, backward);
    let zx_b = if shared {
        None
    } else {
        Some(input_projection(map, backward))
    };
    let sp_f = scene_projection(forward, scene);
    let sp_b = scene_projection(backward, scene);

    let (hf, cf) = run_direction(geom, &zx_f, forward, sp_f.as_deref(), injection, false);
    let (hb, cb) = run_direction(
        geom,
        zx_b.as_deref().unwrap_or(&zx_f),
        backward,
        sp_b.as_deref(),
        injection,
        true,
    );

    let mut out = Vec::with_capacity(h * w * 2 * n);
    for pos in 0..h * w {
        out.extend_from_slice(&hf[pos * n..(pos + 1) * n]);
        out.extend_from_slice(&hb[pos * n..(pos + 1) * n]);
    }
    let cache = ScanCache {
        geom,
        input: map.clone(),
        scene: scene.map(<[f64]>::to_vec),
        injection,
        forward: cf,
        backward: cb,
    };
    Ok((Tensor::new(&[h, w, 2 * n], out)?, cache))
}

/// Backward of one direction: returns the stacked preactivation gradients
/// `dZ` (positions × 4N) and the summed `dz` of scene-injected steps.
fn direction_backward(
    geom: Geometry,
    cache: &DirectionCache,
    params: &LstmParams,
    grad_out: &[f64],
    offset: usize,
    injection: SceneInjection,
    reverse: bool,
) -> (Vec<f64>, Vec<f64>) {
    let n = params.hidden();
    let g4 = GATES * n;
    let len = geom.length();
    let per_line: Vec<(Vec<f64>, Vec<f64>)> = (0..geom.lines())
        .into_par_iter()
        .map(|line| {
            let mut dz_line = vec![0.0; len * g4];
            let mut injected = vec![0.0; g4];
            let mut dh_next = vec![0.0; n];
            let mut dc_next = vec![0.0; n];
            let mut dh = vec![0.0; n];
            let mut dc_prev = vec![0.0; n];
            for step in (0..len).rev() {
                let t = if reverse { len - 1 - step } else { step };
                let pos = geom.pos(line, t);
                for k in 0..n {
                    dh[k] = grad_out[pos * 2 * n + offset + k] + dh_next[k];
                }
                let dz = &mut dz_line[step * g4..(step + 1) * g4];
                cell_backward(
                    &cache.gates[pos * g4..(pos + 1) * g4],
                    &cache.c_prev[pos * n..(pos + 1) * n],
                    &cache.tanh_c[pos * n..(pos + 1) * n],
                    &dh,
                    &dc_next,
                    dz,
                    &mut dc_prev,
                );
                std::mem::swap(&mut dc_next, &mut dc_prev);
                dh_next.iter_mut().for_each(|v| *v = 0.0);
                matvec_t_acc(params.w_h.data(), g4, n, dz, &mut dh_next);
                if step == 0 || injection == SceneInjection::EveryStep {
                    for (a, d) in injected.iter_mut().zip(dz.iter()) {
                        *a += d;
                    }
                }
            }
            (dz_line, injected)
        })
        .collect();

    let mut dz_all = vec![0.0; geom.h * geom.w * g4];
    let mut injected = vec![0.0; g4];
    for (line, (dz_line, inj)) in per_line.into_iter().enumerate() {
        for step in 0..len {
            let t = if reverse { len - 1 - step } else { step };
            let pos = geom.pos(line, t);
            dz_all[pos * g4..(pos + 1) * g4].copy_from_slice(&dz_line[step * g4..(step + 1) * g4]);
        }
        for (a, d) in injected.iter_mut().zip(&inj) {
            *a += d;
        }
    }
    (dz_all, injected)
}

/// Accumulate parameter gradients for one direction and add `dX` into `dx`.
fn direction_param_grads(
    geom: Geometry,
    cache: &DirectionCache,
    params: &LstmParams,
    input: &Tensor,
    scene: Option<&[f64]>,
    dz: &[f64],
    injected: &[f64],
    dx: &mut [f64],
    dscene: &mut Option<Vec<f64>>,
) -> LstmParams {
    let n = params.hidden();
    let g4 = GATES * n;
    let m = params.input_dim();
    let positions = geom.h * geom.w;
    let mut grads = params.zeros_like();
    gemm(
        MatRef::new(dz, positions, g4).t(),
        MatRef::new(input.data(), positions, m),
        0.0,
        grads.w_x.data_mut(),
    );
    gemm(
        MatRef::new(dz, positions, g4).t(),
        MatRef::new(&cache.h_prev, positions, n),
        0.0,
        grads.w_h.data_mut(),
    );
    for row in dz.chunks_exact(g4) {
        for (b, d) in grads.bias.data_mut().iter_mut().zip(row) {
            *b += d;
        }
    }
    gemm(
        MatRef::new(dz, positions, g4),
        MatRef::new(params.w_x.data(), g4, m),
        1.0,
        dx,
    );
    if let (Some(s), Some(w_s), Some(gw)) = (scene, &params.w_s, grads.w_s.as_mut()) {
        crate::numerics::ops::outer_acc(gw.data_mut(), injected, s);
        let ds = dscene.get_or_insert_with(|| vec![0.0; s.len()]);
        matvec_t_acc(w_s.data(), g4, s.len(), injected, ds);
    }
    grads
}

pub fn bidirectional_scan_backward(
    cache: &ScanCache,
    forward: &LstmParams,
    backward: &LstmParams,
    grad_out: &Tensor,
) -> Result<ScanGrads> {
    let geom = cache.geom;
    let n = forward.hidden();
    if grad_out.shape() != [geom.h, geom.w, 2 * n] {
        return Err(Error::dim(format!(
            "scan gradient shape {:?}, expected {:?}",
            grad_out.shape(),
            [geom.h, geom.w, 2 * n]
        )));
    }
    let scene = cache.scene.as_deref();
    let (dz_f, inj_f) = direction_backward(
        geom,
        &cache.forward,
        forward,
        grad_out.data(),
        0,
        cache.injection,
        false,
    );
    let (dz_b, inj_b) = direction_backward(
        geom,
        &cache.backward,
        backward,
        grad_out.data(),
        n,
        cache.injection,
        true,
    );
    let mut dx = vec![0.0; cache.input.len()];
    let mut dscene = None;
    let gf = direction_param_grads(
        geom,
        &cache.forward,
        forward,
        &cache.input,
        scene,
        &dz_f,
        &inj_f,
        &mut dx,
        &mut dscene,
    );
    let gb = direction_param_grads(
        geom,
        &cache.backward,
        backward,
        &cache.input,
        scene,
        &dz_b,
        &inj_b,
        &mut dx,
        &mut dscene,
    );
    Ok(ScanGrads {
        input: Tensor::new(cache.input.shape(), dx)?,
        forward: gf,
        backward: gb,
        scene: dscene,
    })
}

/// Left-to-right and right-to-left sweep of every row with one shared LSTM.
pub fn row_scan_bidirectional(
    map: &Tensor,
    params: &LstmParams,
    scene: Option<&[f64]>,
) -> Result<Tensor> {
    Ok(bidirectional_scan(
        map,
        params,
        params,
        scene,
        ScanAxis::Rows,
        SceneInjection::FirstStep,
    )?
    .0)
}

/// Top-to-bottom and bottom-to-top sweep of every column with one shared LSTM.
pub fn column_scan_bidirectional(
    map: &Tensor,
    params: &LstmParams,
    scene: Option<&[f64]>,
) -> Result<Tensor> {
    Ok(bidirectional_scan(
        map,
        params,
        params,
        scene,
        ScanAxis::Columns,
        SceneInjection::FirstStep,
    )?
    .0)
}
