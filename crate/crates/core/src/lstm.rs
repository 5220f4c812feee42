//! Single LSTM transition, its scene-conditioned first step, and backward.
//!
//! Gate preactivations are stacked in the order input, forget, output,
//! modulation (`i, f, o, g`), so every weight matrix has `4N` rows.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::ops::{matvec_acc, matvec_t_acc, outer_acc, sigmoid_scalar};
use crate::numerics::Tensor;
use crate::params::{join, Params};

pub const GATES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Modulation = 3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// `4N × M` input projections.
    pub w_x: Tensor,
    /// `4N × N` recurrent projections.
    pub w_h: Tensor,
    /// `4N × S` scene projections, present only for contextual cells.
    pub w_s: Option<Tensor>,
    /// `4N` biases.
    pub bias: Tensor,
}

impl LstmParams {
    /// Each weight matrix uniform in `[−r, r]` with `r = 1/√(its fan-in)`
    /// (`M`, `N`, `S`), forget bias 1, other biases 0.
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        scene: Option<usize>,
        rng: &mut R,
    ) -> Self {
        let r = |fan_in: usize| 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut p = LstmParams {
            w_x: Tensor::uniform(&[GATES * hidden, input], r(input), rng),
            w_h: Tensor::uniform(&[GATES * hidden, hidden], r(hidden), rng),
            w_s: scene.map(|s| Tensor::uniform(&[GATES * hidden, s], r(s), rng)),
            bias: Tensor::zeros(&[GATES * hidden]),
        };
        p.gate_mut(Gate::Forget).iter_mut().for_each(|b| *b = 1.0);
        p
    }

    pub fn zeros(input: usize, hidden: usize, scene: Option<usize>) -> Self {
        LstmParams {
            w_x: Tensor::zeros(&[GATES * hidden, input]),
            w_h: Tensor::zeros(&[GATES * hidden, hidden]),
            w_s: scene.map(|s| Tensor::zeros(&[GATES * hidden, s])),
            bias: Tensor::zeros(&[GATES * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.shape()[1]
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.shape()[1]
    }

    pub fn scene_dim(&self) -> Option<usize> {
        self.w_s.as_ref().map(|w| w.shape()[1])
    }

    /// Bias block of one gate.
    pub fn gate(&self, gate: Gate) -> &[f64] {
        let n = self.hidden();
        &self.bias.data()[gate as usize * n..(gate as usize + 1) * n]
    }

    pub fn gate_mut(&mut self, gate: Gate) -> &mut [f64] {
        let n = self.hidden();
        &mut self.bias.data_mut()[gate as usize * n..(gate as usize + 1) * n]
    }

    /// Zeroed tensors with the same layout, used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        LstmParams::zeros(self.input_dim(), self.hidden(), self.scene_dim())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.hidden();
        let rows = GATES * n;
        let ok = self.w_x.rank() == 2
            && self.w_x.shape()[0] == rows
            && self.w_h.shape() == [rows, n]
            && self.bias.shape() == [rows]
            && self
                .w_s
                .as_ref()
                .is_none_or(|w| w.rank() == 2 && w.shape()[0] == rows);
        if ok {
            Ok(())
        } else {
            Err(Error::dim("inconsistent LSTM parameter shapes"))
        }
    }

    fn check_input(&self, x: &[f64], prev: &LstmState) -> Result<()> {
        let n = self.hidden();
        if x.len() != self.input_dim() {
            return Err(Error::dim(format!(
                "LSTM input has {} values, expected {}",
                x.len(),
                self.input_dim()
            )));
        }
        if prev.h.len() != n || prev.c.len() != n {
            return Err(Error::dim(format!("LSTM state must have {n} units")));
        }
        Ok(())
    }
}

impl Params for LstmParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "w_x"), &self.w_x);
        f(&join(prefix, "w_h"), &self.w_h);
        if let Some(w) = &self.w_s {
            f(&join(prefix, "w_s"), w);
        }
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "w_x"), &mut self.w_x);
        f(&join(prefix, "w_h"), &mut self.w_h);
        if let Some(w) = &mut self.w_s {
            f(&join(prefix, "w_s"), w);
        }
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Squash stacked preactivations in place: σ for `i, f, o`, tanh for `g`.
#[inline]
pub(crate) fn activate(pre: &mut [f64], n: usize) {
    for v in &mut pre[..3 * n] {
        *v = sigmoid_scalar(*v);
    }
    for v in &mut pre[3 * n..] {
        *v = v.tanh();
    }
}

/// `c = f⊙c_prev + i⊙g`, `h = o⊙tanh(c)`; writes `c`, `tanh(c)` and `h`.
#[inline]
pub(crate) fn cell_update(
    gates: &[f64],
    c_prev: &[f64],
    c: &mut [f64],
    tanh_c: &mut [f64],
    h: &mut [f64],
) {
    let n = c_prev.len();
    for k in 0..n {
        let (i, f, o, g) = (gates[k], gates[n + k], gates[2 * n + k], gates[3 * n + k]);
        c[k] = f * c_prev[k] + i * g;
        tanh_c[k] = c[k].tanh();
        h[k] = o * tanh_c[k];
    }
}

/// Backpropagate through one cell update. `dh` and `dc` are the total
/// gradients arriving at `h_t` and `c_t`; writes the preactivation gradient
/// `dz` (`4N`) and `dc_prev`.
#[inline]
pub(crate) fn cell_backward(
    gates: &[f64],
    c_prev: &[f64],
    tanh_c: &[f64],
    dh: &[f64],
    dc: &[f64],
    dz: &mut [f64],
    dc_prev: &mut [f64],
) {
    let n = c_prev.len();
    for k in 0..n {
        let (i, f, o, g) = (gates[k], gates[n + k], gates[2 * n + k], gates[3 * n + k]);
        let tc = tanh_c[k];
        let d_o = dh[k] * tc;
        let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
        let di = dct * g;
        let dg = dct * i;
        let df = dct * c_prev[k];
        dc_prev[k] = dct * f;
        dz[k] = di * i * (1.0 - i);
        dz[n + k] = df * f * (1.0 - f);
        dz[2 * n + k] = d_o * o * (1.0 - o);
        dz[3 * n + k] = dg * (1.0 - g * g);
    }
}

/// Forward intermediates of one step.
#[derive(Clone, Debug)]
pub struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    scene: Option<Vec<f64>>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl StepCache {
    /// Activated gates `i, f, o, g`, stacked.
    pub fn gates(&self) -> &[f64] {
        &self.gates
    }
}

/// Gradients flowing out of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepGrads {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
    pub dscene: Option<Vec<f64>>,
}

/// Gate preactivations `W_x·x + W_h·h + b (+ W_s·s)`.
pub fn preactivations(
    x: &[f64],
    h_prev: &[f64],
    scene: Option<&[f64]>,
    params: &LstmParams,
) -> Result<Vec<f64>> {
    let n = params.hidden();
    let mut pre = params.bias.data().to_vec();
    matvec_acc(
        params.w_x.data(),
        GATES * n,
        params.input_dim(),
        x,
        &mut pre,
    );
    matvec_acc(params.w_h.data(), GATES * n, n, h_prev, &mut pre);
    if let Some(s) = scene {
        let w_s = params
            .w_s
            .as_ref()
            .ok_or_else(|| Error::Config("scene injection requires scene projections".into()))?;
        let sdim = w_s.shape()[1];
        if s.len() != sdim {
            return Err(Error::dim(format!(
                "scene vector has {} values, expected {sdim}",
                s.len()
            )));
        }
        matvec_acc(w_s.data(), GATES * n, sdim, s, &mut pre);
    }
    Ok(pre)
}

/// One transition, optionally with the scene projection added to every gate.
pub fn lstm_step_cached(
    x: &[f64],
    prev: &LstmState,
    scene: Option<&[f64]>,
    params: &LstmParams,
) -> Result<(LstmState, StepCache)> {
    params.check_input(x, prev)?;
    let n = params.hidden();
    let mut gates = preactivations(x, &prev.h, scene, params)?;
    activate(&mut gates, n);
    let mut next = LstmState::zeros(n);
    let mut tanh_c = vec![0.0; n];
    cell_update(&gates, &prev.c, &mut next.c, &mut tanh_c, &mut next.h);
    let cache = StepCache {
        x: x.to_vec(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        scene: scene.map(<[f64]>::to_vec),
        gates,
        tanh_c,
    };
    Ok((next, cache))
}

/// `(h_t, c_t) = LSTM(x_t, h_{t−1}, c_{t−1})`.
pub fn lstm_step(x: &[f64], prev: &LstmState, params: &LstmParams) -> Result<LstmState> {
    Ok(lstm_step_cached(x, prev, None, params)?.0)
}

/// First step of a contextual scan: zero initial state, scene projections
/// added to all four gate preactivations. The modulation gate keeps tanh.
pub fn clstm_first_step(x: &[f64], scene: &[f64], params: &LstmParams) -> Result<LstmState> {
    if params.w_s.is_none() {
        return Err(Error::Config(
            "contextual step without scene projections".into(),
        ));
    }
    let zero = LstmState::zeros(params.hidden());
    Ok(lstm_step_cached(x, &zero, Some(scene), params)?.0)
}

/// Reverse-mode step. Parameter gradients are added into `grads`.
pub fn lstm_step_backward(
    dh: &[f64],
    dc: &[f64],
    cache: &StepCache,
    params: &LstmParams,
    grads: &mut LstmParams,
) -> Result<StepGrads> {
    let n = params.hidden();
    if dh.len() != n || dc.len() != n {
        return Err(Error::dim("output gradient size differs from hidden size"));
    }
    let mut dz = vec![0.0; GATES * n];
    let mut dc_prev = vec![0.0; n];
    cell_backward(
        &cache.gates,
        &cache.c_prev,
        &cache.tanh_c,
        dh,
        dc,
        &mut dz,
        &mut dc_prev,
    );

    outer_acc(grads.w_x.data_mut(), &dz, &cache.x);
    outer_acc(grads.w_h.data_mut(), &dz, &cache.h_prev);
    for (b, d) in grads.bias.data_mut().iter_mut().zip(&dz) {
        *b += d;
    }
    let mut dx = vec![0.0; params.input_dim()];
    matvec_t_acc(
        params.w_x.data(),
        GATES * n,
        params.input_dim(),
        &dz,
        &mut dx,
    );
    let mut dh_prev = vec![0.0; n];
    matvec_t_acc(params.w_h.data(), GATES * n, n, &dz, &mut dh_prev);

    let dscene = match (&cache.scene, &params.w_s) {
        (Some(s), Some(w_s)) => {
            let gw = grads
                .w_s
                .as_mut()
                .ok_or_else(|| Error::Config("gradient buffer lacks scene projections".into()))?;
            outer_acc(gw.data_mut(), &dz, s);
            let mut ds = vec![0.0; s.len()];
            matvec_t_acc(w_s.data(), GATES * n, s.len(), &dz, &mut ds);
            Some(ds)
        }
        _ => None,
    };
    Ok(StepGrads {
        dx,
        dh_prev,
        dc_prev,
        dscene,
    })
}
