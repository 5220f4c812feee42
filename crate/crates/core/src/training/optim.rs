use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::params::Params;

/// Momentum buffers, one per parameter tensor in traversal order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    velocity: Vec<Tensor>,
    step: usize,
}

impl OptimizerState {
    pub fn new<P: Params>(params: &P) -> Self {
        let mut velocity = Vec::new();
        params.visit("", &mut |_, t| velocity.push(t.zeros_like()));
        OptimizerState { velocity, step: 0 }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }
}

/// `v ← momentum·v + (g + weight_decay·p)`, `p ← p − lr·v`.
///
/// `lr` maps a tensor name to its learning rate; `None` freezes the tensor
/// (neither it nor its velocity changes).
pub fn sgd_momentum_step<P, L>(
    params: &mut P,
    grads: &P,
    state: &mut OptimizerState,
    lr: L,
    momentum: f64,
    weight_decay: f64,
) -> Result<()>
where
    P: Params,
    L: Fn(&str) -> Option<f64>,
{
    let grads = grads.named_tensors();
    if grads.len() != state.velocity.len() {
        return Err(Error::dim(format!(
            "{} gradient tensors for {} optimizer buffers",
            grads.len(),
            state.velocity.len()
        )));
    }
    let mut shapes = Vec::new();
    params.visit("", &mut |name, p| {
        shapes.push((name.to_string(), p.shape().to_vec()))
    });
    if shapes.len() != grads.len() {
        return Err(Error::dim(
            "parameter layout changed since the optimizer was created",
        ));
    }
    for ((name, shape), ((_, g), v)) in shapes.iter().zip(grads.iter().zip(&state.velocity)) {
        if g.shape() != shape.as_slice() || v.shape() != shape.as_slice() {
            return Err(Error::dim(format!(
                "gradient or velocity shape differs for {name}"
            )));
        }
    }
    let mut i = 0;
    params.visit_mut("", &mut |name, p| {
        let (g, v) = (&grads[i].1, &mut state.velocity[i]);
        i += 1;
        let Some(rate) = lr(name) else { return };
        for ((p, g), v) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *v = momentum * *v + (g + weight_decay * *p);
            *p -= rate * *v;
        }
    });
    state.step += 1;
    Ok(())
}
