//! Named traversal over the learnable tensors of a model component.

use crate::numerics::Tensor;

pub trait Params {
    /// Visit every learnable tensor with a dotted name rooted at `prefix`.
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor));

    /// Same traversal order as [`visit`](Params::visit).
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));

    fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t| out.push((name.to_string(), t.clone())));
        out
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }

    fn zero_all(&mut self) {
        self.visit_mut("", &mut |_, t| t.fill(0.0));
    }

    /// `self += other` tensor by tensor; both must share a layout.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let mut theirs = Vec::new();
        other.visit("", &mut |_, t| theirs.push(t.clone()));
        let mut it = theirs.into_iter();
        self.visit_mut("", &mut |name, t| {
            let o = it
                .next()
                .unwrap_or_else(|| panic!("layout mismatch at {name}"));
            t.add_assign(&o);
        });
    }

    fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit("", &mut |_, t| ok &= t.is_finite());
        ok
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

use crate::layers::{Conv2dParams, L2NormScaleParams, LinearParams};

impl Params for Conv2dParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "kernels"), &self.kernels);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "kernels"), &mut self.kernels);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

impl Params for LinearParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

impl Params for L2NormScaleParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "scale"), &self.scale);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "scale"), &mut self.scale);
    }
}
