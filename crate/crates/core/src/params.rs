//! Named parameter tensors and gradient buffers of the same shape.

use ndarray::{ArrayViewD, ArrayViewMutD};

/// A collection of named `f64` tensors visited in a fixed order.
///
/// Gradient buffers use the implementing type itself (see
/// [`ParamSet::zeros_like`]), so parameters and gradients always line up
/// tensor by tensor.
pub trait ParamSet {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, ArrayViewD<'a, f64>));

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>));

    fn zeros_like(&self) -> Self
    where
        Self: Sized;

    fn fill_zero(&mut self) {
        self.visit_mut(&mut |_, mut t| t.fill(0.0));
    }

    /// `(name, shape)` of every tensor.
    fn census(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit(&mut |name, t| out.push((name.to_string(), t.shape().to_vec())));
        out
    }

    fn num_scalars(&self) -> usize {
        let mut total = 0;
        self.visit(&mut |_, t| total += t.len());
        total
    }

    /// `self += scale * other`, tensor by tensor.
    fn add_scaled(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        let mut views = Vec::new();
        other.visit(&mut |_, t| views.push(t));
        let mut i = 0;
        self.visit_mut(&mut |_, mut t| {
            t.scaled_add(scale, &views[i]);
            i += 1;
        });
    }

    fn scale(&mut self, factor: f64) {
        self.visit_mut(&mut |_, mut t| t.mapv_inplace(|v| v * factor));
    }

    /// Flat copy of every scalar, in visiting order.
    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        self.visit(&mut |_, t| out.extend(t.iter().copied()));
        out
    }
}
