//! Named flat views over parameter and gradient sets, shared by the
//! optimizers, the gradient checker and checkpoints.

/// A named, shaped, read-only tensor.
#[derive(Clone, Copy, Debug)]
pub struct TensorRef<'a> {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

/// A collection of named tensors with a fixed order.
pub trait TensorSet {
    fn tensors(&self) -> Vec<TensorRef<'_>>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}
