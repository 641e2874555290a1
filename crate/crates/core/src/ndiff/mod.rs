//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! A [`Tape`] records every primitive applied during a forward pass. Calling
//! [`Tape::backward`] on a scalar walks the tape in reverse and yields exact
//! gradients for every recorded variable; [`Gradients::accumulate_into`]
//! collects the ones that belong to registered parameters into a [`GradMap`].
//!
//! [`finite_diff`] provides the central-difference estimate used to check the
//! analytic gradients.

mod tape;
mod tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tape::{log_sum_exp, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NdError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op} expects a rank-2 tensor, got shape {shape:?}")]
    NotMatrix { op: &'static str, shape: Vec<usize> },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { len: usize, shape: Vec<usize> },
    #[error("{op} called with no input")]
    Empty { op: &'static str },
    #[error("cosine similarity is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("variable #{0} is not recorded on this tape")]
    NotOnTape(usize),
    #[error("unknown parameter #{0}")]
    UnknownParam(usize),
}

/// Index of a trainable tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub value: Tensor,
}

/// Registry of trainable tensors in registration order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    entries: Vec<NamedTensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.entries.push(NamedTensor {
            name: name.into(),
            value,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &NamedTensor)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    /// Flattened copy of every parameter, in registration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|e| e.value.data().iter().copied())
            .collect()
    }
}

/// Gradient per parameter, shaped like the parameter it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct GradMap {
    grads: Vec<Tensor>,
}

impl GradMap {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Self {
            grads: params
                .entries
                .iter()
                .map(|e| Tensor::zeros(e.value.shape()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }

    pub fn add(&mut self, id: ParamId, g: &Tensor) -> Result<(), NdError> {
        let slot = self.grads.get_mut(id.0).ok_or(NdError::UnknownParam(id.0))?;
        if slot.shape() != g.shape() {
            return Err(NdError::ShapeMismatch {
                op: "grad_accumulate",
                left: slot.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
        slot.add_assign(g);
        Ok(())
    }

    /// Merges another map of the same layout into this one.
    pub fn merge(&mut self, other: &GradMap) -> Result<(), NdError> {
        for (id, g) in other.iter() {
            self.add(id, g)?;
        }
        Ok(())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.grads.iter().flat_map(|g| g.data().iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Tensor::is_finite)
    }
}

/// Central-difference estimate `(f(θ+εe) − f(θ−εe)) / 2ε` for every
/// coordinate of every parameter.
pub fn finite_diff<F>(mut f: F, params: &ParamSet, eps: f64) -> GradMap
where
    F: FnMut(&ParamSet) -> f64,
{
    let mut probe = params.clone();
    let mut out = GradMap::zeros_like(params);
    for id in params.ids() {
        for i in 0..params.get(id).numel() {
            let orig = params.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + eps;
            let plus = f(&probe);
            probe.get_mut(id).data_mut()[i] = orig - eps;
            let minus = f(&probe);
            probe.get_mut(id).data_mut()[i] = orig;
            out.grads[id.0].data_mut()[i] = (plus - minus) / (2.0 * eps);
        }
    }
    out
}

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖)` between two gradient
/// vectors; zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient length mismatch");
    let diff = tape::norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>());
    let scale = tape::norm(a).max(tape::norm(b));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests;
