//! Small dense-network toolkit with hand-written backward passes.
//!
//! Everything runs in `f64` on the CPU. Layers keep what their backward pass
//! needs in explicit cache values returned from `forward`, so one layer
//! instance can process several batches before the optimizer step.

mod adam;
mod batchnorm;
mod linear;
mod loss;
mod lstm;

use std::collections::BTreeMap;

use ndarray::{Array, Dimension, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{Adam, AdamConfig};
pub use batchnorm::{BatchNorm1d, BatchNormCache};
pub use linear::Linear;
pub use loss::{softmax_rows, weighted_cross_entropy};
pub use lstm::{BiLstmLayer, Lstm, LstmCache, SeqBatch, StackedBiLstm, StackedCache};

/// A trainable tensor and its accumulated gradient. Equality ignores the
/// gradient.
#[derive(Debug, Clone)]
pub struct Param<D: Dimension> {
    pub value: Array<f64, D>,
    pub grad: Array<f64, D>,
}

impl<D: Dimension> PartialEq for Param<D> {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl<D: Dimension> Param<D> {
    pub fn new(value: Array<f64, D>) -> Self {
        let grad = Array::zeros(value.raw_dim());
        Self { value, grad }
    }

    pub fn view_mut(&mut self) -> ParamMut<'_> {
        ParamMut {
            value: self.value.as_slice_mut().expect("parameters are contiguous"),
            grad: self.grad.as_slice_mut().expect("gradients are contiguous"),
        }
    }

    fn save(&self, name: String, dict: &mut StateDict) {
        dict.insert(name, Tensor::from_array(&self.value));
    }

    fn load(&mut self, name: &str, dict: &StateDict) -> Result<()> {
        load_array(&mut self.value, name, dict)
    }
}

/// Mutable access to one parameter's values and gradient.
pub struct ParamMut<'a> {
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
}

/// Flat tensor with its shape, as stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn from_array<D: Dimension>(a: &Array<f64, D>) -> Self {
        Self {
            shape: a.shape().to_vec(),
            data: a.iter().copied().collect(),
        }
    }
}

pub type StateDict = BTreeMap<String, Tensor>;

pub(crate) fn load_array<D: Dimension>(
    target: &mut Array<f64, D>,
    name: &str,
    dict: &StateDict,
) -> Result<()> {
    let t = dict
        .get(name)
        .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
    if t.shape != target.shape() {
        return Err(Error::Checkpoint(format!(
            "tensor {name} has shape {:?}, expected {:?}",
            t.shape,
            target.shape()
        )));
    }
    let loaded = Array::from_shape_vec(IxDyn(&t.shape), t.data.clone())
        .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?
        .into_dimensionality::<D>()
        .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
    target.assign(&loaded);
    Ok(())
}

/// Something that owns parameters and persistent buffers.
pub trait Module {
    /// Calls `f` for every trainable parameter in a fixed order.
    fn visit_params<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ParamMut<'a>));

    fn save_state(&self, prefix: &str, dict: &mut StateDict);

    fn load_state(&mut self, prefix: &str, dict: &StateDict) -> Result<()>;

    fn zero_grad(&mut self) {
        self.visit_params("", &mut |_, p| p.grad.fill(0.0));
    }

    fn num_params(&mut self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, p| n += p.value.len());
        n
    }

    fn state_dict(&self) -> StateDict {
        let mut dict = StateDict::new();
        self.save_state("", &mut dict);
        dict
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
