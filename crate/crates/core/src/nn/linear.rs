use ndarray::{Array1, Array2, Axis, Ix1, Ix2};
use rand::Rng;

use super::{join, Module, Param, ParamMut, StateDict};
use crate::error::Result;

/// Affine layer `y = x Wᵀ + b` with `W` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Param<Ix2>,
    pub bias: Param<Ix1>,
}

impl Linear {
    /// Uniform initialization in `±1/sqrt(in)` for weights and bias.
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = Array2::from_shape_fn((out_dim, in_dim), |_| rng.gen_range(-bound..bound));
        let bias = Array1::from_shape_fn(out_dim, |_| rng.gen_range(-bound..bound));
        Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.value.t()) + &self.bias.value
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        self.weight.grad += &dy.t().dot(x);
        self.bias.grad += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight.value)
    }
}

impl Module for Linear {
    fn visit_params<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ParamMut<'a>)) {
        f(join(prefix, "weight"), self.weight.view_mut());
        f(join(prefix, "bias"), self.bias.view_mut());
    }

    fn save_state(&self, prefix: &str, dict: &mut StateDict) {
        self.weight.save(join(prefix, "weight"), dict);
        self.bias.save(join(prefix, "bias"), dict);
    }

    fn load_state(&mut self, prefix: &str, dict: &StateDict) -> Result<()> {
        self.weight.load(&join(prefix, "weight"), dict)?;
        self.bias.load(&join(prefix, "bias"), dict)
    }
}
