use ndarray::{Array1, Array2, Axis, Ix1};

use super::{join, load_array, Module, Param, ParamMut, StateDict, Tensor};
use crate::error::Result;

/// Batch normalization over the rows of a `(batch, features)` matrix.
///
/// Training mode normalizes with batch statistics and updates the running
/// estimates; evaluation mode uses the running estimates only.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d {
    pub gamma: Param<Ix1>,
    pub beta: Param<Ix1>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

pub struct BatchNormCache {
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl BatchNorm1d {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Param::new(Array1::ones(dim)),
            beta: Param::new(Array1::zeros(dim)),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn forward_train(&mut self, x: &Array2<f64>) -> (Array2<f64>, BatchNormCache) {
        let n = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = x - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let x_hat = &centered * &inv_std;
        let y = &x_hat * &self.gamma.value + &self.beta.value;

        let unbiased = if x.nrows() > 1 { &var * (n / (n - 1.0)) } else { var.clone() };
        let m = self.momentum;
        self.running_mean = &self.running_mean * (1.0 - m) + &mean * m;
        self.running_var = &self.running_var * (1.0 - m) + &unbiased * m;
        (y, BatchNormCache { x_hat, inv_std })
    }

    pub fn forward_eval(&self, x: &Array2<f64>) -> Array2<f64> {
        let inv_std = self.running_var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        (x - &self.running_mean) * &inv_std * &self.gamma.value + &self.beta.value
    }

    pub fn backward(&mut self, cache: &BatchNormCache, dy: &Array2<f64>) -> Array2<f64> {
        let n = dy.nrows() as f64;
        self.beta.grad += &dy.sum_axis(Axis(0));
        self.gamma.grad += &(dy * &cache.x_hat).sum_axis(Axis(0));
        let dx_hat = dy * &self.gamma.value;
        let sum_dx_hat = dx_hat.sum_axis(Axis(0));
        let sum_dx_hat_x_hat = (&dx_hat * &cache.x_hat).sum_axis(Axis(0));
        let scaled = &dx_hat * n - &sum_dx_hat - &cache.x_hat * &sum_dx_hat_x_hat;
        scaled * &(&cache.inv_std / n)
    }
}

impl Module for BatchNorm1d {
    fn visit_params<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ParamMut<'a>)) {
        f(join(prefix, "weight"), self.gamma.view_mut());
        f(join(prefix, "bias"), self.beta.view_mut());
    }

    fn save_state(&self, prefix: &str, dict: &mut StateDict) {
        self.gamma.save(join(prefix, "weight"), dict);
        self.beta.save(join(prefix, "bias"), dict);
        dict.insert(join(prefix, "running_mean"), Tensor::from_array(&self.running_mean));
        dict.insert(join(prefix, "running_var"), Tensor::from_array(&self.running_var));
    }

    fn load_state(&mut self, prefix: &str, dict: &StateDict) -> Result<()> {
        self.gamma.load(&join(prefix, "weight"), dict)?;
        self.beta.load(&join(prefix, "bias"), dict)?;
        load_array(&mut self.running_mean, &join(prefix, "running_mean"), dict)?;
        load_array(&mut self.running_var, &join(prefix, "running_var"), dict)
    }
}
