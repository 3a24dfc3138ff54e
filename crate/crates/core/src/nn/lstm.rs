use ndarray::{s, Array1, Array2, ArrayView2, Axis, Ix1, Ix2, Zip};
use rand::Rng;

use super::{join, sigmoid, Module, Param, ParamMut, StateDict};
use crate::error::{Error, Result};

/// A batch of variable-length sequences in time-major padded layout.
///
/// Row `s * batch + b` of `data` holds step `s` of sequence `b`; rows past a
/// sequence's length are padding and are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBatch {
    pub data: Array2<f64>,
    pub lens: Vec<usize>,
}

impl SeqBatch {
    /// Packs `(len_b, dim)` matrices into one padded batch.
    pub fn pack(seqs: &[ArrayView2<'_, f64>]) -> Result<Self> {
        let dim = seqs.first().map(|s| s.ncols()).unwrap_or(0);
        if let Some(bad) = seqs.iter().find(|s| s.ncols() != dim) {
            return Err(Error::Config(format!(
                "sequence feature dimension {} differs from {dim}",
                bad.ncols()
            )));
        }
        let lens: Vec<usize> = seqs.iter().map(|s| s.nrows()).collect();
        let batch = seqs.len();
        let max_len = lens.iter().copied().max().unwrap_or(0);
        let mut data = Array2::zeros((max_len * batch, dim));
        for (b, seq) in seqs.iter().enumerate() {
            for (step, row) in seq.axis_iter(Axis(0)).enumerate() {
                data.row_mut(step * batch + b).assign(&row);
            }
        }
        Ok(Self { data, lens })
    }

    pub fn batch(&self) -> usize {
        self.lens.len()
    }

    pub fn max_len(&self) -> usize {
        self.lens.iter().copied().max().unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, b: usize, step: usize) -> usize {
        step * self.batch() + b
    }

    /// Reverses every sequence within its own length; padding stays at the end.
    fn reversed(&self, data: &Array2<f64>) -> Array2<f64> {
        let batch = self.batch();
        let mut out = Array2::zeros(data.raw_dim());
        for (b, &len) in self.lens.iter().enumerate() {
            for step in 0..len {
                out.row_mut(step * batch + b)
                    .assign(&data.row((len - 1 - step) * batch + b));
            }
        }
        out
    }

    fn zero_padding(&self, data: &mut Array2<f64>) {
        let batch = self.batch();
        for (b, &len) in self.lens.iter().enumerate() {
            for step in len..self.max_len() {
                data.row_mut(step * batch + b).fill(0.0);
            }
        }
    }
}

/// Single-direction LSTM layer with PyTorch gate order `(i, f, g, o)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub w_ih: Param<Ix2>,
    pub w_hh: Param<Ix2>,
    pub b_ih: Param<Ix1>,
    pub b_hh: Param<Ix1>,
}

/// Activations saved by [`Lstm::forward`].
pub struct LstmCache {
    input: Array2<f64>,
    /// Gate activations `(i, f, g, o)` per row, `(T*B, 4h)`.
    gates: Array2<f64>,
    /// Cell states including the zero initial state, `((T+1)*B, h)`.
    cells: Array2<f64>,
    /// Hidden states including the zero initial state, `((T+1)*B, h)`.
    hidden: Array2<f64>,
    batch: usize,
}

impl Lstm {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut u = |shape: (usize, usize)| Array2::from_shape_fn(shape, |_| rng.gen_range(-k..k));
        let w_ih = u((4 * hidden, input));
        let w_hh = u((4 * hidden, hidden));
        let b_ih = u((1, 4 * hidden)).into_shape_with_order(4 * hidden).unwrap();
        let b_hh = u((1, 4 * hidden)).into_shape_with_order(4 * hidden).unwrap();
        Self {
            w_ih: Param::new(w_ih),
            w_hh: Param::new(w_hh),
            b_ih: Param::new(b_ih),
            b_hh: Param::new(b_hh),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hh.value.ncols()
    }

    pub fn input_size(&self) -> usize {
        self.w_ih.value.ncols()
    }

    /// Runs the recurrence over `x` (`(T*B, in)`, time-major) from zero state.
    pub fn forward(&self, x: &Array2<f64>, batch: usize) -> (Array2<f64>, LstmCache) {
        let h = self.hidden_size();
        let steps = x.nrows() / batch.max(1);
        let bias: Array1<f64> = &self.b_ih.value + &self.b_hh.value;
        let projected = x.dot(&self.w_ih.value.t()) + &bias;
        let mut gates = Array2::zeros((steps * batch, 4 * h));
        let mut cells = Array2::zeros(((steps + 1) * batch, h));
        let mut hidden = Array2::zeros(((steps + 1) * batch, h));
        for step in 0..steps {
            let rows = step * batch..(step + 1) * batch;
            let h_prev = hidden.slice(s![rows.clone(), ..]);
            let mut pre = projected.slice(s![rows.clone(), ..]).to_owned();
            pre += &h_prev.dot(&self.w_hh.value.t());
            pre.slice_mut(s![.., 0..2 * h]).mapv_inplace(sigmoid);
            pre.slice_mut(s![.., 2 * h..3 * h]).mapv_inplace(f64::tanh);
            pre.slice_mut(s![.., 3 * h..]).mapv_inplace(sigmoid);

            let mut c_new = Array2::zeros((batch, h));
            let mut h_new = Array2::zeros((batch, h));
            Zip::from(&mut c_new)
                .and(&mut h_new)
                .and(&cells.slice(s![rows.clone(), ..]))
                .and(&pre.slice(s![.., 0..h]))
                .and(&pre.slice(s![.., h..2 * h]))
                .and(&pre.slice(s![.., 2 * h..3 * h]))
                .for_each(|c: &mut f64, hn: &mut f64, &cp: &f64, &i: &f64, &f: &f64, &g: &f64| {
                    *c = f * cp + i * g;
                    *hn = *c;
                });
            Zip::from(&mut h_new)
                .and(&pre.slice(s![.., 3 * h..]))
                .for_each(|hn, &o| *hn = o * hn.tanh());

            let next = (step + 1) * batch..(step + 2) * batch;
            cells.slice_mut(s![next.clone(), ..]).assign(&c_new);
            hidden.slice_mut(s![next, ..]).assign(&h_new);
            gates.slice_mut(s![rows, ..]).assign(&pre);
        }
        let output = hidden.slice(s![batch.., ..]).to_owned();
        (
            output,
            LstmCache {
                input: x.clone(),
                gates,
                cells,
                hidden,
                batch,
            },
        )
    }

    /// Backpropagation through time. Accumulates parameter gradients and
    /// returns `dL/dx` when `need_input_grad` is set.
    pub fn backward(
        &mut self,
        cache: &LstmCache,
        d_out: &Array2<f64>,
        need_input_grad: bool,
    ) -> Option<Array2<f64>> {
        let h = self.hidden_size();
        let batch = cache.batch;
        let steps = d_out.nrows() / batch.max(1);
        let mut d_pre = Array2::zeros((steps * batch, 4 * h));
        let mut dh_next = Array2::<f64>::zeros((batch, h));
        let mut dc_next = Array2::<f64>::zeros((batch, h));
        for step in (0..steps).rev() {
            let rows = step * batch..(step + 1) * batch;
            let next = (step + 1) * batch..(step + 2) * batch;
            let dh = &d_out.slice(s![rows.clone(), ..]) + &dh_next;
            let g = cache.gates.slice(s![rows.clone(), ..]);
            let c_prev = cache.cells.slice(s![rows.clone(), ..]);
            let c = cache.cells.slice(s![next, ..]);
            let mut block = d_pre.slice_mut(s![rows, ..]);
            for b in 0..batch {
                for j in 0..h {
                    let (i, f, gg, o) = (g[[b, j]], g[[b, h + j]], g[[b, 2 * h + j]], g[[b, 3 * h + j]]);
                    let tc = c[[b, j]].tanh();
                    let dhv = dh[[b, j]];
                    let dc = dhv * o * (1.0 - tc * tc) + dc_next[[b, j]];
                    block[[b, j]] = dc * gg * i * (1.0 - i);
                    block[[b, h + j]] = dc * c_prev[[b, j]] * f * (1.0 - f);
                    block[[b, 2 * h + j]] = dc * i * (1.0 - gg * gg);
                    block[[b, 3 * h + j]] = dhv * tc * o * (1.0 - o);
                    dc_next[[b, j]] = dc * f;
                }
            }
            dh_next = block.dot(&self.w_hh.value);
        }
        let h_prev = cache.hidden.slice(s![..steps * batch, ..]);
        self.w_ih.grad += &d_pre.t().dot(&cache.input);
        self.w_hh.grad += &d_pre.t().dot(&h_prev);
        let db = d_pre.sum_axis(Axis(0));
        self.b_ih.grad += &db;
        self.b_hh.grad += &db;
        need_input_grad.then(|| d_pre.dot(&self.w_ih.value))
    }
}

impl Module for Lstm {
    fn visit_params<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ParamMut<'a>)) {
        f(join(prefix, "weight_ih"), self.w_ih.view_mut());
        f(join(prefix, "weight_hh"), self.w_hh.view_mut());
        f(join(prefix, "bias_ih"), self.b_ih.view_mut());
        f(join(prefix, "bias_hh"), self.b_hh.view_mut());
    }

    fn save_state(&self, prefix: &str, dict: &mut StateDict) {
        self.w_ih.save(join(prefix, "weight_ih"), dict);
        self.w_hh.save(join(prefix, "weight_hh"), dict);
        self.b_ih.save(join(prefix, "bias_ih"), dict);
        self.b_hh.save(join(prefix, "bias_hh"), dict);
    }

    fn load_state(&mut self, prefix: &str, dict: &StateDict) -> Result<()> {
        self.w_ih.load(&join(prefix, "weight_ih"), dict)?;
        self.w_hh.load(&join(prefix, "weight_hh"), dict)?;
        self.b_ih.load(&join(prefix, "bias_ih"), dict)?;
        self.b_hh.load(&join(prefix, "bias_hh"), dict)
    }
}

/// Forward and backward LSTMs whose outputs are concatenated per step.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmLayer {
    pub forward: Lstm,
    pub backward: Lstm,
}

struct BiCache {
    fwd: LstmCache,
    bwd: LstmCache,
}

impl BiLstmLayer {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let forward = Lstm::new(input, hidden, rng);
        let backward = Lstm::new(input, hidden, rng);
        Self { forward, backward }
    }

    fn run(&self, x: &SeqBatch) -> (Array2<f64>, BiCache) {
        let batch = x.batch();
        let h = self.forward.hidden_size();
        let (out_f, fwd) = self.forward.forward(&x.data, batch);
        let (out_b_rev, bwd) = self.backward.forward(&x.reversed(&x.data), batch);
        let out_b = x.reversed(&out_b_rev);
        let mut out = Array2::zeros((x.data.nrows(), 2 * h));
        out.slice_mut(s![.., ..h]).assign(&out_f);
        out.slice_mut(s![.., h..]).assign(&out_b);
        x.zero_padding(&mut out);
        (out, BiCache { fwd, bwd })
    }

    fn backprop(
        &mut self,
        x: &SeqBatch,
        cache: &BiCache,
        d_out: &Array2<f64>,
        need_input_grad: bool,
    ) -> Option<Array2<f64>> {
        let h = self.forward.hidden_size();
        let mut d_out = d_out.clone();
        x.zero_padding(&mut d_out);
        let d_f = d_out.slice(s![.., ..h]).to_owned();
        let d_b_rev = x.reversed(&d_out.slice(s![.., h..]).to_owned());
        let dx_f = self.forward.backward(&cache.fwd, &d_f, need_input_grad);
        let dx_b = self.backward.backward(&cache.bwd, &d_b_rev, need_input_grad);
        match (dx_f, dx_b) {
            (Some(f), Some(b)) => {
                let mut dx = f + x.reversed(&b);
                x.zero_padding(&mut dx);
                Some(dx)
            }
            _ => None,
        }
    }
}

impl Module for BiLstmLayer {
    fn visit_params<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ParamMut<'a>)) {
        self.forward.visit_params(&join(prefix, "forward"), f);
        self.backward.visit_params(&join(prefix, "backward"), f);
    }

    fn save_state(&self, prefix: &str, dict: &mut StateDict) {
        self.forward.save_state(&join(prefix, "forward"), dict);
        self.backward.save_state(&join(prefix, "backward"), dict);
    }

    fn load_state(&mut self, prefix: &str, dict: &StateDict) -> Result<()> {
        self.forward.load_state(&join(prefix, "forward"), dict)?;
        self.backward.load_state(&join(prefix, "backward"), dict)
    }
}

/// Stack of bidirectional layers with inverted dropout between layers.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedBiLstm {
    pub layers: Vec<BiLstmLayer>,
    pub dropout: f64,
}

pub struct StackedCache {
    inputs: Vec<SeqBatch>,
    caches: Vec<BiCache>,
    masks: Vec<Option<Array2<f64>>>,
}

impl StackedBiLstm {
    pub fn new<R: Rng>(input: usize, hidden: usize, layers: usize, dropout: f64, rng: &mut R) -> Self {
        let layers = (0..layers)
            .map(|l| BiLstmLayer::new(if l == 0 { input } else { 2 * hidden }, hidden, rng))
            .collect();
        Self { layers, dropout }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].forward.input_size()
    }

    /// Output width, twice the per-direction hidden size.
    pub fn output_size(&self) -> usize {
        2 * self.layers[0].forward.hidden_size()
    }

    /// Evaluation-mode forward pass; no dropout, nothing cached.
    pub fn infer(&self, x: &SeqBatch) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut current = x.clone();
        for layer in &self.layers {
            let (out, _) = layer.run(&current);
            current = SeqBatch {
                data: out,
                lens: x.lens.clone(),
            };
        }
        Ok(current.data)
    }

    /// Training-mode forward pass. Dropout masks are drawn from `rng` when
    /// `dropout > 0`.
    pub fn forward_train<R: Rng>(&self, x: &SeqBatch, rng: &mut R) -> Result<(Array2<f64>, StackedCache)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mask = if l > 0 && self.dropout > 0.0 {
                let keep = 1.0 - self.dropout;
                let m = Array2::from_shape_fn(current.data.raw_dim(), |_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                current.data *= &m;
                Some(m)
            } else {
                None
            };
            let (out, cache) = layer.run(&current);
            inputs.push(current);
            caches.push(cache);
            masks.push(mask);
            current = SeqBatch {
                data: out,
                lens: x.lens.clone(),
            };
        }
        Ok((current.data, StackedCache { inputs, caches, masks }))
    }

    /// Backpropagates `d_out` through every layer. The gradient w.r.t. the
    /// stack input is not needed by any caller and is not computed.
    pub fn backward(&mut self, cache: &StackedCache, d_out: &Array2<f64>) {
        let mut grad = d_out.clone();
        for l in (0..self.layers.len()).rev() {
            let need_input = l > 0;
            let dx = self.layers[l].backprop(&cache.inputs[l], &cache.caches[l], &grad, need_input);
            if let Some(mut dx) = dx {
                if let Some(mask) = &cache.masks[l] {
                    dx *= mask;
                }
                grad = dx;
            }
        }
    }

    fn check_input(&self, x: &SeqBatch) -> Result<()> {
        if x.dim() != self.input_size() {
            return Err(Error::Config(format!(
                "utterance embeddings have dimension {}, the model expects {}",
                x.dim(),
                self.input_size()
            )));
        }
        Ok(())
    }
}

impl Module for StackedBiLstm {
    fn visit_params<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ParamMut<'a>)) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_params(&join(prefix, &format!("layer{l}")), f);
        }
    }

    fn save_state(&self, prefix: &str, dict: &mut StateDict) {
        for (l, layer) in self.layers.iter().enumerate() {
            layer.save_state(&join(prefix, &format!("layer{l}")), dict);
        }
    }

    fn load_state(&mut self, prefix: &str, dict: &StateDict) -> Result<()> {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer.load_state(&join(prefix, &format!("layer{l}")), dict)?;
        }
        Ok(())
    }
}
