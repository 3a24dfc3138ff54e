//! Inference-only BERT encoder producing mean-pooled sentence vectors from a
//! chosen hidden layer (the penultimate one by default).
//!
//! A model directory holds `config.json`, `vocab.txt` and `model.safetensors`
//! in the layout written by the usual `save_pretrained` tooling. Parameter
//! names with or without the `bert.` prefix are accepted, as are the legacy
//! `gamma`/`beta` layer-norm names.

mod tokenizer;

use std::path::{Path, PathBuf};

use ndarray::{s, Array1, Array2, Axis};
use safetensors::{Dtype, SafeTensors};
use serde::Deserialize;

use super::Embedder;
use crate::error::{Error, Result};

pub use tokenizer::WordPieceTokenizer;

#[derive(Debug, Clone, Deserialize)]
struct BertConfig {
    hidden_size: usize,
    num_hidden_layers: usize,
    num_attention_heads: usize,
    max_position_embeddings: usize,
    #[serde(default = "default_ln_eps")]
    layer_norm_eps: f32,
    #[serde(default = "default_act")]
    hidden_act: String,
}

fn default_ln_eps() -> f32 {
    1e-12
}

fn default_act() -> String {
    "gelu".into()
}

struct Dense {
    weight_t: Array2<f32>,
    bias: Array1<f32>,
}

impl Dense {
    fn apply(&self, x: &Array2<f32>) -> Array2<f32> {
        x.dot(&self.weight_t) + &self.bias
    }
}

struct LayerNorm {
    weight: Array1<f32>,
    bias: Array1<f32>,
    eps: f32,
}

impl LayerNorm {
    fn apply(&self, x: &Array2<f32>) -> Array2<f32> {
        let mut out = x.clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            let n = row.len() as f32;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
            let inv = 1.0 / (var + self.eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
        }
        out * &self.weight + &self.bias
    }
}

struct EncoderLayer {
    query: Dense,
    key: Dense,
    value: Dense,
    attn_out: Dense,
    attn_norm: LayerNorm,
    intermediate: Dense,
    output: Dense,
    out_norm: LayerNorm,
}

/// BERT sentence encoder with mean pooling over one hidden layer.
pub struct BertEmbedder {
    id: String,
    tokenizer: WordPieceTokenizer,
    config: BertConfig,
    word: Array2<f32>,
    position: Array2<f32>,
    token_type: Array2<f32>,
    emb_norm: LayerNorm,
    layers: Vec<EncoderLayer>,
}

struct Weights<'a> {
    tensors: SafeTensors<'a>,
    prefix: &'static str,
}

impl Weights<'_> {
    fn raw(&self, name: &str) -> Result<(Vec<usize>, Vec<f32>)> {
        let full = format!("{}{name}", self.prefix);
        let alt = full.replace("LayerNorm.weight", "LayerNorm.gamma").replace("LayerNorm.bias", "LayerNorm.beta");
        let view = self
            .tensors
            .tensor(&full)
            .or_else(|_| self.tensors.tensor(&alt))
            .map_err(|_| Error::Embedding(format!("checkpoint lacks tensor {full}")))?;
        if view.dtype() != Dtype::F32 {
            return Err(Error::Embedding(format!(
                "tensor {full} has dtype {:?}; only F32 checkpoints are supported",
                view.dtype()
            )));
        }
        let data = view
            .data()
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok((view.shape().to_vec(), data))
    }

    fn matrix(&self, name: &str) -> Result<Array2<f32>> {
        let (shape, data) = self.raw(name)?;
        if shape.len() != 2 {
            return Err(Error::Embedding(format!("tensor {name} is not a matrix")));
        }
        Array2::from_shape_vec((shape[0], shape[1]), data).map_err(|e| Error::Embedding(e.to_string()))
    }

    fn vector(&self, name: &str) -> Result<Array1<f32>> {
        let (_, data) = self.raw(name)?;
        Ok(Array1::from(data))
    }

    fn dense(&self, name: &str) -> Result<Dense> {
        Ok(Dense {
            weight_t: self.matrix(&format!("{name}.weight"))?.reversed_axes().as_standard_layout().to_owned(),
            bias: self.vector(&format!("{name}.bias"))?,
        })
    }

    fn norm(&self, name: &str, eps: f32) -> Result<LayerNorm> {
        Ok(LayerNorm {
            weight: self.vector(&format!("{name}.weight"))?,
            bias: self.vector(&format!("{name}.bias"))?,
            eps,
        })
    }
}

fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x / std::f32::consts::SQRT_2))
}

impl BertEmbedder {
    /// Loads a checkpoint directory; `id` names the encoder in caches and
    /// cause-model checkpoints.
    pub fn load(dir: &Path, id: impl Into<String>) -> Result<Self> {
        let read = |name: &str| -> Result<Vec<u8>> {
            let path: PathBuf = dir.join(name);
            std::fs::read(&path).map_err(|e| Error::io(&path, e))
        };
        let config: BertConfig = serde_json::from_slice(&read("config.json")?)
            .map_err(|e| Error::Embedding(format!("{}: bad config.json: {e}", dir.display())))?;
        if config.hidden_act != "gelu" {
            return Err(Error::Embedding(format!("unsupported activation {}", config.hidden_act)));
        }
        if config.num_hidden_layers < 2 {
            return Err(Error::Embedding("encoder needs at least two layers".into()));
        }
        let tokenizer = WordPieceTokenizer::from_vocab_file(&dir.join("vocab.txt"), true)?;
        let bytes = read("model.safetensors")?;
        let tensors = SafeTensors::deserialize(&bytes)
            .map_err(|e| Error::Embedding(format!("{}: {e}", dir.display())))?;
        let prefix = if tensors.tensor("bert.embeddings.word_embeddings.weight").is_ok() {
            "bert."
        } else {
            ""
        };
        let w = Weights { tensors, prefix };
        let eps = config.layer_norm_eps;
        // The last encoder layer is never evaluated.
        let layers = (0..config.num_hidden_layers - 1)
            .map(|l| {
                let p = format!("encoder.layer.{l}");
                Ok(EncoderLayer {
                    query: w.dense(&format!("{p}.attention.self.query"))?,
                    key: w.dense(&format!("{p}.attention.self.key"))?,
                    value: w.dense(&format!("{p}.attention.self.value"))?,
                    attn_out: w.dense(&format!("{p}.attention.output.dense"))?,
                    attn_norm: w.norm(&format!("{p}.attention.output.LayerNorm"), eps)?,
                    intermediate: w.dense(&format!("{p}.intermediate.dense"))?,
                    output: w.dense(&format!("{p}.output.dense"))?,
                    out_norm: w.norm(&format!("{p}.output.LayerNorm"), eps)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            id: id.into(),
            tokenizer,
            word: w.matrix("embeddings.word_embeddings.weight")?,
            position: w.matrix("embeddings.position_embeddings.weight")?,
            token_type: w.matrix("embeddings.token_type_embeddings.weight")?,
            emb_norm: w.norm("embeddings.LayerNorm", eps)?,
            layers,
            config,
        })
    }

    pub fn tokenizer(&self) -> &WordPieceTokenizer {
        &self.tokenizer
    }

    fn encode_ids(&self, ids: &[u32]) -> Array1<f32> {
        let n = ids.len();
        let d = self.config.hidden_size;
        let heads = self.config.num_attention_heads;
        let head_dim = d / heads;
        let scale = 1.0 / (head_dim as f32).sqrt();

        let mut x = Array2::<f32>::zeros((n, d));
        for (pos, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(pos);
            row += &self.word.row(id as usize);
            row += &self.position.row(pos);
            row += &self.token_type.row(0);
        }
        let mut x = self.emb_norm.apply(&x);

        for layer in &self.layers {
            let q = layer.query.apply(&x);
            let k = layer.key.apply(&x);
            let v = layer.value.apply(&x);
            let mut context = Array2::<f32>::zeros((n, d));
            for h in 0..heads {
                let cols = s![.., h * head_dim..(h + 1) * head_dim];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                for mut row in scores.axis_iter_mut(Axis(0)) {
                    let max = row.fold(f32::NEG_INFINITY, |m, &v| m.max(v));
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
                context.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            }
            let attended = layer.attn_norm.apply(&(layer.attn_out.apply(&context) + &x));
            let inner = layer.intermediate.apply(&attended).mapv(gelu);
            x = layer.out_norm.apply(&(layer.output.apply(&inner) + &attended));
        }
        x.mean_axis(Axis(0)).expect("at least [CLS] and [SEP]")
    }
}

impl Embedder for BertEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.config.hidden_size
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        let ids = self.tokenizer.encode(text, self.config.max_position_embeddings.min(512));
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.word.nrows()) {
            return Err(Error::Embedding(format!("token id {bad} outside the embedding table")));
        }
        let v = self.encode_ids(&ids);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Embedding(format!("non-finite embedding for {text:?}")));
        }
        Ok(v.to_vec())
    }
}
