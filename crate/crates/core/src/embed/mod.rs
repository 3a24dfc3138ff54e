//! Sentence embeddings for utterances.

mod bert;
mod hashing;

use std::collections::HashMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Conversation;
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub use bert::{BertEmbedder, WordPieceTokenizer};
pub use hashing::HashingEmbedder;

/// A deterministic text-to-vector encoder.
pub trait Embedder: Send + Sync {
    /// Stable identifier; embeddings from different ids are not comparable.
    fn id(&self) -> &str;

    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vec<f32>>;
}

/// Which encoder to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmbedderSpec {
    /// Pre-trained BERT checkpoint directory.
    Bert {
        model_dir: PathBuf,
        #[serde(default = "default_bert_id")]
        id: String,
    },
    /// Signed feature hashing of words and character trigrams.
    Hashing {
        #[serde(default = "default_hashing_dim")]
        dim: usize,
    },
}

fn default_bert_id() -> String {
    "bert-base-uncased/penultimate-mean".into()
}

fn default_hashing_dim() -> usize {
    768
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::Bert {
            model_dir: PathBuf::from("models/bert-base-uncased"),
            id: default_bert_id(),
        }
    }
}

impl EmbedderSpec {
    /// Builds the encoder, wrapped in an on-disk cache when `cache_dir` is set.
    pub fn build(&self, cache_dir: Option<&Path>) -> Result<CachedEmbedder> {
        let inner: Box<dyn Embedder> = match self {
            EmbedderSpec::Bert { model_dir, id } => Box::new(BertEmbedder::load(model_dir, id.clone())?),
            EmbedderSpec::Hashing { dim } => Box::new(HashingEmbedder::new(*dim)?),
        };
        Ok(CachedEmbedder::new(inner, cache_dir.map(Path::to_path_buf)))
    }
}

fn text_key(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

/// Memoizes another embedder in memory and, optionally, on disk under
/// `<dir>/<embedder id>/<sha256(text)>.f32`.
pub struct CachedEmbedder {
    inner: Box<dyn Embedder>,
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, Vec<f32>>>,
}

impl CachedEmbedder {
    pub fn new(inner: Box<dyn Embedder>, dir: Option<PathBuf>) -> Self {
        let dir = dir.map(|d| d.join(sanitize(inner.id())));
        Self {
            inner,
            dir,
            memory: Mutex::new(HashMap::new()),
        }
    }

    fn read_disk(&self, path: &Path) -> Option<Vec<f32>> {
        let mut bytes = Vec::new();
        std::fs::File::open(path).ok()?.read_to_end(&mut bytes).ok()?;
        if bytes.len() != 4 * self.inner.dim() {
            return None;
        }
        Some(
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
        )
    }
}

impl Embedder for CachedEmbedder {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        let key = text_key(text);
        if let Some(v) = self.memory.lock().expect("cache lock").get(&key) {
            return Ok(v.clone());
        }
        let path = self.dir.as_ref().map(|d| d.join(&key[..2]).join(format!("{key}.f32")));
        let cached = path.as_deref().and_then(|p| self.read_disk(p));
        let vector = match cached {
            Some(v) => v,
            None => {
                let v = self.inner.embed(text)?;
                if let Some(p) = &path {
                    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
                    write_atomic(p, &bytes)?;
                }
                v
            }
        };
        self.memory.lock().expect("cache lock").insert(key, vector.clone());
        Ok(vector)
    }
}

/// One row per utterance, in utterance order.
pub fn embed_conversation(conv: &Conversation, embedder: &dyn Embedder) -> Result<Array2<f64>> {
    let dim = embedder.dim();
    let mut out = Array2::zeros((conv.len(), dim));
    for utt in &conv.utterances {
        let v = embedder.embed(&utt.text).map_err(|e| {
            Error::Embedding(format!("conversation {} utterance {}: {e}", conv.id, utt.index))
        })?;
        if v.len() != dim {
            return Err(Error::Embedding(format!(
                "conversation {} utterance {}: got {} values, expected {dim}",
                conv.id,
                utt.index,
                v.len()
            )));
        }
        for (slot, x) in out.row_mut(utt.index - 1).iter_mut().zip(v) {
            *slot = f64::from(x);
        }
    }
    Ok(out)
}

/// Embeds every conversation, in parallel across conversations.
pub fn embed_corpus(corpus: &[Conversation], embedder: &dyn Embedder) -> Result<Vec<Array2<f64>>> {
    corpus.par_iter().map(|c| embed_conversation(c, embedder)).collect()
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Counting(Arc<AtomicUsize>);

    impl Embedder for Counting {
        fn id(&self) -> &str {
            "counting/v1"
        }
        fn dim(&self) -> usize {
            2
        }
        fn embed(&self, text: &str) -> Result<Vec<f32>> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(vec![text.len() as f32, 1.0])
        }
    }

    #[test]
    fn disk_cache_survives_new_instance() {
        let dir = tempfile::tempdir().unwrap();
        let calls = Arc::new(AtomicUsize::new(0));
        let first = CachedEmbedder::new(Box::new(Counting(calls.clone())), Some(dir.path().into()));
        assert_eq!(first.embed("abc").unwrap(), vec![3.0, 1.0]);
        first.embed("abc").unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        let second = CachedEmbedder::new(Box::new(Counting(calls.clone())), Some(dir.path().into()));
        assert_eq!(second.embed("abc").unwrap(), vec![3.0, 1.0]);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert!(dir.path().join("counting_v1").is_dir());
    }

    #[test]
    fn conversation_shape() {
        let corpus = crate::corpus::from_task_json_str(
            r#"[{"conversation_ID": 1, "conversation": [
              {"utterance_ID": 1, "text": "a", "speaker": "A"},
              {"utterance_ID": 2, "text": "a", "speaker": "B"},
              {"utterance_ID": 3, "text": "bcd", "speaker": "A"}]}]"#,
        )
        .unwrap();
        let emb = HashingEmbedder::new(16).unwrap();
        let m = embed_conversation(&corpus[0], &emb).unwrap();
        assert_eq!(m.dim(), (3, 16));
        assert_eq!(m.row(0), m.row(1));
    }
}
