use std::hash::Hasher;

use fnv::FnvHasher;

use super::Embedder;
use crate::error::{Error, Result};

/// Offline encoder: signed feature hashing of lowercased words (weight 1)
/// and boundary-marked character trigrams (weight 0.5), L2-normalized.
///
/// Needs no model files, so the whole pipeline runs without downloads.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    id: String,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("hashing embedder dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            id: format!("hashing-v1-{dim}"),
        })
    }

    fn add(&self, v: &mut [f32], feature: &str, weight: f32) {
        let mut h = FnvHasher::default();
        h.write(feature.as_bytes());
        let hash = h.finish();
        let slot = (hash % self.dim as u64) as usize;
        let sign = if (hash >> 63) == 0 { 1.0 } else { -1.0 };
        v[slot] += sign * weight;
    }
}

impl Embedder for HashingEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        let mut v = vec![0f32; self.dim];
        let lowered = text.to_lowercase();
        for word in lowered.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            self.add(&mut v, &format!("w:{word}"), 1.0);
            let chars: Vec<char> = format!("<{word}>").chars().collect();
            for tri in chars.windows(3) {
                self.add(&mut v, &format!("c:{}", tri.iter().collect::<String>()), 0.5);
            }
        }
        for punct in lowered.chars().filter(|c| c.is_ascii_punctuation()) {
            self.add(&mut v, &format!("p:{punct}"), 0.5);
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}
