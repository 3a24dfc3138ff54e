use std::path::Path;

use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classify::{BackendKind, ClassificationResult, UtteranceClassifier};
use super::prompt::START_SENTINEL;
use crate::checkpoint;
use crate::corpus::{Conversation, EmotionLabel};
use crate::embed::{embed_conversation, Embedder};
use crate::error::{Error, Result};
use crate::nn::{weighted_cross_entropy, Adam, AdamConfig, Linear, Module, ParamMut, StateDict};

const ARCHIVE_KIND: &str = "local-emotion-model";
const CLASSES: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalClassifierConfig {
    pub hidden_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for LocalClassifierConfig {
    fn default() -> Self {
        Self {
            hidden_size: 256,
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveMeta {
    config: LocalClassifierConfig,
    seed: u64,
    embedder_id: String,
    input_dim: usize,
    labels: Vec<EmotionLabel>,
}

/// Two-layer perceptron over `emb(previous) ‖ emb(target)`; the first
/// utterance of a dialog uses the embedding of the start sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalEmotionModel {
    pub config: LocalClassifierConfig,
    pub seed: u64,
    pub embedder_id: String,
    /// Width of one utterance embedding.
    pub input_dim: usize,
    fc1: Linear,
    fc2: Linear,
}

struct Net<'a>(&'a mut Linear, &'a mut Linear);

impl Module for Net<'_> {
    fn visit_params<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ParamMut<'a>)) {
        self.0.visit_params(&crate::nn::join(prefix, "fc1"), f);
        self.1.visit_params(&crate::nn::join(prefix, "fc2"), f);
    }

    fn save_state(&self, prefix: &str, dict: &mut StateDict) {
        self.0.save_state(&crate::nn::join(prefix, "fc1"), dict);
        self.1.save_state(&crate::nn::join(prefix, "fc2"), dict);
    }

    fn load_state(&mut self, prefix: &str, dict: &StateDict) -> Result<()> {
        self.0.load_state(&crate::nn::join(prefix, "fc1"), dict)?;
        self.1.load_state(&crate::nn::join(prefix, "fc2"), dict)
    }
}

/// Pair features of every utterance of `conv`, one row each.
pub fn pair_features(conv: &Conversation, embedder: &dyn Embedder) -> Result<Array2<f64>> {
    let emb = embed_conversation(conv, embedder)?;
    let d = emb.ncols();
    let sentinel: Vec<f64> = embedder.embed(START_SENTINEL)?.into_iter().map(f64::from).collect();
    let mut out = Array2::zeros((conv.len(), 2 * d));
    for t in 0..conv.len() {
        let mut row = out.row_mut(t);
        if t == 0 {
            row.slice_mut(s![..d]).assign(&ndarray::ArrayView1::from(&sentinel));
        } else {
            row.slice_mut(s![..d]).assign(&emb.row(t - 1));
        }
        row.slice_mut(s![d..]).assign(&emb.row(t));
    }
    Ok(out)
}

impl LocalEmotionModel {
    fn init(config: LocalClassifierConfig, input_dim: usize, embedder_id: String, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fc1 = Linear::new(2 * input_dim, config.hidden_size, &mut rng);
        let fc2 = Linear::new(config.hidden_size, CLASSES, &mut rng);
        Self {
            config,
            seed,
            embedder_id,
            input_dim,
            fc1,
            fc2,
        }
    }

    fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        self.fc2.forward(&self.fc1.forward(x).mapv(|v| v.max(0.0)))
    }

    /// Argmax labels for rows of pair features; ties go to the lower index.
    pub fn predict_features(&self, x: &Array2<f64>) -> Vec<EmotionLabel> {
        self.logits(x)
            .axis_iter(Axis(0))
            .map(|row| {
                let mut best = 0;
                for k in 1..CLASSES {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                EmotionLabel::from_index(best).expect("seven classes")
            })
            .collect()
    }

    pub fn predict(&self, conv: &Conversation, embedder: &dyn Embedder) -> Result<Vec<EmotionLabel>> {
        if embedder.id() != self.embedder_id {
            return Err(Error::Config(format!(
                "local emotion model expects embeddings from {:?}, got {:?}",
                self.embedder_id,
                embedder.id()
            )));
        }
        if conv.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.predict_features(&pair_features(conv, embedder)?))
    }

    fn meta(&self) -> ArchiveMeta {
        ArchiveMeta {
            config: self.config.clone(),
            seed: self.seed,
            embedder_id: self.embedder_id.clone(),
            input_dim: self.input_dim,
            labels: EmotionLabel::ALL.to_vec(),
        }
    }

    fn state(&self) -> StateDict {
        let mut dict = StateDict::new();
        self.fc1.save_state("fc1", &mut dict);
        self.fc2.save_state("fc2", &mut dict);
        dict
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        checkpoint::encode(ARCHIVE_KIND, &self.meta(), &self.state())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, ARCHIVE_KIND, &self.meta(), &self.state())
    }

    fn from_parts(meta: ArchiveMeta, dict: StateDict) -> Result<Self> {
        if meta.labels != EmotionLabel::ALL {
            return Err(Error::Checkpoint("archive uses a different label order".into()));
        }
        let mut model = Self::init(meta.config, meta.input_dim, meta.embedder_id, meta.seed);
        Net(&mut model.fc1, &mut model.fc2).load_state("", &dict)?;
        Ok(model)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (meta, dict) = checkpoint::decode(bytes, ARCHIVE_KIND)?;
        Self::from_parts(meta, dict)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, dict) = checkpoint::load(path, ARCHIVE_KIND)?;
        Self::from_parts(meta, dict)
    }
}

/// Trains the fallback classifier on gold emotions with Adam and
/// cross-entropy; fully determined by `seed`.
pub fn train_local_classifier(
    train: &[Conversation],
    embedder: &dyn Embedder,
    config: &LocalClassifierConfig,
    seed: u64,
) -> Result<LocalEmotionModel> {
    if config.hidden_size == 0 || config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::Config("local classifier: sizes and learning rate must be positive".into()));
    }
    let gold: Vec<Vec<EmotionLabel>> = train.iter().map(|c| c.gold_emotions()).collect::<Result<_>>()?;
    let n: usize = gold.iter().map(Vec::len).sum();
    if n == 0 {
        return Err(Error::Argument("local classifier needs at least one labelled utterance".into()));
    }
    let blocks: Vec<Array2<f64>> = train
        .par_iter()
        .filter(|c| !c.is_empty())
        .map(|c| pair_features(c, embedder))
        .collect::<Result<_>>()?;
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let x = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Data(e.to_string()))?;
    let y: Vec<usize> = gold.iter().flatten().map(|l| l.index()).collect();

    let mut model = LocalEmotionModel::init(config.clone(), embedder.dim(), embedder.id().to_string(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut adam = Adam::new(AdamConfig {
        lr: config.learning_rate,
        weight_decay: config.weight_decay,
        ..AdamConfig::default()
    });
    let weights = [1.0; CLASSES];
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let h = model.fc1.forward(&xb);
            let a = h.mapv(|v| v.max(0.0));
            let logits = model.fc2.forward(&a);
            let (loss, d_logits) = weighted_cross_entropy(&logits, &yb, &weights);
            let mut net = Net(&mut model.fc1, &mut model.fc2);
            net.zero_grad();
            let mut da = net.1.backward(&a, &d_logits);
            da.zip_mut_with(&h, |g, &v| {
                if v <= 0.0 {
                    *g = 0.0
                }
            });
            net.0.backward(&xb, &da);
            adam.step(&mut net);
            total += loss * chunk.len() as f64;
        }
        log::info!("local emotion epoch {epoch}/{}: loss {:.4}", config.epochs, total / n as f64);
    }
    Ok(model)
}

/// Runs a trained local model as an [`UtteranceClassifier`].
pub struct LocalClassifier<'a> {
    pub model: &'a LocalEmotionModel,
    pub embedder: &'a dyn Embedder,
}

impl UtteranceClassifier for LocalClassifier<'_> {
    fn kind(&self) -> BackendKind {
        BackendKind::Local
    }

    fn classify_conversation(&self, conv: &Conversation) -> Result<Vec<ClassificationResult>> {
        Ok(self
            .model
            .predict(conv, self.embedder)?
            .into_iter()
            .enumerate()
            .map(|(p, label)| ClassificationResult {
                index: p + 1,
                label,
                raw_output: String::new(),
                backend: BackendKind::Local,
                cache_hit: false,
                normalization_failed: false,
            })
            .collect())
    }

    fn classify_corpus(&self, corpus: &[Conversation]) -> Result<Vec<Vec<ClassificationResult>>> {
        corpus.par_iter().map(|c| self.classify_conversation(c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;
    use crate::embed::HashingEmbedder;
    use crate::metrics::classification_f1;

    fn corpus() -> Vec<Conversation> {
        let lines = [
            ("I love this, what a great day!", EmotionLabel::Joy),
            ("Pass me the salt.", EmotionLabel::Neutral),
            ("Get out of my apartment right now!", EmotionLabel::Anger),
            ("There is a spider on my neck!", EmotionLabel::Fear),
            ("My grandmother passed away.", EmotionLabel::Sadness),
            ("Wait, you are getting married?", EmotionLabel::Surprise),
            ("Ugh, that sandwich smells rotten.", EmotionLabel::Disgust),
        ];
        (0..4)
            .map(|d| Conversation {
                id: d.to_string(),
                utterances: (0..7)
                    .map(|k| {
                        let (text, e) = lines[(k + d) % 7];
                        Utterance {
                            index: k + 1,
                            speaker: if k % 2 == 0 { "A".into() } else { "B".into() },
                            text: text.into(),
                            gold_emotion: Some(e),
                        }
                    })
                    .collect(),
                gold_pairs: vec![],
            })
            .collect()
    }

    #[test]
    fn fits_training_data_deterministically() {
        let data = corpus();
        let emb = HashingEmbedder::new(64).unwrap();
        let config = LocalClassifierConfig {
            hidden_size: 32,
            epochs: 60,
            batch_size: 8,
            ..LocalClassifierConfig::default()
        };
        let a = train_local_classifier(&data, &emb, &config, 3).unwrap();
        let b = train_local_classifier(&data, &emb, &config, 3).unwrap();
        assert_eq!(a, b);
        let pred: Vec<_> = data.iter().flat_map(|c| a.predict(c, &emb).unwrap()).collect();
        let gold: Vec<_> = data.iter().flat_map(|c| c.gold_emotions().unwrap()).collect();
        assert!(classification_f1(&pred, &gold).unwrap().weighted_f1 > 0.95);
        assert_eq!(LocalEmotionModel::from_bytes(&a.to_bytes().unwrap()).unwrap(), a);
    }

    #[test]
    fn empty_training_set_rejected() {
        let emb = HashingEmbedder::new(8).unwrap();
        let err = train_local_classifier(&[], &emb, &LocalClassifierConfig::default(), 0).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn first_utterance_uses_sentinel() {
        let emb = HashingEmbedder::new(8).unwrap();
        let conv = &corpus()[0];
        let f = pair_features(conv, &emb).unwrap();
        let sentinel = emb.embed(START_SENTINEL).unwrap();
        assert_eq!(f[[0, 3]], f64::from(sentinel[3]));
        assert_eq!(f.row(1).slice(s![..8]), f.row(0).slice(s![8..]));
    }
}
