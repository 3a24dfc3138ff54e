//! Causal-utterance detection.
//!
//! Utterance embeddings of a whole conversation run through a stacked
//! BiLSTM. For every emotional utterance `t`, each history utterance
//! `i ≤ t` becomes a candidate whose feature vector is
//! `ctx_i ‖ spk_i ‖ ctx_t ‖ spk_t ‖ emo_t`, and a small feed-forward head
//! (linear, batch norm, ReLU, linear) decides whether `i` caused `t`.

mod baseline;
mod train;

use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::corpus::{speaker_encodings, Conversation, EmotionCausePair, EmotionLabel, SpeakerEncoding};
use crate::embed::{embed_conversation, Embedder};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm1d, Linear, Module, ParamMut, SeqBatch, StackedBiLstm, StateDict};

pub use baseline::self_and_previous;
pub use train::{
    labelled_candidates, train_cause_model, EmbeddedDialogs, EpochLog, LabelledCandidate, TrainedCause,
};

/// Width of the target-emotion one-hot block.
pub const EMOTION_FEATURES: usize = 6;

const ARCHIVE_KIND: &str = "cause-model";
const SPEAKER_SCHEME: &str = "first-appearance-one-hot";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CauseConfig {
    /// Per-direction LSTM hidden size.
    pub hidden_size: usize,
    pub num_layers: usize,
    /// Dropout on the inputs of every LSTM layer after the first.
    pub dropout: f64,
    pub head_hidden: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Dialogs per optimizer step.
    pub batch_size: usize,
    /// Loss weight of causal candidates relative to non-causal ones.
    pub positive_weight: f64,
    /// Speaker one-hot width; derived from the training data when unset.
    pub max_speakers: Option<usize>,
}

impl Default for CauseConfig {
    fn default() -> Self {
        Self {
            hidden_size: 256,
            num_layers: 3,
            dropout: 0.1,
            head_hidden: 256,
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            epochs: 200,
            batch_size: 32,
            positive_weight: 1.0,
            max_speakers: None,
        }
    }
}

impl CauseConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("cause model: {m}")));
        if self.hidden_size == 0 || self.num_layers == 0 || self.head_hidden == 0 {
            return fail("hidden sizes and layer count must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 {
            return fail("learning rate must be positive and weight decay non-negative");
        }
        if self.batch_size == 0 {
            return fail("batch size must be positive");
        }
        if !(self.positive_weight > 0.0) {
            return fail("positive weight must be positive");
        }
        if self.max_speakers == Some(0) {
            return fail("max_speakers must be positive");
        }
        Ok(())
    }
}

/// Length of a candidate feature vector.
pub fn feature_dim(hidden_size: usize, max_speakers: usize) -> usize {
    2 * (2 * hidden_size) + 2 * max_speakers + EMOTION_FEATURES
}

/// One `(cause, target)` hypothesis with its feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCandidate {
    pub cause_index: usize,
    pub target_index: usize,
    pub emotion: EmotionLabel,
    pub features: Vec<f64>,
}

fn write_features(
    out: &mut [f64],
    ctx_cause: ArrayView1<'_, f64>,
    ctx_target: ArrayView1<'_, f64>,
    speakers: &SpeakerEncoding,
    cause: usize,
    target: usize,
    emotion: usize,
) {
    let c = ctx_cause.len();
    let s = speakers.dim;
    for (o, v) in out[..c].iter_mut().zip(ctx_cause) {
        *o = *v;
    }
    speakers.write_into(cause, &mut out[c..c + s]);
    for (o, v) in out[c + s..2 * c + s].iter_mut().zip(ctx_target) {
        *o = *v;
    }
    speakers.write_into(target, &mut out[2 * c + s..2 * c + 2 * s]);
    let e = &mut out[2 * c + 2 * s..];
    e.fill(0.0);
    e[emotion] = 1.0;
}

/// The `t` candidates `(1, t) … (t, t)` of emotional utterance `t`.
pub fn build_pair_candidates(
    conv: &Conversation,
    t: usize,
    emotion: EmotionLabel,
    contextual: &Array2<f64>,
    speakers: &SpeakerEncoding,
) -> Result<Vec<PairCandidate>> {
    let emo = emotion.emotion_index().ok_or_else(|| {
        Error::Contract(format!(
            "conversation {} utterance {t}: neutral utterances have no cause candidates",
            conv.id
        ))
    })?;
    if t == 0 || t > conv.len() || contextual.nrows() != conv.len() || speakers.assignments.len() != conv.len() {
        return Err(Error::Contract(format!(
            "conversation {}: target {t} or inputs do not fit its {} utterances",
            conv.id,
            conv.len()
        )));
    }
    let dim = 2 * contextual.ncols() + 2 * speakers.dim + EMOTION_FEATURES;
    Ok((1..=t)
        .map(|i| {
            let mut features = vec![0.0; dim];
            write_features(&mut features, contextual.row(i - 1), contextual.row(t - 1), speakers, i, t, emo);
            PairCandidate {
                cause_index: i,
                target_index: t,
                emotion,
                features,
            }
        })
        .collect())
}

/// BiLSTM encoder plus the pair-classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct CauseNet {
    pub lstm: StackedBiLstm,
    pub fc1: Linear,
    pub bn: BatchNorm1d,
    pub fc2: Linear,
}

impl CauseNet {
    pub fn new<R: Rng>(config: &CauseConfig, input_dim: usize, max_speakers: usize, rng: &mut R) -> Self {
        let lstm = StackedBiLstm::new(input_dim, config.hidden_size, config.num_layers, config.dropout, rng);
        let fc1 = Linear::new(feature_dim(config.hidden_size, max_speakers), config.head_hidden, rng);
        let fc2 = Linear::new(config.head_hidden, 2, rng);
        Self {
            lstm,
            fc1,
            bn: BatchNorm1d::new(config.head_hidden),
            fc2,
        }
    }

    /// Evaluation-mode logits for a feature matrix.
    fn head_eval(&self, features: &Array2<f64>) -> Array2<f64> {
        let h = self.bn.forward_eval(&self.fc1.forward(features)).mapv(|v| v.max(0.0));
        self.fc2.forward(&h)
    }
}

impl Module for CauseNet {
    fn visit_params<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ParamMut<'a>)) {
        self.lstm.visit_params(&crate::nn::join(prefix, "lstm"), f);
        self.fc1.visit_params(&crate::nn::join(prefix, "head.fc1"), f);
        self.bn.visit_params(&crate::nn::join(prefix, "head.bn"), f);
        self.fc2.visit_params(&crate::nn::join(prefix, "head.fc2"), f);
    }

    fn save_state(&self, prefix: &str, dict: &mut StateDict) {
        self.lstm.save_state(&crate::nn::join(prefix, "lstm"), dict);
        self.fc1.save_state(&crate::nn::join(prefix, "head.fc1"), dict);
        self.bn.save_state(&crate::nn::join(prefix, "head.bn"), dict);
        self.fc2.save_state(&crate::nn::join(prefix, "head.fc2"), dict);
    }

    fn load_state(&mut self, prefix: &str, dict: &StateDict) -> Result<()> {
        self.lstm.load_state(&crate::nn::join(prefix, "lstm"), dict)?;
        self.fc1.load_state(&crate::nn::join(prefix, "head.fc1"), dict)?;
        self.bn.load_state(&crate::nn::join(prefix, "head.bn"), dict)?;
        self.fc2.load_state(&crate::nn::join(prefix, "head.fc2"), dict)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveMeta {
    config: CauseConfig,
    seed: u64,
    epoch: usize,
    embedder_id: String,
    input_dim: usize,
    max_speakers: usize,
    speaker_encoding: String,
    emotion_features: Vec<EmotionLabel>,
}

/// A cause network together with everything needed to reuse it.
#[derive(Debug, Clone, PartialEq)]
pub struct CauseModel {
    pub config: CauseConfig,
    pub seed: u64,
    /// Training epochs completed when this snapshot was taken.
    pub epoch: usize,
    pub embedder_id: String,
    pub input_dim: usize,
    pub max_speakers: usize,
    pub net: CauseNet,
}

impl CauseModel {
    /// Freshly initialized model; weights depend only on `config` and `seed`.
    pub fn new(
        config: CauseConfig,
        input_dim: usize,
        max_speakers: usize,
        embedder_id: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 || max_speakers == 0 {
            return Err(Error::Config("input dimension and speaker count must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = CauseNet::new(&config, input_dim, max_speakers, &mut rng);
        Ok(Self {
            config,
            seed,
            epoch: 0,
            embedder_id: embedder_id.into(),
            input_dim,
            max_speakers,
            net,
        })
    }

    pub fn feature_dim(&self) -> usize {
        feature_dim(self.config.hidden_size, self.max_speakers)
    }

    /// Evaluation-mode BiLSTM states, one row of width `2·hidden` per utterance.
    pub fn contextualize(&self, embeddings: &Array2<f64>) -> Result<Array2<f64>> {
        if embeddings.nrows() == 0 {
            return Err(Error::Contract("cannot contextualize an empty conversation".into()));
        }
        let batch = SeqBatch::pack(&[embeddings.view()])?;
        self.net.lstm.infer(&batch)
    }

    /// Pairs predicted for `conv` given one emotion per utterance and
    /// precomputed utterance embeddings. Causes are whole utterances.
    pub fn predict_with_embeddings(
        &self,
        conv: &Conversation,
        emotions: &[EmotionLabel],
        embeddings: &Array2<f64>,
    ) -> Result<Vec<EmotionCausePair>> {
        if emotions.len() != conv.len() {
            return Err(Error::Contract(format!(
                "conversation {} has {} utterances but {} emotions were supplied",
                conv.id,
                conv.len(),
                emotions.len()
            )));
        }
        if embeddings.nrows() != conv.len() {
            return Err(Error::Contract(format!(
                "conversation {} has {} utterances but {} embeddings",
                conv.id,
                conv.len(),
                embeddings.nrows()
            )));
        }
        let (cands, logits) = self.candidate_logits(conv, emotions, embeddings)?;
        let mut pairs = Vec::new();
        for (r, &(i, t, emotion)) in cands.iter().enumerate() {
            if logits[[r, 1]] > logits[[r, 0]] {
                if let Some(span) = conv.whole_span(i) {
                    pairs.push(EmotionCausePair {
                        cause_index: i,
                        target_index: t,
                        emotion,
                        cause_span: span,
                    });
                }
            }
        }
        Ok(pairs)
    }

    /// Candidates `(cause, target, emotion)` of every emotional utterance and
    /// their evaluation-mode logits.
    pub(crate) fn candidate_logits(
        &self,
        conv: &Conversation,
        emotions: &[EmotionLabel],
        embeddings: &Array2<f64>,
    ) -> Result<(Vec<(usize, usize, EmotionLabel)>, Array2<f64>)> {
        let cands: Vec<(usize, usize, EmotionLabel)> = emotions
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.is_neutral())
            .flat_map(|(p, &e)| (1..=p + 1).map(move |i| (i, p + 1, e)))
            .collect();
        if cands.is_empty() {
            return Ok((cands, Array2::zeros((0, 2))));
        }
        let speakers = speaker_encodings(conv, self.max_speakers)?;
        let ctx = self.contextualize(embeddings)?;
        let mut features = Array2::zeros((cands.len(), self.feature_dim()));
        for (row, &(i, t, e)) in features.axis_iter_mut(Axis(0)).zip(&cands) {
            let emo = e.emotion_index().expect("neutral filtered");
            write_features(
                row.into_slice().expect("rows are contiguous"),
                ctx.row(i - 1),
                ctx.row(t - 1),
                &speakers,
                i,
                t,
                emo,
            );
        }
        Ok((cands, self.net.head_eval(&features)))
    }

    fn meta(&self) -> ArchiveMeta {
        ArchiveMeta {
            config: self.config.clone(),
            seed: self.seed,
            epoch: self.epoch,
            embedder_id: self.embedder_id.clone(),
            input_dim: self.input_dim,
            max_speakers: self.max_speakers,
            speaker_encoding: SPEAKER_SCHEME.into(),
            emotion_features: EmotionLabel::EMOTIONS.to_vec(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        checkpoint::encode(ARCHIVE_KIND, &self.meta(), &self.net.state_dict())
    }

    fn from_parts(meta: ArchiveMeta, dict: StateDict) -> Result<Self> {
        if meta.speaker_encoding != SPEAKER_SCHEME || meta.emotion_features != EmotionLabel::EMOTIONS {
            return Err(Error::Checkpoint("archive uses an unknown speaker or emotion encoding".into()));
        }
        let mut model = Self::new(meta.config, meta.input_dim, meta.max_speakers, meta.embedder_id, meta.seed)?;
        model.epoch = meta.epoch;
        model.net.load_state("", &dict)?;
        Ok(model)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (meta, dict) = checkpoint::decode(bytes, ARCHIVE_KIND)?;
        Self::from_parts(meta, dict)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, ARCHIVE_KIND, &self.meta(), &self.net.state_dict())
    }

    /// Loads an archive, refusing it when `expected_embedder` is given and
    /// differs from the embedder the model was trained on.
    pub fn load(path: &Path, expected_embedder: Option<&str>) -> Result<Self> {
        let (meta, dict): (ArchiveMeta, _) = checkpoint::load(path, ARCHIVE_KIND)?;
        if let Some(expected) = expected_embedder {
            if expected != meta.embedder_id {
                return Err(Error::Checkpoint(format!(
                    "{} was trained on embeddings from {:?}, not {expected:?}",
                    path.display(),
                    meta.embedder_id
                )));
            }
        }
        Self::from_parts(meta, dict)
    }
}

/// Embeds `conv` and predicts its pairs.
pub fn predict_causes(
    model: &CauseModel,
    conv: &Conversation,
    emotions: &[EmotionLabel],
    embedder: &dyn Embedder,
) -> Result<Vec<EmotionCausePair>> {
    if embedder.id() != model.embedder_id {
        return Err(Error::Config(format!(
            "cause model expects embeddings from {:?}, got {:?}",
            model.embedder_id,
            embedder.id()
        )));
    }
    let embeddings = embed_conversation(conv, embedder)?;
    model.predict_with_embeddings(conv, emotions, &embeddings)
}

/// Copies of `corpus` whose utterances carry `emotions` and whose pairs are
/// the model's predictions.
pub fn predict_corpus(
    model: &CauseModel,
    corpus: &[Conversation],
    emotions: &[Vec<EmotionLabel>],
    embedder: &dyn Embedder,
) -> Result<Vec<Conversation>> {
    if emotions.len() != corpus.len() {
        return Err(Error::Contract(format!(
            "{} conversations but {} emotion sequences",
            corpus.len(),
            emotions.len()
        )));
    }
    corpus
        .par_iter()
        .zip(emotions.par_iter())
        .map(|(conv, emo)| {
            let pairs = predict_causes(model, conv, emo, embedder)?;
            Ok(with_predictions(conv, emo, pairs))
        })
        .collect()
}

/// `conv` with the given emotions and pairs in place of its annotations.
pub fn with_predictions(conv: &Conversation, emotions: &[EmotionLabel], pairs: Vec<EmotionCausePair>) -> Conversation {
    let mut out = conv.clone();
    for (u, &e) in out.utterances.iter_mut().zip(emotions) {
        u.gold_emotion = Some(e);
    }
    out.gold_pairs = pairs;
    out
}
