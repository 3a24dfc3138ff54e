use std::collections::HashSet;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_features, CauseConfig, CauseModel, CauseNet};
use crate::corpus::{max_distinct_speakers, speaker_encodings, Conversation, EmotionLabel, SpeakerEncoding};
use crate::embed::{embed_corpus, Embedder};
use crate::error::{Error, Result};
use crate::metrics::{keyed_pairs, score_pairs, KeyedPair, MatchMode};
use crate::nn::{softmax_rows, weighted_cross_entropy, Adam, AdamConfig, Module, SeqBatch};

/// Conversations with one embedding row per utterance.
#[derive(Debug, Clone)]
pub struct EmbeddedDialogs<'a> {
    pub conversations: &'a [Conversation],
    pub embeddings: Vec<Array2<f64>>,
    pub embedder_id: String,
}

impl<'a> EmbeddedDialogs<'a> {
    pub fn new(conversations: &'a [Conversation], embedder: &dyn Embedder) -> Result<Self> {
        Ok(Self {
            conversations,
            embeddings: embed_corpus(conversations, embedder)?,
            embedder_id: embedder.id().to_string(),
        })
    }

    pub fn from_parts(
        conversations: &'a [Conversation],
        embeddings: Vec<Array2<f64>>,
        embedder_id: impl Into<String>,
    ) -> Result<Self> {
        if embeddings.len() != conversations.len() {
            return Err(Error::Contract(format!(
                "{} conversations but {} embedding matrices",
                conversations.len(),
                embeddings.len()
            )));
        }
        for (c, e) in conversations.iter().zip(&embeddings) {
            if e.nrows() != c.len() {
                return Err(Error::Contract(format!(
                    "conversation {} has {} utterances but {} embeddings",
                    c.id,
                    c.len(),
                    e.nrows()
                )));
            }
        }
        Ok(Self {
            conversations,
            embeddings,
            embedder_id: embedder_id.into(),
        })
    }

    fn dim(&self) -> Option<usize> {
        self.embeddings.first().map(|e| e.ncols())
    }
}

/// A training candidate and whether a gold pair links it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelledCandidate {
    pub cause_index: usize,
    pub target_index: usize,
    pub emotion: EmotionLabel,
    pub causal: bool,
}

/// Candidates of every gold-emotional utterance, labelled causal iff a gold
/// pair `(cause, target)` exists.
pub fn labelled_candidates(conv: &Conversation) -> Result<Vec<LabelledCandidate>> {
    let emotions = conv.gold_emotions()?;
    let positives: HashSet<(usize, usize)> =
        conv.gold_pairs.iter().map(|p| (p.cause_index, p.target_index)).collect();
    let mut out = Vec::new();
    for (p, &emotion) in emotions.iter().enumerate() {
        if emotion.is_neutral() {
            continue;
        }
        let t = p + 1;
        out.extend((1..=t).map(|i| LabelledCandidate {
            cause_index: i,
            target_index: t,
            emotion,
            causal: positives.contains(&(i, t)),
        }));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean weighted cross-entropy over the epoch's training candidates.
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
    /// Weighted proportional pair F1 on the dev set with gold emotions.
    pub dev_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedCause {
    pub final_model: CauseModel,
    /// Snapshot with the highest dev F1; the final model when there is no dev set.
    pub best_model: CauseModel,
    pub history: Vec<EpochLog>,
}

struct Prepared {
    dialog: usize,
    speakers: SpeakerEncoding,
    candidates: Vec<LabelledCandidate>,
}

/// Feature matrix, class targets and the context rows of the cause and target
/// of every candidate in the batch.
fn build_batch(
    net: &CauseNet,
    ctx: &Array2<f64>,
    seq: &SeqBatch,
    items: &[&Prepared],
) -> (Array2<f64>, Vec<usize>, Vec<(usize, usize)>) {
    let n: usize = items.iter().map(|p| p.candidates.len()).sum();
    let mut features = Array2::zeros((n, net.fc1.in_dim()));
    let mut targets = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    let mut r = 0;
    for (b, item) in items.iter().enumerate() {
        for c in &item.candidates {
            let ri = seq.row(b, c.cause_index - 1);
            let rt = seq.row(b, c.target_index - 1);
            write_features(
                features.row_mut(r).into_slice().expect("rows are contiguous"),
                ctx.row(ri),
                ctx.row(rt),
                &item.speakers,
                c.cause_index,
                c.target_index,
                c.emotion.emotion_index().expect("candidates have emotional targets"),
            );
            targets.push(usize::from(c.causal));
            rows.push((ri, rt));
            r += 1;
        }
    }
    (features, targets, rows)
}

/// Training-mode loss of one batch; accumulates gradients when `backward`.
fn batch_loss<R: Rng>(
    net: &mut CauseNet,
    dialogs: &EmbeddedDialogs<'_>,
    items: &[&Prepared],
    class_weights: &[f64; 2],
    rng: &mut R,
    backward: bool,
) -> Result<(f64, usize)> {
    let views: Vec<_> = items.iter().map(|p| dialogs.embeddings[p.dialog].view()).collect();
    let seq = SeqBatch::pack(&views)?;
    let (ctx, cache) = net.lstm.forward_train(&seq, rng)?;
    let (features, targets, rows) = build_batch(net, &ctx, &seq, items);
    let h1 = net.fc1.forward(&features);
    let (h2, bn_cache) = net.bn.forward_train(&h1);
    let a = h2.mapv(|v| v.max(0.0));
    let logits = net.fc2.forward(&a);
    let (loss, d_logits) = weighted_cross_entropy(&logits, &targets, class_weights);
    if backward {
        let mut da = net.fc2.backward(&a, &d_logits);
        da.zip_mut_with(&h2, |g, &h| {
            if h <= 0.0 {
                *g = 0.0
            }
        });
        let dh1 = net.bn.backward(&bn_cache, &da);
        let d_features = net.fc1.backward(&features, &dh1);
        let c = ctx.ncols();
        let s = (net.fc1.in_dim() - 2 * c - super::EMOTION_FEATURES) / 2;
        let mut d_ctx = Array2::zeros(ctx.raw_dim());
        for (m, &(ri, rt)) in rows.iter().enumerate() {
            let g = d_features.row(m);
            {
                let mut row = d_ctx.row_mut(ri);
                row += &g.slice(s![..c]);
            }
            let mut row = d_ctx.row_mut(rt);
            row += &g.slice(s![c + s..2 * c + s]);
        }
        net.lstm.backward(&cache, &d_ctx);
    }
    Ok((loss, targets.len()))
}

fn prepare(dialogs: &EmbeddedDialogs<'_>, max_speakers: usize) -> Result<Vec<Prepared>> {
    let mut out = Vec::new();
    for (d, conv) in dialogs.conversations.iter().enumerate() {
        let candidates = labelled_candidates(conv)?;
        if candidates.is_empty() {
            continue;
        }
        out.push(Prepared {
            dialog: d,
            speakers: speaker_encodings(conv, max_speakers)?,
            candidates,
        });
    }
    Ok(out)
}

/// Dev loss and weighted proportional pair F1 with gold emotions.
fn evaluate(model: &CauseModel, dev: &EmbeddedDialogs<'_>, class_weights: &[f64; 2]) -> Result<(f64, f64)> {
    let per_dialog: Vec<(f64, f64, Vec<KeyedPair>)> = dev
        .conversations
        .par_iter()
        .zip(dev.embeddings.par_iter())
        .map(|(conv, emb)| {
            let emotions = conv.gold_emotions()?;
            let (cands, logits) = model.candidate_logits(conv, &emotions, emb)?;
            let positives: HashSet<(usize, usize)> =
                conv.gold_pairs.iter().map(|p| (p.cause_index, p.target_index)).collect();
            let probs = softmax_rows(&logits);
            let (mut loss, mut weight) = (0.0, 0.0);
            for (r, &(i, t, _)) in cands.iter().enumerate() {
                let y = usize::from(positives.contains(&(i, t)));
                loss -= class_weights[y] * probs[[r, y]].max(f64::MIN_POSITIVE).ln();
                weight += class_weights[y];
            }
            let pairs = model.predict_with_embeddings(conv, &emotions, emb)?;
            Ok((loss, weight, pairs.into_iter().map(|p| KeyedPair::new(conv.id.clone(), p)).collect()))
        })
        .collect::<Result<_>>()?;
    let loss: f64 = per_dialog.iter().map(|x| x.0).sum();
    let weight: f64 = per_dialog.iter().map(|x| x.1).sum();
    let pred: Vec<KeyedPair> = per_dialog.into_iter().flat_map(|x| x.2).collect();
    let report = score_pairs(&pred, &keyed_pairs(dev.conversations), MatchMode::Proportional)?;
    Ok((if weight > 0.0 { loss / weight } else { 0.0 }, report.weighted_f1))
}

/// Trains a cause model with Adam on shuffled batches of dialogs.
///
/// Dropout masks, batch order and initial weights all derive from `seed`.
/// When `dev` is given, the snapshot with the best dev F1 is kept as well.
pub fn train_cause_model(
    train: &EmbeddedDialogs<'_>,
    dev: Option<&EmbeddedDialogs<'_>>,
    config: &CauseConfig,
    seed: u64,
) -> Result<TrainedCause> {
    config.validate()?;
    let input_dim = train
        .dim()
        .ok_or_else(|| Error::Argument("cause model needs at least one training conversation".into()))?;
    if let Some(dev) = dev {
        if dev.embedder_id != train.embedder_id || dev.dim().is_some_and(|d| d != input_dim) {
            return Err(Error::Config("training and dev embeddings come from different encoders".into()));
        }
    }
    let max_speakers = match config.max_speakers {
        Some(m) => m,
        None => max_distinct_speakers(train.conversations)
            .max(dev.map_or(0, |d| max_distinct_speakers(d.conversations)))
            .max(1),
    };
    let items = prepare(train, max_speakers)?;
    let positives = items
        .iter()
        .flat_map(|p| &p.candidates)
        .filter(|c| c.causal)
        .count();
    if positives == 0 {
        return Err(Error::Data("no training candidate is linked by a gold pair".into()));
    }
    if let Some(dev) = dev {
        prepare(dev, max_speakers)?;
    }

    let mut config = config.clone();
    config.max_speakers = Some(max_speakers);
    let mut model = CauseModel::new(config.clone(), input_dim, max_speakers, train.embedder_id.clone(), seed)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed);
    order_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed);
    dropout_rng.set_stream(2);
    let mut adam = Adam::new(AdamConfig {
        lr: config.learning_rate,
        weight_decay: config.weight_decay,
        ..AdamConfig::default()
    });
    let class_weights = [1.0, config.positive_weight];

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, CauseModel)> = None;
    let mut order: Vec<usize> = (0..items.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        let (mut total, mut count) = (0.0, 0);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&k| &items[k]).collect();
            model.net.zero_grad();
            let (loss, n) = batch_loss(&mut model.net, train, &batch, &class_weights, &mut dropout_rng, true)?;
            adam.step(&mut model.net);
            total += loss * n as f64;
            count += n;
        }
        model.epoch = epoch;
        let train_loss = total / count as f64;
        let (dev_loss, dev_f1) = match dev {
            Some(d) => {
                let (l, f) = evaluate(&model, d, &class_weights)?;
                (Some(l), Some(f))
            }
            None => (None, None),
        };
        log::info!(
            "epoch {epoch}/{}: train loss {train_loss:.4}{}",
            config.epochs,
            match (dev_loss, dev_f1) {
                (Some(l), Some(f)) => format!(", dev loss {l:.4}, dev F1 {f:.4}"),
                _ => String::new(),
            }
        );
        history.push(EpochLog {
            epoch,
            train_loss,
            dev_loss,
            dev_f1,
        });
        if let Some(f) = dev_f1 {
            if best.as_ref().is_none_or(|(b, _)| f > *b) {
                best = Some((f, model.clone()));
            }
        }
    }
    let best_model = best.map_or_else(|| model.clone(), |(_, m)| m);
    Ok(TrainedCause {
        final_model: model,
        best_model,
        history,
    })
}
