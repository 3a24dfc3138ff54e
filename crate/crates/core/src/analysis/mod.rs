//! Diagnostics: emotion confusion, cause quality per emotion on correctly
//! classified targets, and cause quality by emotion-to-cause distance.

mod plot;
mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Conversation, EmotionLabel};
use crate::error::{Error, Result};
use crate::metrics::{f1, score_pairs, KeyedPair, MatchMode, MetricReport};

pub use report::{render_report, ReportBundle, ReportFiles};

/// Rows are gold labels, columns predicted labels, both in
/// [`EmotionLabel::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<EmotionLabel>,
    pub counts: Vec<Vec<usize>>,
    /// Each row divided by its sum; all-zero rows stay zero.
    pub row_normalized: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn count(&self, gold: EmotionLabel, pred: EmotionLabel) -> usize {
        self.counts[gold.index()][pred.index()]
    }
}

pub fn confusion(pred: &[EmotionLabel], gold: &[EmotionLabel]) -> Result<ConfusionMatrix> {
    if pred.len() != gold.len() {
        return Err(Error::Argument(format!(
            "{} predicted labels for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    let n = EmotionLabel::ALL.len();
    let mut counts = vec![vec![0usize; n]; n];
    for (p, g) in pred.iter().zip(gold) {
        counts[g.index()][p.index()] += 1;
    }
    let row_normalized = counts
        .iter()
        .map(|row| {
            let sum: usize = row.iter().sum();
            row.iter()
                .map(|&c| if sum == 0 { 0.0 } else { c as f64 / sum as f64 })
                .collect()
        })
        .collect();
    Ok(ConfusionMatrix {
        labels: EmotionLabel::ALL.to_vec(),
        counts,
        row_normalized,
    })
}

/// Emotion of every utterance, keyed by `(conversation id, 1-based index)`.
pub type LabelMap = HashMap<(String, usize), EmotionLabel>;

/// Labels carried by the utterances of `corpus`; unlabelled utterances are skipped.
pub fn label_map(corpus: &[Conversation]) -> LabelMap {
    corpus
        .iter()
        .flat_map(|c| {
            c.utterances
                .iter()
                .filter_map(move |u| u.gold_emotion.map(|e| ((c.id.clone(), u.index), e)))
        })
        .collect()
}

/// Targets whose predicted emotion equals a non-neutral gold emotion.
pub fn correctly_classified_targets(pred_labels: &LabelMap, gold_labels: &LabelMap) -> BTreeSet<(String, usize)> {
    gold_labels
        .iter()
        .filter(|(k, g)| !g.is_neutral() && pred_labels.get(*k) == Some(*g))
        .map(|(k, _)| k.clone())
        .collect()
}

/// Pairs whose target is in `targets`.
pub fn restrict_to_targets(pairs: &[KeyedPair], targets: &BTreeSet<(String, usize)>) -> Vec<KeyedPair> {
    pairs
        .iter()
        .filter(|p| targets.contains(&(p.conversation.clone(), p.pair.target_index)))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseByEmotion {
    /// Targets with a correctly predicted non-neutral emotion.
    pub qualifying_targets: usize,
    /// Proportional scores; `None` when no target qualifies.
    pub report: Option<MetricReport>,
}

/// Proportional pair scores restricted to targets whose emotion was
/// classified correctly.
pub fn cause_scores_by_emotion(
    pred_pairs: &[KeyedPair],
    gold_pairs: &[KeyedPair],
    pred_labels: &LabelMap,
    gold_labels: &LabelMap,
) -> Result<CauseByEmotion> {
    let targets = correctly_classified_targets(pred_labels, gold_labels);
    if targets.is_empty() {
        return Ok(CauseByEmotion {
            qualifying_targets: 0,
            report: None,
        });
    }
    let pred = restrict_to_targets(pred_pairs, &targets);
    let gold = restrict_to_targets(gold_pairs, &targets);
    Ok(CauseByEmotion {
        qualifying_targets: targets.len(),
        report: Some(score_pairs(&pred, &gold, MatchMode::Proportional)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceBucket {
    /// `target − cause`; negative for causes after the emotion.
    pub distance: i64,
    pub gold: usize,
    pub predicted: usize,
    /// Predicted pairs with identical conversation, cause, target and emotion
    /// to a gold pair.
    pub correct: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceProfile {
    /// One bucket per observed distance, ascending.
    pub buckets: Vec<DistanceBucket>,
}

impl DistanceProfile {
    pub fn bucket(&self, distance: i64) -> Option<&DistanceBucket> {
        self.buckets.iter().find(|b| b.distance == distance)
    }

    /// Distance with the most gold pairs (the smallest one on ties).
    pub fn gold_mode(&self) -> Option<i64> {
        self.buckets
            .iter()
            .filter(|b| b.gold > 0)
            .max_by(|a, b| a.gold.cmp(&b.gold).then(b.distance.cmp(&a.distance)))
            .map(|b| b.distance)
    }
}

type PairKey = (String, usize, usize, EmotionLabel);

fn utterance_keys(pairs: &[KeyedPair]) -> Result<BTreeSet<PairKey>> {
    pairs
        .iter()
        .map(|p| {
            if p.pair.cause_index == 0 || p.pair.target_index == 0 {
                return Err(Error::Argument(format!(
                    "conversation {}: utterance indices are 1-based",
                    p.conversation
                )));
            }
            Ok((p.conversation.clone(), p.pair.cause_index, p.pair.target_index, p.pair.emotion))
        })
        .collect()
}

/// Per-distance counts at utterance level; spans are ignored and duplicate
/// pairs count once.
pub fn distance_profile(pred_pairs: &[KeyedPair], gold_pairs: &[KeyedPair]) -> Result<DistanceProfile> {
    let pred = utterance_keys(pred_pairs)?;
    let gold = utterance_keys(gold_pairs)?;
    let distance = |k: &PairKey| k.2 as i64 - k.1 as i64;
    let mut table: BTreeMap<i64, (usize, usize, usize)> = BTreeMap::new();
    for k in &gold {
        table.entry(distance(k)).or_default().0 += 1;
    }
    for k in &pred {
        let e = table.entry(distance(k)).or_default();
        e.1 += 1;
        if gold.contains(k) {
            e.2 += 1;
        }
    }
    let buckets = table
        .into_iter()
        .map(|(d, (g, p, c))| {
            let precision = if p == 0 { 0.0 } else { c as f64 / p as f64 };
            let recall = if g == 0 { 0.0 } else { c as f64 / g as f64 };
            DistanceBucket {
                distance: d,
                gold: g,
                predicted: p,
                correct: c,
                precision,
                recall,
                f1: f1(precision, recall),
            }
        })
        .collect();
    Ok(DistanceProfile { buckets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CharSpan, EmotionCausePair};
    use EmotionLabel::*;

    fn kp(conv: &str, cause: usize, target: usize, emotion: EmotionLabel, span: (usize, usize)) -> KeyedPair {
        KeyedPair::new(
            conv,
            EmotionCausePair {
                cause_index: cause,
                target_index: target,
                emotion,
                cause_span: CharSpan::new(span.0, span.1),
            },
        )
    }

    fn labels(entries: &[(&str, usize, EmotionLabel)]) -> LabelMap {
        entries.iter().map(|&(c, i, e)| ((c.to_string(), i), e)).collect()
    }

    #[test]
    fn confusion_counts() {
        let m = confusion(&[Joy, Joy], &[Neutral, Joy]).unwrap();
        assert_eq!(m.count(Neutral, Joy), 1);
        assert_eq!(m.count(Joy, Joy), 1);
        assert_eq!(m.total(), 2);
        assert_eq!(m.row_normalized[Neutral.index()][Joy.index()], 1.0);
        assert!(confusion(&[Joy], &[]).is_err());
        let same = confusion(&EmotionLabel::ALL, &EmotionLabel::ALL).unwrap();
        for (r, row) in same.counts.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                assert_eq!(v, usize::from(r == c));
            }
        }
    }

    #[test]
    fn distance_profile_basic() {
        let gold = vec![kp("a", 1, 1, Joy, (0, 3)), kp("a", 1, 2, Joy, (0, 3)), kp("a", 3, 2, Joy, (0, 2))];
        let p = distance_profile(&gold, &gold).unwrap();
        assert_eq!(p.bucket(0).unwrap().correct, 1);
        assert_eq!(p.bucket(1).unwrap().gold, 1);
        assert_eq!(p.bucket(-1).unwrap().gold, 1);
        let model_like = vec![kp("a", 1, 1, Joy, (0, 9)), kp("a", 1, 2, Sadness, (0, 3))];
        let p = distance_profile(&model_like, &gold).unwrap();
        assert_eq!(p.bucket(0).unwrap().correct, 1, "spans are ignored");
        assert_eq!(p.bucket(1).unwrap().correct, 0, "emotion must match");
        assert_eq!(p.bucket(-1).unwrap().correct, 0);
        assert!(distance_profile(&[kp("a", 0, 1, Joy, (0, 1))], &[]).is_err());
    }

    #[test]
    fn gold_mode_prefers_smallest_on_tie() {
        let gold = vec![kp("a", 1, 1, Joy, (0, 1)), kp("a", 1, 2, Joy, (0, 1))];
        assert_eq!(distance_profile(&[], &gold).unwrap().gold_mode(), Some(0));
        assert_eq!(distance_profile(&[], &[]).unwrap().gold_mode(), None);
    }

    #[test]
    fn cause_by_emotion_filters() {
        let gold_pairs = vec![kp("a", 1, 2, Joy, (0, 4)), kp("a", 3, 3, Anger, (0, 4))];
        let gold_labels = labels(&[("a", 1, Neutral), ("a", 2, Joy), ("a", 3, Anger)]);
        let wrong = labels(&[("a", 1, Neutral), ("a", 2, Anger), ("a", 3, Joy)]);
        let r = cause_scores_by_emotion(&gold_pairs, &gold_pairs, &wrong, &gold_labels).unwrap();
        assert_eq!(r, CauseByEmotion { qualifying_targets: 0, report: None });
        let r = cause_scores_by_emotion(&gold_pairs, &gold_pairs, &gold_labels, &gold_labels).unwrap();
        let report = r.report.unwrap();
        assert_eq!(r.qualifying_targets, 2);
        assert_eq!(report.emotion(Joy).unwrap().f1, 1.0);
        assert_eq!(report.emotion(Anger).unwrap().f1, 1.0);
    }
}
