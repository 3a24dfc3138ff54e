use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{f1, weighted_average};
use crate::corpus::{CharSpan, Conversation, EmotionCausePair, EmotionLabel};
use crate::error::{Error, Result};

/// A pair together with the conversation it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KeyedPair {
    pub conversation: String,
    pub pair: EmotionCausePair,
}

impl KeyedPair {
    pub fn new(conversation: impl Into<String>, pair: EmotionCausePair) -> Self {
        Self {
            conversation: conversation.into(),
            pair,
        }
    }

    fn key(&self) -> (&str, usize, EmotionLabel, usize) {
        (
            &self.conversation,
            self.pair.target_index,
            self.pair.emotion,
            self.pair.cause_index,
        )
    }
}

/// All gold pairs of a corpus, keyed by conversation.
pub fn keyed_pairs(corpus: &[Conversation]) -> Vec<KeyedPair> {
    corpus
        .iter()
        .flat_map(|c| c.gold_pairs.iter().map(move |p| KeyedPair::new(c.id.clone(), *p)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Cause spans must be identical.
    Strict,
    /// Partial credit by character overlap.
    Proportional,
}

/// A predicted pair matched to a gold pair with equal
/// `(conversation, target, emotion, cause)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMatch {
    pub predicted: KeyedPair,
    pub gold: KeyedPair,
    pub overlap_chars: usize,
    pub exact_span: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionScore {
    pub emotion: EmotionLabel,
    pub predicted: usize,
    /// Number of gold pairs with this emotion.
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mode: MatchMode,
    pub per_emotion: Vec<EmotionScore>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub macro_f1: f64,
}

impl MetricReport {
    pub fn emotion(&self, emotion: EmotionLabel) -> Option<&EmotionScore> {
        self.per_emotion.iter().find(|s| s.emotion == emotion)
    }

    /// Plain-text table with one row per emotion and the averages.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "mode: {:?}\n{:<10} {:>6} {:>6} {:>9} {:>9} {:>9}\n",
            self.mode, "emotion", "pred", "gold", "precision", "recall", "f1"
        );
        for s in &self.per_emotion {
            out.push_str(&format!(
                "{:<10} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}\n",
                s.emotion.as_str(),
                s.predicted,
                s.support,
                s.precision,
                s.recall,
                s.f1
            ));
        }
        out.push_str(&format!(
            "{:<10} {:>6} {:>6} {:>9.4} {:>9.4} {:>9.4}\n",
            "w-avg", "", "", self.weighted_precision, self.weighted_recall, self.weighted_f1
        ));
        out.push_str(&format!("{:<10} {:>6} {:>6} {:>9} {:>9} {:>9.4}\n", "macro", "", "", "", "", self.macro_f1));
        out
    }
}

fn check_span(p: &KeyedPair) -> Result<()> {
    if p.pair.cause_span.start >= p.pair.cause_span.end {
        return Err(Error::Data(format!(
            "conversation {}: pair ({}, {}) has an empty or inverted span [{}, {})",
            p.conversation,
            p.pair.cause_index,
            p.pair.target_index,
            p.pair.cause_span.start,
            p.pair.cause_span.end
        )));
    }
    Ok(())
}

fn dedup(pairs: &[KeyedPair]) -> Result<Vec<KeyedPair>> {
    for p in pairs {
        check_span(p)?;
    }
    Ok(pairs.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect())
}

/// Greedy one-to-one matching between predictions and gold pairs.
///
/// Candidate edges join a prediction and a gold pair with the same key and
/// positive span overlap. Edges are taken in order of decreasing overlap,
/// exact spans first among ties, then by the sorted position of the
/// prediction and the gold pair; an edge is kept when both ends are free.
/// Duplicate pairs are collapsed first.
pub fn match_pairs(pred: &[KeyedPair], gold: &[KeyedPair]) -> Result<Vec<PairMatch>> {
    let pred = dedup(pred)?;
    let gold = dedup(gold)?;
    Ok(greedy(&pred, &gold)
        .into_iter()
        .map(|(pi, gi, overlap)| PairMatch {
            predicted: pred[pi].clone(),
            gold: gold[gi].clone(),
            overlap_chars: overlap,
            exact_span: pred[pi].pair.cause_span == gold[gi].pair.cause_span,
        })
        .collect())
}

fn greedy(pred: &[KeyedPair], gold: &[KeyedPair]) -> Vec<(usize, usize, usize)> {
    let mut gold_by_key: HashMap<_, Vec<usize>> = HashMap::new();
    for (gi, g) in gold.iter().enumerate() {
        gold_by_key.entry(g.key()).or_default().push(gi);
    }
    let mut edges = Vec::new();
    for (pi, p) in pred.iter().enumerate() {
        for &gi in gold_by_key.get(&p.key()).into_iter().flatten() {
            let ps: CharSpan = p.pair.cause_span;
            let gs = gold[gi].pair.cause_span;
            let overlap = ps.overlap(&gs);
            if overlap > 0 {
                edges.push((overlap, ps == gs, pi, gi));
            }
        }
    }
    edges.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3)));
    let mut pred_used = vec![false; pred.len()];
    let mut gold_used = vec![false; gold.len()];
    let mut matches = Vec::new();
    for (overlap, _, pi, gi) in edges {
        if !pred_used[pi] && !gold_used[gi] {
            pred_used[pi] = true;
            gold_used[gi] = true;
            matches.push((pi, gi, overlap));
        }
    }
    matches
}

/// Scores predictions against gold pairs per emotion.
///
/// Strict mode credits a match only when spans are identical. Proportional
/// mode credits `overlap / |predicted span|` towards precision and
/// `overlap / |gold span|` towards recall. Emotions are averaged with
/// weights equal to their gold support.
pub fn score_pairs(pred: &[KeyedPair], gold: &[KeyedPair], mode: MatchMode) -> Result<MetricReport> {
    let pred = dedup(pred)?;
    let gold = dedup(gold)?;
    let matches = greedy(&pred, &gold);

    let mut n_pred = [0usize; 6];
    let mut n_gold = [0usize; 6];
    let mut p_credit = [0f64; 6];
    let mut r_credit = [0f64; 6];
    let slot = |p: &KeyedPair| -> Result<usize> {
        p.pair.emotion.emotion_index().ok_or_else(|| {
            Error::Data(format!(
                "conversation {}: pair ({}, {}) is labelled neutral",
                p.conversation, p.pair.cause_index, p.pair.target_index
            ))
        })
    };
    for p in &pred {
        n_pred[slot(p)?] += 1;
    }
    for g in &gold {
        n_gold[slot(g)?] += 1;
    }
    for (pi, gi, overlap) in matches {
        let (p, g) = (&pred[pi], &gold[gi]);
        let e = slot(p)?;
        match mode {
            MatchMode::Strict => {
                if p.pair.cause_span == g.pair.cause_span {
                    p_credit[e] += 1.0;
                    r_credit[e] += 1.0;
                }
            }
            MatchMode::Proportional => {
                p_credit[e] += overlap as f64 / p.pair.cause_span.len() as f64;
                r_credit[e] += overlap as f64 / g.pair.cause_span.len() as f64;
            }
        }
    }

    let per_emotion: Vec<EmotionScore> = EmotionLabel::EMOTIONS
        .iter()
        .enumerate()
        .map(|(e, &emotion)| {
            let precision = if n_pred[e] > 0 { p_credit[e] / n_pred[e] as f64 } else { 0.0 };
            let recall = if n_gold[e] > 0 { r_credit[e] / n_gold[e] as f64 } else { 0.0 };
            EmotionScore {
                emotion,
                predicted: n_pred[e],
                support: n_gold[e],
                precision,
                recall,
                f1: f1(precision, recall),
            }
        })
        .collect();

    let supports: BTreeMap<EmotionLabel, usize> =
        per_emotion.iter().map(|s| (s.emotion, s.support)).collect();
    let column = |f: fn(&EmotionScore) -> f64| -> BTreeMap<EmotionLabel, f64> {
        per_emotion.iter().map(|s| (s.emotion, f(s))).collect()
    };
    let f1s = column(|s| s.f1);
    let macro_f1 = f1s.values().sum::<f64>() / f1s.len() as f64;
    let (weighted_precision, weighted_recall, weighted_f1) = if gold.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        (
            weighted_average(&column(|s| s.precision), &supports)?.weighted,
            weighted_average(&column(|s| s.recall), &supports)?.weighted,
            weighted_average(&f1s, &supports)?.weighted,
        )
    };
    Ok(MetricReport {
        mode,
        per_emotion,
        weighted_precision,
        weighted_recall,
        weighted_f1,
        macro_f1,
    })
}

/// Scores the pairs attached to `pred` against those of `gold`, checking
/// every span against the gold utterance texts.
pub fn score_conversations(
    pred: &[Conversation],
    gold: &[Conversation],
    mode: MatchMode,
) -> Result<MetricReport> {
    let by_id: HashMap<&str, &Conversation> = gold.iter().map(|c| (c.id.as_str(), c)).collect();
    for conv in pred {
        let reference = by_id.get(conv.id.as_str()).ok_or_else(|| {
            Error::Data(format!("predicted conversation {} is not in the gold corpus", conv.id))
        })?;
        for pair in &conv.gold_pairs {
            reference.check_pair(pair)?;
        }
    }
    for conv in gold {
        conv.check_structure()?;
    }
    score_pairs(&keyed_pairs(pred), &keyed_pairs(gold), mode)
}
