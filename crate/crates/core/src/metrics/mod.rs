//! Shared-task scoring: emotion-cause pair F1 under strict and proportional
//! span matching, and per-class F1 for utterance emotion classification.

mod classification;
mod pairs;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use classification::{classification_f1, ClassScore, ClassificationReport};
pub use pairs::{
    keyed_pairs, match_pairs, score_conversations, score_pairs, KeyedPair, MatchMode,
    MetricReport, EmotionScore, PairMatch,
};

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub weighted: f64,
    pub macro_avg: f64,
}

/// Support-weighted and unweighted means of per-class scores.
///
/// Classes missing from `supports` carry zero weight; the macro mean runs
/// over every key of `per_class`.
pub fn weighted_average<K: Ord>(
    per_class: &BTreeMap<K, f64>,
    supports: &BTreeMap<K, usize>,
) -> Result<Averages> {
    let total: usize = per_class.keys().filter_map(|k| supports.get(k)).sum();
    if total == 0 {
        return Err(Error::Argument("weighted average over zero total support".into()));
    }
    let weighted = per_class
        .iter()
        .map(|(k, &score)| supports.get(k).copied().unwrap_or(0) as f64 * score)
        .sum::<f64>()
        / total as f64;
    let macro_avg = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok(Averages {
        weighted,
        macro_avg,
    })
}
