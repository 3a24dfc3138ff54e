use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{f1, weighted_average};
use crate::corpus::EmotionLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub label: EmotionLabel,
    pub predicted: usize,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassScore>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
}

impl ClassificationReport {
    pub fn class(&self, label: EmotionLabel) -> &ClassScore {
        &self.per_class[label.index()]
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>7} {:>7} {:>9} {:>9} {:>9}\n",
            "label", "pred", "gold", "precision", "recall", "f1"
        );
        for s in &self.per_class {
            out.push_str(&format!(
                "{:<10} {:>7} {:>7} {:>9.4} {:>9.4} {:>9.4}\n",
                s.label.as_str(),
                s.predicted,
                s.support,
                s.precision,
                s.recall,
                s.f1
            ));
        }
        out.push_str(&format!("macro f1 {:.4}  w-avg f1 {:.4}  accuracy {:.4}\n", self.macro_f1, self.weighted_f1, self.accuracy));
        out
    }
}

/// One-vs-rest precision, recall and F1 over the seven labels, with macro and
/// gold-support-weighted averages.
pub fn classification_f1(pred: &[EmotionLabel], gold: &[EmotionLabel]) -> Result<ClassificationReport> {
    if pred.len() != gold.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    let mut tp = [0usize; 7];
    let mut n_pred = [0usize; 7];
    let mut n_gold = [0usize; 7];
    for (&p, &g) in pred.iter().zip(gold) {
        n_pred[p.index()] += 1;
        n_gold[g.index()] += 1;
        if p == g {
            tp[p.index()] += 1;
        }
    }
    let per_class: Vec<ClassScore> = EmotionLabel::ALL
        .iter()
        .map(|&label| {
            let i = label.index();
            let precision = if n_pred[i] > 0 { tp[i] as f64 / n_pred[i] as f64 } else { 0.0 };
            let recall = if n_gold[i] > 0 { tp[i] as f64 / n_gold[i] as f64 } else { 0.0 };
            ClassScore {
                label,
                predicted: n_pred[i],
                support: n_gold[i],
                precision,
                recall,
                f1: f1(precision, recall),
            }
        })
        .collect();
    let scores: BTreeMap<EmotionLabel, f64> = per_class.iter().map(|s| (s.label, s.f1)).collect();
    let supports: BTreeMap<EmotionLabel, usize> = per_class.iter().map(|s| (s.label, s.support)).collect();
    let macro_f1 = scores.values().sum::<f64>() / 7.0;
    let weighted_f1 = if gold.is_empty() {
        0.0
    } else {
        weighted_average(&scores, &supports)?.weighted
    };
    let accuracy = if gold.is_empty() {
        0.0
    } else {
        tp.iter().sum::<usize>() as f64 / gold.len() as f64
    };
    Ok(ClassificationReport {
        per_class,
        macro_f1,
        weighted_f1,
        accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use EmotionLabel::*;

    #[test]
    fn perfect_predictions() {
        let gold = vec![Neutral, Joy, Anger, Surprise];
        let r = classification_f1(&gold, &gold).unwrap();
        for s in &r.per_class {
            if s.support > 0 {
                assert_eq!(s.f1, 1.0);
            }
        }
        assert_eq!(r.weighted_f1, 1.0);
    }

    #[test]
    fn always_neutral_on_half_neutral_gold() {
        let gold = vec![Neutral, Neutral, Joy, Sadness];
        let pred = vec![Neutral; 4];
        let r = classification_f1(&pred, &gold).unwrap();
        approx::assert_abs_diff_eq!(r.class(Neutral).f1, 2.0 / 3.0, epsilon = 1e-12);
        for label in EmotionLabel::EMOTIONS {
            assert_eq!(r.class(label).f1, 0.0);
        }
        approx::assert_abs_diff_eq!(r.weighted_f1, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(classification_f1(&[Joy], &[]), Err(Error::Argument(_))));
    }
}
