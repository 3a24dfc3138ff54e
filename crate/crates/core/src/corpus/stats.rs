use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{Conversation, EmotionLabel};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub dialogs: usize,
    pub utterances: usize,
    pub pairs: usize,
    /// Utterance counts per gold emotion; every label is present.
    pub utterances_per_emotion: BTreeMap<EmotionLabel, usize>,
    pub unlabelled_utterances: usize,
    pub emotional_utterances: usize,
    pub emotional_with_cause: usize,
    /// Share of non-neutral utterances that are the target of at least one gold pair.
    pub emotional_with_cause_fraction: Option<f64>,
    pub cause_utterances: usize,
    pub multi_emotion_causes: usize,
    /// Share of cause utterances linked to two or more distinct emotions.
    pub multi_emotion_cause_fraction: Option<f64>,
    pub max_speakers: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn corpus_stats(corpus: &[Conversation]) -> StatsReport {
    let mut report = StatsReport {
        utterances_per_emotion: EmotionLabel::ALL.iter().map(|&e| (e, 0)).collect(),
        ..StatsReport::default()
    };
    report.dialogs = corpus.len();
    for conv in corpus {
        report.utterances += conv.len();
        report.pairs += conv.gold_pairs.len();
        report.max_speakers = report
            .max_speakers
            .max(conv.utterances.iter().map(|u| &u.speaker).collect::<BTreeSet<_>>().len());

        let targets: BTreeSet<usize> = conv.gold_pairs.iter().map(|p| p.target_index).collect();
        for utt in &conv.utterances {
            match utt.gold_emotion {
                Some(label) => {
                    *report.utterances_per_emotion.entry(label).or_default() += 1;
                    if !label.is_neutral() {
                        report.emotional_utterances += 1;
                        if targets.contains(&utt.index) {
                            report.emotional_with_cause += 1;
                        }
                    }
                }
                None => report.unlabelled_utterances += 1,
            }
        }

        let mut emotions_by_cause: HashMap<usize, BTreeSet<EmotionLabel>> = HashMap::new();
        for pair in &conv.gold_pairs {
            emotions_by_cause
                .entry(pair.cause_index)
                .or_default()
                .insert(pair.emotion);
        }
        report.cause_utterances += emotions_by_cause.len();
        report.multi_emotion_causes += emotions_by_cause.values().filter(|s| s.len() > 1).count();
    }
    report.emotional_with_cause_fraction =
        ratio(report.emotional_with_cause, report.emotional_utterances);
    report.multi_emotion_cause_fraction =
        ratio(report.multi_emotion_causes, report.cause_utterances);
    report
}
