use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::load::span_text;
use super::{Conversation, EmotionLabel};

/// Annotation irregularities that are reported rather than repaired.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ValidationIssue {
    EmptyText {
        conversation: String,
        utterance: usize,
    },
    /// A gold pair's emotion differs from its target's gold emotion.
    EmotionMismatch {
        conversation: String,
        cause: usize,
        target: usize,
        pair_emotion: EmotionLabel,
        target_emotion: Option<EmotionLabel>,
    },
    /// The annotated span text occurs more than once in the cause utterance;
    /// the first occurrence was recorded.
    AmbiguousSpan {
        conversation: String,
        cause: usize,
        target: usize,
    },
    /// The cause utterance comes after its emotion utterance.
    FutureCause {
        conversation: String,
        cause: usize,
        target: usize,
    },
    DuplicatePair {
        conversation: String,
        cause: usize,
        target: usize,
    },
}

pub fn validate_corpus(corpus: &[Conversation]) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    for conv in corpus {
        let id = || conv.id.clone();
        for utt in &conv.utterances {
            if utt.text.is_empty() {
                issues.push(ValidationIssue::EmptyText {
                    conversation: id(),
                    utterance: utt.index,
                });
            }
        }
        let mut seen = HashSet::new();
        for pair in &conv.gold_pairs {
            let (cause, target) = (pair.cause_index, pair.target_index);
            if !seen.insert(*pair) {
                issues.push(ValidationIssue::DuplicatePair {
                    conversation: id(),
                    cause,
                    target,
                });
            }
            let target_emotion = conv.utterance(target).and_then(|u| u.gold_emotion);
            if target_emotion != Some(pair.emotion) {
                issues.push(ValidationIssue::EmotionMismatch {
                    conversation: id(),
                    cause,
                    target,
                    pair_emotion: pair.emotion,
                    target_emotion,
                });
            }
            if cause > target {
                issues.push(ValidationIssue::FutureCause {
                    conversation: id(),
                    cause,
                    target,
                });
            }
            if let Some(utt) = conv.utterance(cause) {
                let needle = span_text(&utt.text, pair.cause_span);
                if !needle.is_empty() && utt.text.matches(needle.as_str()).count() > 1 {
                    issues.push(ValidationIssue::AmbiguousSpan {
                        conversation: id(),
                        cause,
                        target,
                    });
                }
            }
        }
    }
    issues
}
