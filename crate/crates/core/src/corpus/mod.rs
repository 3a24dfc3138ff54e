//! Annotated multi-party conversations: data model, ingestion, validation,
//! train/dev splitting, summary statistics and per-dialog speaker encodings.

mod load;
mod speakers;
mod split;
mod stats;
mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use load::{
    from_canonical_str, from_task_json_str, load_corpus, resolve_span, save_corpus,
    to_canonical_string, to_task_json_string, CorpusFormat,
};
pub use speakers::{max_distinct_speakers, speaker_encodings, SpeakerEncoding};
pub use split::{dev_count, split_corpus, DEFAULT_SPLIT_SEED};
pub use stats::{corpus_stats, StatsReport};
pub use validate::{validate_corpus, ValidationIssue};

/// The closed emotion label set: six basic emotions plus `neutral`.
///
/// Declaration order is the column order used in every report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", try_from = "String")]
pub enum EmotionLabel {
    Neutral,
    Anger,
    Disgust,
    Fear,
    Joy,
    Sadness,
    Surprise,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 7] = [
        EmotionLabel::Neutral,
        EmotionLabel::Anger,
        EmotionLabel::Disgust,
        EmotionLabel::Fear,
        EmotionLabel::Joy,
        EmotionLabel::Sadness,
        EmotionLabel::Surprise,
    ];

    /// Labels that can appear in an emotion-cause pair, in one-hot order.
    pub const EMOTIONS: [EmotionLabel; 6] = [
        EmotionLabel::Anger,
        EmotionLabel::Disgust,
        EmotionLabel::Fear,
        EmotionLabel::Joy,
        EmotionLabel::Sadness,
        EmotionLabel::Surprise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Anger => "anger",
            EmotionLabel::Disgust => "disgust",
            EmotionLabel::Fear => "fear",
            EmotionLabel::Joy => "joy",
            EmotionLabel::Sadness => "sadness",
            EmotionLabel::Surprise => "surprise",
        }
    }

    /// Position in [`EmotionLabel::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Position in [`EmotionLabel::EMOTIONS`]; `None` for neutral.
    pub fn emotion_index(self) -> Option<usize> {
        match self {
            EmotionLabel::Neutral => None,
            other => Some(other as usize - 1),
        }
    }

    pub fn is_neutral(self) -> bool {
        self == EmotionLabel::Neutral
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EmotionLabel::ALL
            .into_iter()
            .find(|label| label.as_str() == s)
            .ok_or_else(|| Error::Schema(format!("unknown emotion label {s:?}")))
    }
}

impl TryFrom<String> for EmotionLabel {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

/// Half-open character interval `[start, end)` into an utterance's text.
///
/// Offsets count Unicode scalar values, not bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn overlap(&self, other: &CharSpan) -> usize {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        end.saturating_sub(start)
    }
}

impl From<[usize; 2]> for CharSpan {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<CharSpan> for [usize; 2] {
    fn from(span: CharSpan) -> Self {
        [span.start, span.end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    /// 1-based position within the conversation.
    pub index: usize,
    pub speaker: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_emotion: Option<EmotionLabel>,
}

impl Utterance {
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

/// A labelled `(cause utterance, emotion utterance, emotion)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EmotionCausePair {
    pub cause_index: usize,
    pub target_index: usize,
    pub emotion: EmotionLabel,
    pub cause_span: CharSpan,
}

impl EmotionCausePair {
    /// Signed emotion-to-cause distance; negative when the cause follows the emotion.
    pub fn distance(&self) -> i64 {
        self.target_index as i64 - self.cause_index as i64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub utterances: Vec<Utterance>,
    #[serde(default)]
    pub gold_pairs: Vec<EmotionCausePair>,
}

impl Conversation {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Utterance at 1-based `index`.
    pub fn utterance(&self, index: usize) -> Option<&Utterance> {
        index.checked_sub(1).and_then(|i| self.utterances.get(i))
    }

    /// Span covering the whole text of utterance `index`, if it is non-empty.
    pub fn whole_span(&self, index: usize) -> Option<CharSpan> {
        let len = self.utterance(index)?.char_len();
        (len > 0).then(|| CharSpan::new(0, len))
    }

    /// Gold emotions in utterance order; fails if any utterance is unlabelled.
    pub fn gold_emotions(&self) -> Result<Vec<EmotionLabel>> {
        self.utterances
            .iter()
            .map(|u| {
                u.gold_emotion.ok_or_else(|| {
                    Error::Data(format!(
                        "conversation {} utterance {} has no gold emotion",
                        self.id, u.index
                    ))
                })
            })
            .collect()
    }

    /// Checks the structural invariants every loaded conversation satisfies.
    pub fn check_structure(&self) -> Result<()> {
        for (pos, utt) in self.utterances.iter().enumerate() {
            if utt.index != pos + 1 {
                return Err(Error::Schema(format!(
                    "conversation {}: utterance indices are not contiguous 1..{} (found {} at position {})",
                    self.id,
                    self.len(),
                    utt.index,
                    pos + 1
                )));
            }
            if utt.speaker.is_empty() {
                return Err(Error::Schema(format!(
                    "conversation {}: utterance {} has an empty speaker",
                    self.id, utt.index
                )));
            }
        }
        for pair in &self.gold_pairs {
            self.check_pair(pair)?;
        }
        Ok(())
    }

    /// Checks that `pair` references valid utterances and a valid span.
    pub fn check_pair(&self, pair: &EmotionCausePair) -> Result<()> {
        if pair.emotion.is_neutral() {
            return Err(Error::Schema(format!(
                "conversation {}: pair ({}, {}) carries the neutral label",
                self.id, pair.cause_index, pair.target_index
            )));
        }
        if self.utterance(pair.target_index).is_none() {
            return Err(Error::Data(format!(
                "conversation {}: target index {} outside 1..{}",
                self.id,
                pair.target_index,
                self.len()
            )));
        }
        let cause = self.utterance(pair.cause_index).ok_or_else(|| {
            Error::Data(format!(
                "conversation {}: cause index {} outside 1..{}",
                self.id,
                pair.cause_index,
                self.len()
            ))
        })?;
        let span = pair.cause_span;
        if span.start >= span.end || span.end > cause.char_len() {
            return Err(Error::Data(format!(
                "conversation {}: span [{}, {}) invalid for cause utterance {} of length {}",
                self.id,
                span.start,
                span.end,
                pair.cause_index,
                cause.char_len()
            )));
        }
        Ok(())
    }
}
