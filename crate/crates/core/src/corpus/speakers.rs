use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::Conversation;
use crate::error::{Error, Result};

/// Per-dialog one-hot speaker vectors.
///
/// Speakers get indices in order of first appearance within the dialog, so
/// the same index can denote different people in different dialogs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerEncoding {
    pub conversation_id: String,
    pub dim: usize,
    /// Speaker names in index order.
    pub speakers: Vec<String>,
    /// Speaker index of each utterance, in utterance order.
    pub assignments: Vec<usize>,
}

impl SpeakerEncoding {
    /// One-hot vector of the utterance at 1-based `index`.
    pub fn vector(&self, index: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        v[self.assignments[index - 1]] = 1.0;
        v
    }

    /// Writes the one-hot vector of utterance `index` into `out[..dim]`.
    pub fn write_into(&self, index: usize, out: &mut [f64]) {
        out[..self.dim].fill(0.0);
        out[self.assignments[index - 1]] = 1.0;
    }
}

pub fn speaker_encodings(conv: &Conversation, max_speakers: usize) -> Result<SpeakerEncoding> {
    let mut speakers: Vec<String> = Vec::new();
    let mut assignments = Vec::with_capacity(conv.len());
    for utt in &conv.utterances {
        let idx = match speakers.iter().position(|s| *s == utt.speaker) {
            Some(i) => i,
            None => {
                speakers.push(utt.speaker.clone());
                speakers.len() - 1
            }
        };
        assignments.push(idx);
    }
    if speakers.len() > max_speakers {
        return Err(Error::Capacity(format!(
            "conversation {} has {} distinct speakers but the encoding holds {}",
            conv.id,
            speakers.len(),
            max_speakers
        )));
    }
    Ok(SpeakerEncoding {
        conversation_id: conv.id.clone(),
        dim: max_speakers,
        speakers,
        assignments,
    })
}

/// Largest number of distinct speakers in any single conversation.
pub fn max_distinct_speakers(corpus: &[Conversation]) -> usize {
    corpus
        .iter()
        .map(|c| c.utterances.iter().map(|u| &u.speaker).collect::<HashSet<_>>().len())
        .max()
        .unwrap_or(0)
}
