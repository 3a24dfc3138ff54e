use crate::corpus::{Conversation, EmotionCausePair, EmotionLabel};
use crate::error::{Error, Result};

/// Heuristic causes: every emotional utterance is caused by itself and by
/// the utterance right before it. Causes are whole utterances.
pub fn self_and_previous(conv: &Conversation, emotions: &[EmotionLabel]) -> Result<Vec<EmotionCausePair>> {
    if emotions.len() != conv.len() {
        return Err(Error::Contract(format!(
            "conversation {} has {} utterances but {} emotions were supplied",
            conv.id,
            conv.len(),
            emotions.len()
        )));
    }
    let mut pairs = Vec::new();
    for (p, &emotion) in emotions.iter().enumerate() {
        if emotion.is_neutral() {
            continue;
        }
        let t = p + 1;
        for cause in [t.checked_sub(1).filter(|&c| c > 0), Some(t)].into_iter().flatten() {
            if let Some(span) = conv.whole_span(cause) {
                pairs.push(EmotionCausePair {
                    cause_index: cause,
                    target_index: t,
                    emotion,
                    cause_span: span,
                });
            }
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;
    use EmotionLabel::*;

    #[test]
    fn self_and_previous_pairs() {
        let conv = Conversation {
            id: "1".into(),
            utterances: ["Hi!", "You broke it.", "Sorry"]
                .iter()
                .enumerate()
                .map(|(k, t)| Utterance {
                    index: k + 1,
                    speaker: "S".into(),
                    text: t.to_string(),
                    gold_emotion: None,
                })
                .collect(),
            gold_pairs: vec![],
        };
        let pairs = self_and_previous(&conv, &[Joy, Neutral, Sadness]).unwrap();
        let got: Vec<_> = pairs.iter().map(|p| (p.cause_index, p.target_index, p.emotion)).collect();
        assert_eq!(got, vec![(1, 1, Joy), (2, 3, Sadness), (3, 3, Sadness)]);
        assert_eq!(pairs[1].cause_span.end, 13);
    }
}
