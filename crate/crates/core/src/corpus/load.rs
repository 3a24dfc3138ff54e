use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CharSpan, Conversation, EmotionCausePair, EmotionLabel, Utterance};
use crate::error::{Error, Result};
use crate::io::write_atomic;

/// On-disk corpus schemas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    /// Shared-task release layout (`conversation_ID`, `emotion-cause_pairs`, ...).
    TaskJson,
    /// Normalized layout mirroring [`Conversation`] with explicit offsets.
    CanonicalJson,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "task-json" => Ok(CorpusFormat::TaskJson),
            "canonical-json" => Ok(CorpusFormat::CanonicalJson),
            other => Err(Error::Config(format!("unknown corpus format {other:?}"))),
        }
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Conversation>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CorpusFormat::TaskJson => parse_task_json(&text, path),
        CorpusFormat::CanonicalJson => parse_canonical(&text, path),
    }
}

pub fn save_corpus(path: &Path, corpus: &[Conversation], format: CorpusFormat) -> Result<()> {
    let text = match format {
        CorpusFormat::TaskJson => to_task_json_string(corpus)?,
        CorpusFormat::CanonicalJson => to_canonical_string(corpus)?,
    };
    write_atomic(path, text.as_bytes())
}

pub fn from_task_json_str(text: &str) -> Result<Vec<Conversation>> {
    parse_task_json(text, Path::new("<memory>"))
}

pub fn from_canonical_str(text: &str) -> Result<Vec<Conversation>> {
    parse_canonical(text, Path::new("<memory>"))
}

fn json_error(path: &Path, err: serde_json::Error) -> Error {
    use serde_json::error::Category;
    match err.classify() {
        Category::Data => Error::Schema(format!(
            "{}: line {}, column {}: {}",
            path.display(),
            err.line(),
            err.column(),
            err
        )),
        _ => Error::Parse {
            path: path.to_path_buf(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        },
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct RawConversation {
    #[serde(rename = "conversation_ID")]
    conversation_id: Value,
    conversation: Vec<RawUtterance>,
    #[serde(rename = "emotion-cause_pairs", default)]
    pairs: Vec<[String; 2]>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawUtterance {
    #[serde(rename = "utterance_ID")]
    utterance_id: Value,
    text: String,
    speaker: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    emotion: Option<String>,
}

fn id_string(value: &Value, what: &str) -> Result<String> {
    match value {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(Error::Schema(format!("{what} must be a string or integer, got {other}"))),
    }
}

fn id_index(value: &Value, conv: &str) -> Result<usize> {
    let parsed = match value {
        Value::Number(n) => n.as_u64().map(|v| v as usize),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    };
    parsed.ok_or_else(|| {
        Error::Schema(format!(
            "conversation {conv}: utterance_ID {value} is not a positive integer"
        ))
    })
}

/// Splits `"<index>_<rest>"` at the first underscore.
fn split_tagged<'a>(field: &'a str, conv: &str) -> Result<(usize, &'a str)> {
    let (head, rest) = field.split_once('_').ok_or_else(|| {
        Error::Schema(format!(
            "conversation {conv}: pair element {field:?} is not of the form <id>_<value>"
        ))
    })?;
    let index = head.trim().parse().map_err(|_| {
        Error::Schema(format!(
            "conversation {conv}: pair element {field:?} has a non-integer utterance id"
        ))
    })?;
    Ok((index, rest))
}

/// Locates `span_text` inside `text` and returns its character offsets.
///
/// The first exact occurrence wins; the flag reports whether the span text
/// occurs more than once. Falls back to the whitespace-trimmed span text.
pub fn resolve_span(text: &str, span_text: &str) -> Option<(CharSpan, bool)> {
    for needle in [span_text, span_text.trim()] {
        if needle.is_empty() {
            continue;
        }
        let mut hits = text.match_indices(needle);
        if let Some((byte_start, _)) = hits.next() {
            let start = text[..byte_start].chars().count();
            let end = start + needle.chars().count();
            return Some((CharSpan::new(start, end), hits.next().is_some()));
        }
    }
    None
}

/// Text covered by `span` in `text`.
pub(crate) fn span_text(text: &str, span: CharSpan) -> String {
    text.chars()
        .skip(span.start)
        .take(span.end - span.start)
        .collect()
}

fn parse_task_json(text: &str, path: &Path) -> Result<Vec<Conversation>> {
    let raw: Vec<RawConversation> = serde_json::from_str(text).map_err(|e| json_error(path, e))?;
    raw.into_iter().map(convert_raw).collect()
}

fn convert_raw(raw: RawConversation) -> Result<Conversation> {
    let id = id_string(&raw.conversation_id, "conversation_ID")?;
    let mut indexed = Vec::with_capacity(raw.conversation.len());
    for utt in raw.conversation {
        let index = id_index(&utt.utterance_id, &id)?;
        let gold_emotion = utt
            .emotion
            .as_deref()
            .map(|e| {
                e.parse::<EmotionLabel>().map_err(|_| {
                    Error::Schema(format!(
                        "conversation {id}: utterance {index} has unknown emotion label {e:?}"
                    ))
                })
            })
            .transpose()?;
        indexed.push(Utterance {
            index,
            speaker: utt.speaker,
            text: utt.text,
            gold_emotion,
        });
    }
    indexed.sort_by_key(|u| u.index);

    let mut conv = Conversation {
        id: id.clone(),
        utterances: indexed,
        gold_pairs: Vec::new(),
    };
    // Indices first, so pair errors refer to valid positions.
    conv.check_structure()?;

    for [target_field, cause_field] in &raw.pairs {
        let (target_index, emotion) = split_tagged(target_field, &id)?;
        let emotion: EmotionLabel = emotion.parse().map_err(|_| {
            Error::Schema(format!(
                "conversation {id}: pair {target_field:?} has unknown emotion label {emotion:?}"
            ))
        })?;
        let (cause_index, span_text) = split_tagged(cause_field, &id)?;
        let cause = conv.utterance(cause_index).ok_or_else(|| {
            Error::Data(format!(
                "conversation {id}: cause index {cause_index} outside 1..{}",
                conv.len()
            ))
        })?;
        let (cause_span, _) = resolve_span(&cause.text, span_text).ok_or_else(|| {
            Error::Data(format!(
                "conversation {id}: cause span {span_text:?} not found in utterance {cause_index}"
            ))
        })?;
        let pair = EmotionCausePair {
            cause_index,
            target_index,
            emotion,
            cause_span,
        };
        conv.check_pair(&pair)?;
        conv.gold_pairs.push(pair);
    }
    Ok(conv)
}

fn raw_id(id: &str) -> Value {
    match id.parse::<u64>() {
        Ok(n) if n.to_string() == id => Value::from(n),
        _ => Value::from(id),
    }
}

/// Renders conversations in the shared-task layout; utterance emotions come
/// from `gold_emotion` and pairs from `gold_pairs`.
pub fn to_task_json_string(corpus: &[Conversation]) -> Result<String> {
    let raw: Vec<RawConversation> = corpus
        .iter()
        .map(|conv| {
            let pairs = conv
                .gold_pairs
                .iter()
                .map(|p| {
                    let cause = conv.utterance(p.cause_index).ok_or_else(|| {
                        Error::Data(format!(
                            "conversation {}: cause index {} out of range",
                            conv.id, p.cause_index
                        ))
                    })?;
                    Ok([
                        format!("{}_{}", p.target_index, p.emotion),
                        format!("{}_{}", p.cause_index, span_text(&cause.text, p.cause_span)),
                    ])
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RawConversation {
                conversation_id: raw_id(&conv.id),
                conversation: conv
                    .utterances
                    .iter()
                    .map(|u| RawUtterance {
                        utterance_id: Value::from(u.index),
                        text: u.text.clone(),
                        speaker: u.speaker.clone(),
                        emotion: u.gold_emotion.map(|e| e.to_string()),
                    })
                    .collect(),
                pairs,
            })
        })
        .collect::<Result<_>>()?;
    Ok(serde_json::to_string_pretty(&raw).expect("task-json serialization is infallible"))
}

pub const CANONICAL_FORMAT: &str = "ecpe-canonical";
pub const CANONICAL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CanonicalDocument {
    format: String,
    version: u32,
    conversations: Vec<Conversation>,
}

pub fn to_canonical_string(corpus: &[Conversation]) -> Result<String> {
    let doc = CanonicalDocument {
        format: CANONICAL_FORMAT.to_string(),
        version: CANONICAL_VERSION,
        conversations: corpus.to_vec(),
    };
    Ok(serde_json::to_string_pretty(&doc).expect("canonical serialization is infallible"))
}

fn parse_canonical(text: &str, path: &Path) -> Result<Vec<Conversation>> {
    let doc: CanonicalDocument = serde_json::from_str(text).map_err(|e| json_error(path, e))?;
    if doc.format != CANONICAL_FORMAT || doc.version != CANONICAL_VERSION {
        return Err(Error::Schema(format!(
            "{}: expected format {CANONICAL_FORMAT} v{CANONICAL_VERSION}, found {} v{}",
            path.display(),
            doc.format,
            doc.version
        )));
    }
    let mut conversations = doc.conversations;
    for conv in &mut conversations {
        conv.utterances.sort_by_key(|u| u.index);
        conv.check_structure()?;
    }
    Ok(conversations)
}
