use serde::{Deserialize, Serialize};

use super::backend::{ChatBackend, ResponseCache};
use super::prompt::{build_prompt, PromptMode, PromptTemplate};
use crate::corpus::{Conversation, EmotionLabel};
use crate::error::{Error, Result};

/// Maps a model reply onto the closed label set: lowercased, surrounding
/// whitespace and punctuation stripped, then an exact name match.
pub fn normalize_label(raw: &str) -> Result<EmotionLabel> {
    let cleaned = raw
        .trim_matches(|c: char| c.is_whitespace() || !c.is_alphanumeric())
        .to_lowercase();
    cleaned.parse().map_err(|_| Error::Normalization { raw: raw.to_string() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    RemoteZeroShot,
    RemoteFewShot,
    RemoteFinetuned,
    Local,
}

impl BackendKind {
    pub fn prompt_mode(self) -> Option<PromptMode> {
        match self {
            BackendKind::RemoteZeroShot => Some(PromptMode::ZeroShot),
            BackendKind::RemoteFewShot => Some(PromptMode::FewShot),
            BackendKind::RemoteFinetuned => Some(PromptMode::FineTuned),
            BackendKind::Local => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationResult {
    /// 1-based utterance index.
    pub index: usize,
    pub label: EmotionLabel,
    /// Model reply the label came from; empty for local models.
    pub raw_output: String,
    pub backend: BackendKind,
    pub cache_hit: bool,
    /// The reply could not be mapped even after one retry; `label` is the
    /// neutral fallback.
    pub normalization_failed: bool,
}

/// Assigns one emotion to every utterance of a conversation.
pub trait UtteranceClassifier: Sync {
    fn kind(&self) -> BackendKind;

    /// One result per utterance, in utterance order.
    fn classify_conversation(&self, conv: &Conversation) -> Result<Vec<ClassificationResult>>;

    fn classify_corpus(&self, corpus: &[Conversation]) -> Result<Vec<Vec<ClassificationResult>>> {
        corpus.iter().map(|c| self.classify_conversation(c)).collect()
    }
}

pub fn labels(results: &[ClassificationResult]) -> Vec<EmotionLabel> {
    results.iter().map(|r| r.label).collect()
}

/// Prompted classification through a chat backend.
///
/// Replies are cached under a hash of the model id and messages. A reply that
/// does not normalize triggers one more request (cached under its own key);
/// if that fails too the utterance falls back to neutral.
pub struct RemoteClassifier {
    kind: BackendKind,
    backend: Box<dyn ChatBackend>,
    template: PromptTemplate,
    cache: ResponseCache,
    pool: rayon::ThreadPool,
}

impl RemoteClassifier {
    pub fn new(
        kind: BackendKind,
        backend: Box<dyn ChatBackend>,
        template: PromptTemplate,
        cache: ResponseCache,
        max_in_flight: usize,
    ) -> Result<Self> {
        let mode = kind
            .prompt_mode()
            .ok_or_else(|| Error::Config("a local backend cannot drive a remote classifier".into()))?;
        template.validate(mode)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(max_in_flight.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start request pool: {e}")))?;
        Ok(Self {
            kind,
            backend,
            template,
            cache,
            pool,
        })
    }

    fn call(&self, conv: &Conversation, t: usize, messages: &[super::ChatMessage], salt: &str) -> Result<(String, bool)> {
        let key = ResponseCache::key(self.backend.model(), messages, salt);
        if let Some(hit) = self.cache.get(&key) {
            return Ok((hit, true));
        }
        let reply = self
            .backend
            .complete(messages)
            .map_err(|e| Error::Backend(format!("conversation {} utterance {t}: {e}", conv.id)))?;
        self.cache.put(&key, &reply)?;
        Ok((reply, false))
    }

    fn classify_utterance(&self, conv: &Conversation, t: usize) -> Result<ClassificationResult> {
        let messages = build_prompt(&self.template, conv, t)?;
        let (raw, hit) = self.call(conv, t, &messages, "")?;
        let mut result = ClassificationResult {
            index: t,
            label: EmotionLabel::Neutral,
            raw_output: raw.clone(),
            backend: self.kind,
            cache_hit: hit,
            normalization_failed: false,
        };
        match normalize_label(&raw) {
            Ok(label) => result.label = label,
            Err(_) => {
                let (retry, retry_hit) = self.call(conv, t, &messages, "retry")?;
                result.cache_hit &= retry_hit;
                match normalize_label(&retry) {
                    Ok(label) => result.label = label,
                    Err(_) => {
                        log::warn!(
                            "conversation {} utterance {t}: unusable replies {raw:?} / {retry:?}, using neutral",
                            conv.id
                        );
                        result.normalization_failed = true;
                    }
                }
                result.raw_output = retry;
            }
        }
        Ok(result)
    }
}

impl UtteranceClassifier for RemoteClassifier {
    fn kind(&self) -> BackendKind {
        self.kind
    }

    fn classify_conversation(&self, conv: &Conversation) -> Result<Vec<ClassificationResult>> {
        use rayon::prelude::*;
        self.pool
            .install(|| (1..=conv.len()).into_par_iter().map(|t| self.classify_utterance(conv, t)).collect())
    }

    fn classify_corpus(&self, corpus: &[Conversation]) -> Result<Vec<Vec<ClassificationResult>>> {
        use rayon::prelude::*;
        let jobs: Vec<(usize, usize)> = corpus
            .iter()
            .enumerate()
            .flat_map(|(c, conv)| (1..=conv.len()).map(move |t| (c, t)))
            .collect();
        let flat: Vec<ClassificationResult> = self.pool.install(|| {
            jobs.par_iter()
                .map(|&(c, t)| self.classify_utterance(&corpus[c], t))
                .collect::<Result<_>>()
        })?;
        let mut out: Vec<Vec<ClassificationResult>> = corpus.iter().map(|c| Vec::with_capacity(c.len())).collect();
        for ((c, _), r) in jobs.into_iter().zip(flat) {
            out[c].push(r);
        }
        Ok(out)
    }
}

/// One chat record of a fine-tuning file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneRecord {
    pub messages: Vec<super::ChatMessage>,
}

/// One record per utterance: the inference prompt followed by an assistant
/// message holding the gold label.
pub fn build_finetune_dataset(corpus: &[Conversation], template: &PromptTemplate) -> Result<Vec<FineTuneRecord>> {
    template.validate(PromptMode::FineTuned)?;
    let mut out = Vec::new();
    for conv in corpus {
        let gold = conv.gold_emotions()?;
        for (p, label) in gold.into_iter().enumerate() {
            let mut messages = build_prompt(template, conv, p + 1)?;
            messages.push(super::ChatMessage::new(super::Role::Assistant, label.as_str()));
            out.push(FineTuneRecord { messages });
        }
    }
    Ok(out)
}

/// JSON lines, one record per line.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}
