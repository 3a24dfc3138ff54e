//! Utterance emotion classification: prompt construction for chat models,
//! a cached remote client, fine-tuning files and an offline fallback model.

mod backend;
mod classify;
mod local;
mod prompt;

pub use backend::{ChatBackend, DecodingSettings, OpenAiChat, RateLimiter, RemoteSettings, ResponseCache};
pub use classify::{
    build_finetune_dataset, labels, normalize_label, to_jsonl, BackendKind, ClassificationResult, FineTuneRecord,
    RemoteClassifier, UtteranceClassifier,
};
pub use local::{
    pair_features, train_local_classifier, LocalClassifier, LocalClassifierConfig, LocalEmotionModel,
};
pub use prompt::{
    build_prompt, ChatMessage, Exemplar, PromptMode, PromptTemplate, Role, DEFAULT_INSTRUCTION,
    PREVIOUS_PLACEHOLDER, START_SENTINEL, TARGET_PLACEHOLDER,
};
