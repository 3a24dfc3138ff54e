use serde::{Deserialize, Serialize};

use crate::corpus::{Conversation, EmotionLabel};
use crate::error::{Error, Result};

pub const PREVIOUS_PLACEHOLDER: &str = "<UTT_1>";
pub const TARGET_PLACEHOLDER: &str = "<UTT_2>";

/// Fills the previous-utterance slot when the target opens the dialog.
pub const START_SENTINEL: &str = "(start of conversation)";

pub const DEFAULT_INSTRUCTION: &str = "You label the emotion of utterances from TV-series dialogs.
Read the previous utterance for context, then decide which emotion the speaker of the target utterance expresses.
Allowed labels: neutral, anger, disgust, fear, joy, sadness, surprise.
Reply with exactly one label in lowercase and nothing else.

Previous utterance: <UTT_1>
Target utterance: <UTT_2>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// A worked example shown before the query in few-shot prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    /// `None` renders the start-of-conversation sentinel.
    #[serde(default)]
    pub previous: Option<String>,
    pub target: String,
    pub label: EmotionLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptMode {
    ZeroShot,
    FewShot,
    /// Same layout as zero-shot; the model was fine-tuned on it.
    FineTuned,
}

/// Instruction text with one `<UTT_1>` and one `<UTT_2>` slot, plus
/// optional exemplars.
///
/// Message layout: every exemplar becomes a user message (the instruction
/// filled with the exemplar) followed by an assistant message holding its
/// label; the query comes last as a single system message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    #[serde(default = "default_instruction")]
    pub instruction: String,
    #[serde(default)]
    pub exemplars: Vec<Exemplar>,
}

fn default_instruction() -> String {
    DEFAULT_INSTRUCTION.to_string()
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            instruction: default_instruction(),
            exemplars: Vec::new(),
        }
    }
}

impl PromptTemplate {
    pub fn new(instruction: impl Into<String>, exemplars: Vec<Exemplar>) -> Result<Self> {
        let t = Self {
            instruction: instruction.into(),
            exemplars,
        };
        t.slots()?;
        Ok(t)
    }

    /// Checks the placeholders and the exemplar count required by `mode`.
    pub fn validate(&self, mode: PromptMode) -> Result<()> {
        self.slots()?;
        match (mode, self.exemplars.is_empty()) {
            (PromptMode::FewShot, true) => Err(Error::Template("few-shot prompts need at least one exemplar".into())),
            (PromptMode::ZeroShot | PromptMode::FineTuned, false) => Err(Error::Template(format!(
                "{mode:?} prompts take no exemplars, found {}",
                self.exemplars.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Byte offsets of the previous and target slots.
    fn slots(&self) -> Result<(usize, usize)> {
        let mut found = [0; 2];
        for (slot, p) in found.iter_mut().zip([PREVIOUS_PLACEHOLDER, TARGET_PLACEHOLDER]) {
            let n = self.instruction.matches(p).count();
            if n != 1 {
                return Err(Error::Template(format!(
                    "instruction must contain {p} exactly once, found {n}"
                )));
            }
            *slot = self.instruction.find(p).expect("counted above");
        }
        Ok((found[0], found[1]))
    }

    /// Substitutes both slots in a single pass, so placeholder-like text
    /// inside utterances is left untouched.
    pub fn fill(&self, previous: Option<&str>, target: &str) -> Result<String> {
        let (p, t) = self.slots()?;
        let previous = previous.unwrap_or(START_SENTINEL);
        let mut slots = [
            (p, PREVIOUS_PLACEHOLDER.len(), previous),
            (t, TARGET_PLACEHOLDER.len(), target),
        ];
        slots.sort_by_key(|s| s.0);
        let mut out = String::with_capacity(self.instruction.len() + previous.len() + target.len());
        let mut cursor = 0;
        for (at, len, value) in slots {
            out.push_str(&self.instruction[cursor..at]);
            out.push_str(value);
            cursor = at + len;
        }
        out.push_str(&self.instruction[cursor..]);
        Ok(out)
    }
}

/// Messages asking for the emotion of utterance `t` (1-based) of `conv`.
pub fn build_prompt(template: &PromptTemplate, conv: &Conversation, t: usize) -> Result<Vec<ChatMessage>> {
    let target = conv.utterance(t).ok_or_else(|| {
        Error::Argument(format!(
            "conversation {} has no utterance {t} (it has {})",
            conv.id,
            conv.len()
        ))
    })?;
    let previous = t.checked_sub(1).and_then(|p| conv.utterance(p)).map(|u| u.text.as_str());
    let mut messages = Vec::with_capacity(2 * template.exemplars.len() + 1);
    for ex in &template.exemplars {
        messages.push(ChatMessage::new(Role::User, template.fill(ex.previous.as_deref(), &ex.target)?));
        messages.push(ChatMessage::new(Role::Assistant, ex.label.as_str()));
    }
    messages.push(ChatMessage::new(Role::System, template.fill(previous, &target.text)?));
    Ok(messages)
}
