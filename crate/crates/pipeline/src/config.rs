//! Pipeline configuration: TOML with `${VAR}` / `${VAR:-default}`
//! interpolation in string values.

use std::path::{Path, PathBuf};

use ecpe_core::cause::CauseConfig;
use ecpe_core::corpus::{CorpusFormat, DEFAULT_SPLIT_SEED};
use ecpe_core::embed::EmbedderSpec;
use ecpe_core::emotion::{BackendKind, LocalClassifierConfig, PromptTemplate, RemoteSettings};
use ecpe_core::metrics::MatchMode;
use ecpe_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Annotated release that is split into train and dev.
    pub train: PathBuf,
    #[serde(default = "default_format")]
    pub format: CorpusFormat,
    #[serde(default = "default_dev_fraction")]
    pub dev_fraction: f64,
    #[serde(default = "default_split_seed")]
    pub split_seed: u64,
    /// Corpus to run `predict` on instead of the dev split.
    #[serde(default)]
    pub predict_input: Option<PathBuf>,
}

fn default_format() -> CorpusFormat {
    CorpusFormat::TaskJson
}

fn default_dev_fraction() -> f64 {
    0.1
}

fn default_split_seed() -> u64 {
    DEFAULT_SPLIT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub out: PathBuf,
    /// Embedding and response caches; `None` disables caching.
    pub cache: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("runs/default"),
            cache: Some(PathBuf::from("cache")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmotionConfig {
    pub backend: BackendKind,
    /// Replaces `prompt.instruction` when set.
    pub instruction_file: Option<PathBuf>,
    pub prompt: PromptTemplate,
    pub remote: RemoteSettings,
    pub local: LocalClassifierConfig,
    pub seed: u64,
}

impl Default for EmotionConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Local,
            instruction_file: None,
            prompt: PromptTemplate::default(),
            remote: RemoteSettings::default(),
            local: LocalClassifierConfig::default(),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Snapshot {
    /// Highest dev F1 during training.
    Best,
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CauseStageConfig {
    pub seed: u64,
    pub snapshot: Snapshot,
    /// Evaluate on dev after every epoch (needed for the best snapshot).
    pub evaluate_dev: bool,
    pub model: CauseConfig,
}

impl Default for CauseStageConfig {
    fn default() -> Self {
        Self {
            seed: 13,
            snapshot: Snapshot::Best,
            evaluate_dev: true,
            model: CauseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub modes: Vec<MatchMode>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            modes: vec![MatchMode::Proportional, MatchMode::Strict],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub embedder: EmbedderSpec,
    #[serde(default)]
    pub emotion: EmotionConfig,
    #[serde(default)]
    pub cause: CauseStageConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let f = self.data.dev_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("data.dev_fraction must lie in (0, 1), got {f}")));
        }
        self.cause.model.validate()?;
        if self.cause.snapshot == Snapshot::Best && !self.cause.evaluate_dev {
            return Err(Error::Config(
                "cause.snapshot = \"best\" needs cause.evaluate_dev = true".into(),
            ));
        }
        if self.metrics.modes.is_empty() {
            return Err(Error::Config("metrics.modes must name at least one mode".into()));
        }
        if let Some(mode) = self.emotion.backend.prompt_mode() {
            self.emotion.prompt.validate(mode).map_err(|e| match e {
                Error::Template(m) => Error::Config(format!("emotion.prompt: {m}")),
                other => other,
            })?;
        }
        if let EmbedderSpec::Hashing { dim: 0 } = self.embedder {
            return Err(Error::Config("embedder.dim must be positive".into()));
        }
        Ok(())
    }

    /// Resolves relative paths against `base` and reads the instruction file.
    fn finish(&mut self, base: &Path) -> Result<()> {
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        abs(&mut self.data.train);
        if let Some(p) = &mut self.data.predict_input {
            abs(p);
        }
        abs(&mut self.paths.out);
        if let Some(p) = &mut self.paths.cache {
            abs(p);
        }
        if let EmbedderSpec::Bert { model_dir, .. } = &mut self.embedder {
            abs(model_dir);
        }
        if let Some(p) = &mut self.emotion.instruction_file {
            abs(p);
            self.emotion.prompt.instruction = std::fs::read_to_string(&*p).map_err(|e| Error::io(&*p, e))?;
        }
        Ok(())
    }
}

/// A parsed configuration plus a copy safe to publish.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    /// Same configuration with values taken from secret-looking variables
    /// replaced by `<redacted:VAR>`.
    pub redacted: PipelineConfig,
    pub source: PathBuf,
}

fn is_secret(var: &str) -> bool {
    let v = var.to_ascii_uppercase();
    ["KEY", "TOKEN", "SECRET", "PASSWORD", "CREDENTIAL"].iter().any(|s| v.contains(s))
}

/// Expands `${VAR}`, `${VAR:-default}` and `$$`. Returns the expanded text
/// and the same text with secret variables masked.
pub fn interpolate(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<(String, String)> {
    let mut out = String::with_capacity(text.len());
    let mut shown = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find('$') {
        out.push_str(&rest[..pos]);
        shown.push_str(&rest[..pos]);
        let tail = &rest[pos + 1..];
        if let Some(after) = tail.strip_prefix('$') {
            out.push('$');
            shown.push('$');
            rest = after;
        } else if let Some(body) = tail.strip_prefix('{') {
            let end = body
                .find('}')
                .ok_or_else(|| Error::Config(format!("unterminated ${{...}} in {text:?}")))?;
            let expr = &body[..end];
            let (name, default) = match expr.split_once(":-") {
                Some((n, d)) => (n, Some(d)),
                None => (expr, None),
            };
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(Error::Config(format!("invalid variable name {name:?} in {text:?}")));
            }
            let value = match (lookup(name).filter(|v| !v.is_empty()), default) {
                (Some(v), _) => v,
                (None, Some(d)) => d.to_string(),
                (None, None) => {
                    return Err(Error::Config(format!("environment variable {name} is not set")));
                }
            };
            if is_secret(name) {
                shown.push_str(&format!("<redacted:{name}>"));
            } else {
                shown.push_str(&value);
            }
            out.push_str(&value);
            rest = &body[end + 1..];
        } else {
            out.push('$');
            shown.push('$');
            rest = tail;
        }
    }
    out.push_str(rest);
    shown.push_str(rest);
    Ok((out, shown))
}

fn expand(value: &toml::Value, lookup: &dyn Fn(&str) -> Option<String>) -> Result<(toml::Value, toml::Value)> {
    use toml::Value;
    Ok(match value {
        Value::String(s) => {
            let (a, b) = interpolate(s, lookup)?;
            (Value::String(a), Value::String(b))
        }
        Value::Array(items) => {
            let mut a = Vec::with_capacity(items.len());
            let mut b = Vec::with_capacity(items.len());
            for item in items {
                let (x, y) = expand(item, lookup)?;
                a.push(x);
                b.push(y);
            }
            (Value::Array(a), Value::Array(b))
        }
        Value::Table(table) => {
            let mut a = toml::Table::new();
            let mut b = toml::Table::new();
            for (k, v) in table {
                let (x, y) = expand(v, lookup)?;
                a.insert(k.clone(), x);
                b.insert(k.clone(), y);
            }
            (Value::Table(a), Value::Table(b))
        }
        other => (other.clone(), other.clone()),
    })
}

fn parse(value: toml::Value, base: &Path) -> Result<PipelineConfig> {
    let mut config: PipelineConfig = value
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    config.finish(base)?;
    Ok(config)
}

/// Parses configuration text; relative paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path, lookup: &dyn Fn(&str) -> Option<String>) -> Result<(PipelineConfig, PipelineConfig)> {
    let raw: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let (resolved, shown) = expand(&raw, lookup)?;
    let config = parse(resolved, base)?;
    config.validate()?;
    let mut redacted = parse(shown, base).unwrap_or_else(|_| config.clone());
    redacted.emotion.prompt.instruction = config.emotion.prompt.instruction.clone();
    Ok((config, redacted))
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
    let (config, redacted) = parse_config(&text, &base, &|k| std::env::var(k).ok())
        .map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
    Ok(LoadedConfig {
        config,
        redacted,
        source: path.to_path_buf(),
    })
}
