use std::path::{Path, PathBuf};

use ecpe_core::analysis::{
    cause_scores_by_emotion, confusion, correctly_classified_targets, distance_profile, label_map, render_report,
    restrict_to_targets, ReportBundle,
};
use ecpe_core::cause::{
    predict_corpus, self_and_previous, train_cause_model, with_predictions, CauseModel, EmbeddedDialogs,
};
use ecpe_core::corpus::{
    corpus_stats, load_corpus, split_corpus, to_canonical_string, to_task_json_string, validate_corpus,
    Conversation, CorpusFormat, EmotionLabel,
};
use ecpe_core::embed::{CachedEmbedder, EmbedderSpec, Embedder};
use ecpe_core::emotion::{
    build_finetune_dataset, labels, to_jsonl, train_local_classifier, BackendKind, ClassificationResult,
    LocalClassifier, LocalEmotionModel, OpenAiChat, PromptTemplate, RemoteClassifier, ResponseCache,
    UtteranceClassifier,
};
use ecpe_core::io::{write_atomic, write_json_atomic};
use ecpe_core::metrics::{classification_f1, keyed_pairs, score_conversations, ClassificationReport, MatchMode, MetricReport};
use ecpe_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{LoadedConfig, PipelineConfig, Snapshot};
use crate::workspace::{OutputLock, Staging};

/// `<package version>+<git describe>` of the build.
pub const VERSION: &str = env!("ECPE_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Prepare,
    FinetuneData,
    TrainLocalEmotion,
    TrainCause,
    Predict,
    Score,
    Analyze,
    All,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Prepare => "prepare",
            Stage::FinetuneData => "finetune-data",
            Stage::TrainLocalEmotion => "train-local-emotion",
            Stage::TrainCause => "train-cause",
            Stage::Predict => "predict",
            Stage::Score => "score",
            Stage::Analyze => "analyze",
            Stage::All => "all",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Feed gold emotions to stage 2 instead of classifier output.
    pub gold_emotions: bool,
    /// Overrides every training seed in the configuration.
    pub seed: Option<u64>,
    /// Overrides `paths.out`.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub stage: Stage,
    pub dir: PathBuf,
    /// Human-readable result table, when the stage produces one.
    pub summary: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: Stage,
    pub version: String,
    pub config_file: PathBuf,
    pub gold_emotions: bool,
    pub seed_override: Option<u64>,
    pub config: PipelineConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitStats {
    train: ecpe_core::corpus::StatsReport,
    dev: ecpe_core::corpus::StatsReport,
    total: ecpe_core::corpus::StatsReport,
}

#[derive(Debug, Serialize, Deserialize)]
struct EmotionDevReport {
    model: ClassificationReport,
    always_neutral: ClassificationReport,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConversationEmotions {
    conversation: String,
    results: Vec<ClassificationResult>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModeScores {
    pub mode: MatchMode,
    pub model: MetricReport,
    /// Self-and-previous heuristic on the same emotions.
    pub baseline: MetricReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreReport {
    pub gold_emotions: bool,
    pub pairs: Vec<ModeScores>,
    /// Emotion classification against gold, when the input is labelled.
    pub emotion: Option<ClassificationReport>,
    pub emotion_always_neutral: Option<ClassificationReport>,
}

pub struct Pipeline {
    loaded: LoadedConfig,
    opts: RunOptions,
    out: PathBuf,
}

fn read_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Conversation>> {
    load_corpus(path, format).map_err(|e| match e {
        Error::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
            Error::Data(format!("corpus file {} not found", path.display()))
        }
        other => other,
    })
}

fn gold_labels(corpus: &[Conversation]) -> Result<Vec<Vec<EmotionLabel>>> {
    corpus.iter().map(Conversation::gold_emotions).collect()
}

fn always_neutral(gold: &[EmotionLabel]) -> Result<ClassificationReport> {
    classification_f1(&vec![EmotionLabel::Neutral; gold.len()], gold)
}

impl Pipeline {
    pub fn new(loaded: LoadedConfig, opts: RunOptions) -> Self {
        let out = opts.out.clone().unwrap_or_else(|| loaded.config.paths.out.clone());
        Self { loaded, opts, out }
    }

    fn config(&self) -> &PipelineConfig {
        &self.loaded.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.name())
    }

    /// Stages executed by `all`, in order.
    pub fn chain(&self) -> Vec<Stage> {
        let mut stages = vec![Stage::Prepare, Stage::FinetuneData];
        if self.config().emotion.backend == BackendKind::Local && !self.opts.gold_emotions {
            stages.push(Stage::TrainLocalEmotion);
        }
        stages.extend([Stage::TrainCause, Stage::Predict, Stage::Score, Stage::Analyze]);
        stages
    }

    /// Runs `stage` (or the whole chain) while holding the output lock.
    pub fn run(&self, stage: Stage) -> Result<Vec<StageOutcome>> {
        let _lock = OutputLock::acquire(&self.out)?;
        let stages = if stage == Stage::All { self.chain() } else { vec![stage] };
        stages.into_iter().map(|s| self.run_one(s)).collect()
    }

    fn run_one(&self, stage: Stage) -> Result<StageOutcome> {
        log::info!("stage {} -> {}", stage.name(), self.stage_dir(stage).display());
        let staging = Staging::new(&self.out, stage.name())?;
        let summary = match stage {
            Stage::Prepare => self.prepare(&staging)?,
            Stage::FinetuneData => self.finetune_data(&staging)?,
            Stage::TrainLocalEmotion => self.train_local_emotion(&staging)?,
            Stage::TrainCause => self.train_cause(&staging)?,
            Stage::Predict => self.predict(&staging)?,
            Stage::Score => self.score(&staging)?,
            Stage::Analyze => self.analyze(&staging)?,
            Stage::All => unreachable!("expanded by run"),
        };
        let provenance = Provenance {
            stage,
            version: VERSION.to_string(),
            config_file: self.loaded.source.clone(),
            gold_emotions: self.opts.gold_emotions,
            seed_override: self.opts.seed,
            config: self.loaded.redacted.clone(),
        };
        write_json_atomic(&staging.file("provenance.json"), &provenance)?;
        let dir = staging.commit()?;
        Ok(StageOutcome { stage, dir, summary })
    }

    /// Path of an artifact produced by `stage`, or an error naming the stage to run.
    fn require(&self, stage: Stage, file: &str) -> Result<PathBuf> {
        let path = self.stage_dir(stage).join(file);
        if path.is_file() {
            Ok(path)
        } else {
            Err(Error::Data(format!(
                "{} is missing; run `ecpe {} --config {}` first",
                path.display(),
                stage.name(),
                self.loaded.source.display()
            )))
        }
    }

    fn embedder(&self) -> Result<CachedEmbedder> {
        let spec = &self.config().embedder;
        let cache = match spec {
            EmbedderSpec::Bert { .. } => self.config().paths.cache.as_ref().map(|c| c.join("embeddings")),
            EmbedderSpec::Hashing { .. } => None,
        };
        spec.build(cache.as_deref())
    }

    fn split(&self) -> Result<(Vec<Conversation>, Vec<Conversation>)> {
        let train = read_corpus(&self.require(Stage::Prepare, "train.json")?, CorpusFormat::CanonicalJson)?;
        let dev = read_corpus(&self.require(Stage::Prepare, "dev.json")?, CorpusFormat::CanonicalJson)?;
        Ok((train, dev))
    }

    fn prepare(&self, staging: &Staging) -> Result<Option<String>> {
        let data = &self.config().data;
        let corpus = read_corpus(&data.train, data.format)?;
        let issues = validate_corpus(&corpus);
        if !issues.is_empty() {
            log::warn!("{} annotation issues, see validation.json", issues.len());
        }
        let (train, dev) = split_corpus(&corpus, data.dev_fraction, data.split_seed)?;
        write_atomic(&staging.file("train.json"), to_canonical_string(&train)?.as_bytes())?;
        write_atomic(&staging.file("dev.json"), to_canonical_string(&dev)?.as_bytes())?;
        write_json_atomic(&staging.file("validation.json"), &issues)?;
        let stats = SplitStats {
            train: corpus_stats(&train),
            dev: corpus_stats(&dev),
            total: corpus_stats(&corpus),
        };
        write_json_atomic(&staging.file("stats.json"), &stats)?;
        Ok(Some(format!(
            "{:<6} {:>8} {:>11} {:>9}\ntrain  {:>8} {:>11} {:>9}\ndev    {:>8} {:>11} {:>9}\ntotal  {:>8} {:>11} {:>9}\n",
            "split", "dialogs", "utterances", "pairs",
            stats.train.dialogs, stats.train.utterances, stats.train.pairs,
            stats.dev.dialogs, stats.dev.utterances, stats.dev.pairs,
            stats.total.dialogs, stats.total.utterances, stats.total.pairs,
        )))
    }

    fn finetune_data(&self, staging: &Staging) -> Result<Option<String>> {
        let (train, dev) = self.split()?;
        let template = PromptTemplate {
            instruction: self.config().emotion.prompt.instruction.clone(),
            exemplars: Vec::new(),
        };
        let train_records = build_finetune_dataset(&train, &template)?;
        let dev_records = build_finetune_dataset(&dev, &template)?;
        write_atomic(&staging.file("train.jsonl"), to_jsonl(&train_records)?.as_bytes())?;
        write_atomic(&staging.file("dev.jsonl"), to_jsonl(&dev_records)?.as_bytes())?;
        Ok(Some(format!(
            "fine-tuning records: train {}, dev {}\n",
            train_records.len(),
            dev_records.len()
        )))
    }

    fn train_local_emotion(&self, staging: &Staging) -> Result<Option<String>> {
        let (train, dev) = self.split()?;
        let embedder = self.embedder()?;
        let seed = self.opts.seed.unwrap_or(self.config().emotion.seed);
        let model = train_local_classifier(&train, &embedder, &self.config().emotion.local, seed)?;
        model.save(&staging.file("model.ckpt"))?;
        let classifier = LocalClassifier {
            model: &model,
            embedder: &embedder,
        };
        let pred: Vec<EmotionLabel> = classifier.classify_corpus(&dev)?.iter().flat_map(|r| labels(r)).collect();
        let gold: Vec<EmotionLabel> = gold_labels(&dev)?.concat();
        let report = EmotionDevReport {
            model: classification_f1(&pred, &gold)?,
            always_neutral: always_neutral(&gold)?,
        };
        write_json_atomic(&staging.file("dev_report.json"), &report)?;
        Ok(Some(format!(
            "local emotion classifier on dev\n{}always-neutral weighted F1 {:.4}\n",
            report.model.to_table(),
            report.always_neutral.weighted_f1
        )))
    }

    fn train_cause(&self, staging: &Staging) -> Result<Option<String>> {
        let (train, dev) = self.split()?;
        let embedder = self.embedder()?;
        let stage = &self.config().cause;
        let train_set = EmbeddedDialogs::new(&train, &embedder)?;
        let dev_set = if stage.evaluate_dev && !dev.is_empty() {
            Some(EmbeddedDialogs::new(&dev, &embedder)?)
        } else {
            None
        };
        let seed = self.opts.seed.unwrap_or(stage.seed);
        let trained = train_cause_model(&train_set, dev_set.as_ref(), &stage.model, seed)?;
        trained.best_model.save(&staging.file("best.ckpt"))?;
        trained.final_model.save(&staging.file("final.ckpt"))?;
        write_json_atomic(&staging.file("history.json"), &trained.history)?;
        let best = trained
            .history
            .iter()
            .filter_map(|h| h.dev_f1.map(|f| (h.epoch, f)))
            .fold(None, |acc: Option<(usize, f64)>, (e, f)| match acc {
                Some((_, b)) if b >= f => acc,
                _ => Some((e, f)),
            });
        Ok(Some(match best {
            Some((epoch, f1)) => format!("best dev proportional F1 {f1:.4} at epoch {epoch}\n"),
            None => format!("trained {} epochs without dev evaluation\n", trained.history.len()),
        }))
    }

    fn classify(&self, corpus: &[Conversation], embedder: &CachedEmbedder) -> Result<Vec<Vec<ClassificationResult>>> {
        let emotion = &self.config().emotion;
        match emotion.backend {
            BackendKind::Local => {
                let path = self.require(Stage::TrainLocalEmotion, "model.ckpt")?;
                let model = LocalEmotionModel::load(&path)?;
                LocalClassifier {
                    model: &model,
                    embedder,
                }
                .classify_corpus(corpus)
            }
            kind => {
                let chat = OpenAiChat::from_env(emotion.remote.clone())?;
                let cache = ResponseCache::new(self.config().paths.cache.as_ref().map(|c| c.join("responses")));
                RemoteClassifier::new(kind, Box::new(chat), emotion.prompt.clone(), cache, emotion.remote.max_in_flight)?
                    .classify_corpus(corpus)
            }
        }
    }

    fn predict(&self, staging: &Staging) -> Result<Option<String>> {
        let input = match &self.config().data.predict_input {
            Some(path) => read_corpus(path, self.config().data.format)?,
            None => self.split()?.1,
        };
        let snapshot = match self.config().cause.snapshot {
            Snapshot::Best => "best.ckpt",
            Snapshot::Final => "final.ckpt",
        };
        let ckpt = self.require(Stage::TrainCause, snapshot)?;
        let embedder = self.embedder()?;
        let model = CauseModel::load(&ckpt, Some(embedder.id()))?;

        let (emotions, results) = if self.opts.gold_emotions {
            (gold_labels(&input)?, None)
        } else {
            let results = self.classify(&input, &embedder)?;
            (results.iter().map(|r| labels(r)).collect(), Some(results))
        };
        let predicted = predict_corpus(&model, &input, &emotions, &embedder)?;
        let baseline: Vec<Conversation> = input
            .iter()
            .zip(&emotions)
            .map(|(conv, emo)| Ok(with_predictions(conv, emo, self_and_previous(conv, emo)?)))
            .collect::<Result<_>>()?;

        write_atomic(&staging.file("input.json"), to_canonical_string(&input)?.as_bytes())?;
        write_atomic(&staging.file("submission.json"), to_task_json_string(&predicted)?.as_bytes())?;
        write_atomic(&staging.file("baseline.json"), to_task_json_string(&baseline)?.as_bytes())?;
        if let Some(results) = results {
            let per_conv: Vec<ConversationEmotions> = input
                .iter()
                .zip(results)
                .map(|(c, r)| ConversationEmotions {
                    conversation: c.id.clone(),
                    results: r,
                })
                .collect();
            write_json_atomic(&staging.file("emotions.json"), &per_conv)?;
        }
        let pairs: usize = predicted.iter().map(|c| c.gold_pairs.len()).sum();
        Ok(Some(format!(
            "predicted {pairs} pairs for {} conversations ({} emotions)\n",
            predicted.len(),
            if self.opts.gold_emotions { "gold" } else { "predicted" }
        )))
    }

    fn predictions(&self) -> Result<(Vec<Conversation>, Vec<Conversation>, Vec<Conversation>, bool)> {
        let gold = read_corpus(&self.require(Stage::Predict, "input.json")?, CorpusFormat::CanonicalJson)?;
        let sub = read_corpus(&self.require(Stage::Predict, "submission.json")?, CorpusFormat::TaskJson)?;
        let base = read_corpus(&self.require(Stage::Predict, "baseline.json")?, CorpusFormat::TaskJson)?;
        let prov_path = self.require(Stage::Predict, "provenance.json")?;
        let text = std::fs::read_to_string(&prov_path).map_err(|e| Error::io(&prov_path, e))?;
        let prov: Provenance =
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", prov_path.display())))?;
        Ok((gold, sub, base, prov.gold_emotions))
    }

    fn score(&self, staging: &Staging) -> Result<Option<String>> {
        let (gold, sub, base, gold_emotions) = self.predictions()?;
        let mut pairs = Vec::new();
        for &mode in &self.config().metrics.modes {
            pairs.push(ModeScores {
                mode,
                model: score_conversations(&sub, &gold, mode)?,
                baseline: score_conversations(&base, &gold, mode)?,
            });
        }
        let (emotion, emotion_always_neutral) = match gold_labels(&gold) {
            Ok(g) => {
                let g = g.concat();
                let p: Vec<EmotionLabel> = gold_labels(&sub)?.concat();
                (Some(classification_f1(&p, &g)?), Some(always_neutral(&g)?))
            }
            Err(_) => (None, None),
        };
        let report = ScoreReport {
            gold_emotions,
            pairs,
            emotion,
            emotion_always_neutral,
        };
        write_json_atomic(&staging.file("report.json"), &report)?;
        let mut md = String::new();
        for m in &report.pairs {
            md.push_str(&format!("pairs, {:?} matching (model)\n{}\n", m.mode, m.model.to_table()));
            md.push_str(&format!(
                "pairs, {:?} matching (self+previous baseline): weighted F1 {:.4}\n\n",
                m.mode, m.baseline.weighted_f1
            ));
        }
        if let (Some(e), Some(n)) = (&report.emotion, &report.emotion_always_neutral) {
            md.push_str(&format!(
                "emotions\n{}always-neutral weighted F1 {:.4}\n",
                e.to_table(),
                n.weighted_f1
            ));
        }
        write_atomic(&staging.file("report.txt"), md.as_bytes())?;
        Ok(Some(md))
    }

    fn analyze(&self, staging: &Staging) -> Result<Option<String>> {
        let (gold, sub, _, _) = self.predictions()?;
        let gold_flat: Vec<EmotionLabel> = gold_labels(&gold)?.concat();
        let pred_flat: Vec<EmotionLabel> = gold_labels(&sub)?.concat();
        let pred_labels = label_map(&sub);
        let gold_map = label_map(&gold);
        let pred_pairs = keyed_pairs(&sub);
        let gold_pairs = keyed_pairs(&gold);
        let targets = correctly_classified_targets(&pred_labels, &gold_map);
        let bundle = ReportBundle {
            confusion: Some(confusion(&pred_flat, &gold_flat)?),
            cause_by_emotion: Some(cause_scores_by_emotion(&pred_pairs, &gold_pairs, &pred_labels, &gold_map)?),
            distance: Some(distance_profile(
                &restrict_to_targets(&pred_pairs, &targets),
                &restrict_to_targets(&gold_pairs, &targets),
            )?),
        };
        let files = render_report(staging.path(), &bundle)?;
        Ok(Some(format!("wrote {} analysis files\n", files.written.len())))
    }
}

/// Process exit status for an error: 2 configuration, 3 data, 4 backend,
/// 5 internal.
pub fn exit_code(err: &Error) -> i32 {
    use ecpe_core::ErrorKind;
    match err.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Backend => 4,
        ErrorKind::Internal => 5,
    }
}
