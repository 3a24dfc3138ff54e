//! Acceptance suite. Prints one `criterion <id>: PASS|FAIL` line per check and
//! exits non-zero if any check fails.
//!
//! Checks that need the official training release read it from
//! `ECPE_TRAIN_JSON`; `ECPE_BERT_DIR` selects the BERT encoder, otherwise the
//! hashing embedder is used. Pass criterion ids as arguments to run a subset,
//! e.g. `cargo test --test acceptance -- 1 8`.

mod common;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ecpe_core::analysis::{cause_scores_by_emotion, confusion, distance_profile, label_map};
use ecpe_core::cause::{
    build_pair_candidates, predict_causes, predict_corpus, self_and_previous, train_cause_model, with_predictions,
    CauseConfig, CauseModel, EmbeddedDialogs,
};
use ecpe_core::corpus::{
    corpus_stats, load_corpus, speaker_encodings, split_corpus, CharSpan, Conversation, CorpusFormat,
    EmotionCausePair, EmotionLabel, Utterance, DEFAULT_SPLIT_SEED,
};
use ecpe_core::embed::{embed_conversation, BertEmbedder, Embedder, HashingEmbedder};
use ecpe_core::emotion::{
    build_finetune_dataset, build_prompt, to_jsonl, train_local_classifier, Exemplar, LocalClassifierConfig,
    PromptTemplate,
};
use ecpe_core::metrics::{
    classification_f1, keyed_pairs, score_conversations, score_pairs, weighted_average, KeyedPair, MatchMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const TOL: f64 = 1e-9;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// Data access

fn official_corpus() -> Result<Vec<Conversation>, String> {
    let path = std::env::var_os("ECPE_TRAIN_JSON")
        .ok_or("dataset unavailable: set ECPE_TRAIN_JSON to the official training release")?;
    load_corpus(Path::new(&path), CorpusFormat::TaskJson).map_err(err)
}

fn official_split() -> Result<(Vec<Conversation>, Vec<Conversation>), String> {
    split_corpus(&official_corpus()?, 0.1, DEFAULT_SPLIT_SEED).map_err(err)
}

fn encoder() -> Result<(Box<dyn Embedder>, &'static str), String> {
    match std::env::var_os("ECPE_BERT_DIR") {
        Some(dir) => Ok((
            Box::new(BertEmbedder::load(Path::new(&dir), "bert-base-uncased/penultimate-mean").map_err(err)?),
            "bert",
        )),
        None => Ok((Box::new(HashingEmbedder::new(768).map_err(err)?), "hashing-768")),
    }
}

fn gold_emotions(corpus: &[Conversation]) -> Vec<Vec<EmotionLabel>> {
    corpus.iter().map(|c| c.gold_emotions().unwrap()).collect()
}

fn baseline(corpus: &[Conversation], emotions: &[Vec<EmotionLabel>]) -> Vec<Conversation> {
    corpus
        .iter()
        .zip(emotions)
        .map(|(c, e)| with_predictions(c, e, self_and_previous(c, e).unwrap()))
        .collect()
}

// ---------------------------------------------------------------------------
// 1, 2: scoring against an exhaustive matcher

struct Instance {
    pred: Vec<KeyedPair>,
    gold: Vec<KeyedPair>,
}

fn random_span(rng: &mut ChaCha8Rng, len: usize) -> CharSpan {
    let start = rng.gen_range(0..len);
    CharSpan::new(start, rng.gen_range(start + 1..=len))
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.gen_range(1..=4usize);
    let lens: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=30)).collect();
    let emotions = &EmotionLabel::EMOTIONS[..3];
    let pair = |rng: &mut ChaCha8Rng| {
        let conv = if rng.gen_bool(0.8) { "a" } else { "b" };
        let target = rng.gen_range(1..=n);
        let cause = rng.gen_range(1..=n);
        KeyedPair::new(
            conv,
            EmotionCausePair {
                cause_index: cause,
                target_index: target,
                emotion: emotions[rng.gen_range(0..emotions.len())],
                cause_span: random_span(rng, lens[cause - 1]),
            },
        )
    };
    let gold: Vec<KeyedPair> = (0..rng.gen_range(0..=4)).map(|_| pair(rng)).collect();
    let pred = (0..rng.gen_range(0..=4))
        .map(|_| {
            if !gold.is_empty() && rng.gen_bool(0.7) {
                let mut p = gold[rng.gen_range(0..gold.len())].clone();
                match rng.gen_range(0..3) {
                    0 => {}
                    _ => p.pair.cause_span = random_span(rng, lens[p.pair.cause_index - 1]),
                }
                p
            } else {
                pair(rng)
            }
        })
        .collect();
    Instance { pred, gold }
}

fn sort_key(p: &KeyedPair) -> (String, usize, usize, EmotionLabel, usize, usize) {
    (
        p.conversation.clone(),
        p.pair.cause_index,
        p.pair.target_index,
        p.pair.emotion,
        p.pair.cause_span.start,
        p.pair.cause_span.end,
    )
}

fn distinct(pairs: &[KeyedPair]) -> Vec<KeyedPair> {
    let mut out: Vec<KeyedPair> = Vec::new();
    for p in pairs {
        if !out.iter().any(|q| sort_key(q) == sort_key(p)) {
            out.push(p.clone());
        }
    }
    out.sort_by_key(sort_key);
    out
}

fn chars_in_common(a: CharSpan, b: CharSpan) -> usize {
    (0..64).filter(|&c| a.start <= c && c < a.end && b.start <= c && c < b.end).count()
}

struct Edge {
    p: usize,
    g: usize,
    overlap: usize,
    exact: bool,
}

impl Edge {
    fn rank(&self) -> (Reverse<usize>, bool, usize, usize) {
        (Reverse(self.overlap), !self.exact, self.p, self.g)
    }
}

/// Enumerates every matching and keeps the one in which each unused edge is
/// blocked by a better-ranked used edge sharing an endpoint. Exactly one
/// matching has that property.
fn exhaustive_matching(pred: &[KeyedPair], gold: &[KeyedPair]) -> Vec<(usize, usize, usize)> {
    let mut edges = Vec::new();
    for (p, a) in pred.iter().enumerate() {
        for (g, b) in gold.iter().enumerate() {
            let same_key = a.conversation == b.conversation
                && a.pair.cause_index == b.pair.cause_index
                && a.pair.target_index == b.pair.target_index
                && a.pair.emotion == b.pair.emotion;
            let overlap = chars_in_common(a.pair.cause_span, b.pair.cause_span);
            if same_key && overlap > 0 {
                edges.push(Edge {
                    p,
                    g,
                    overlap,
                    exact: a.pair.cause_span == b.pair.cause_span,
                });
            }
        }
    }
    let mut stable = Vec::new();
    for mask in 0u32..(1 << edges.len()) {
        let chosen: Vec<&Edge> = (0..edges.len()).filter(|i| mask >> i & 1 == 1).map(|i| &edges[i]).collect();
        let disjoint = chosen.iter().enumerate().all(|(i, a)| chosen[i + 1..].iter().all(|b| a.p != b.p && a.g != b.g));
        if !disjoint {
            continue;
        }
        let blocked = edges.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 0).all(|(_, e)| {
            chosen.iter().any(|c| (c.p == e.p || c.g == e.g) && c.rank() < e.rank())
        });
        if blocked {
            stable.push(chosen.iter().map(|e| (e.p, e.g, e.overlap)).collect::<Vec<_>>());
        }
    }
    assert_eq!(stable.len(), 1, "expected a unique stable matching");
    stable.pop().unwrap()
}

#[derive(Debug)]
struct OracleScores {
    per_emotion_f1: Vec<f64>,
    weighted_precision: f64,
    weighted_recall: f64,
    weighted_f1: f64,
}

fn oracle_scores(pred: &[KeyedPair], gold: &[KeyedPair], mode: MatchMode) -> OracleScores {
    let pred = distinct(pred);
    let gold = distinct(gold);
    let slot = |e: EmotionLabel| EmotionLabel::EMOTIONS.iter().position(|&x| x == e).unwrap();
    let (mut np, mut ng, mut pc, mut rc) = ([0.0f64; 6], [0.0f64; 6], [0.0f64; 6], [0.0f64; 6]);
    for p in &pred {
        np[slot(p.pair.emotion)] += 1.0;
    }
    for g in &gold {
        ng[slot(g.pair.emotion)] += 1.0;
    }
    for (p, g, overlap) in exhaustive_matching(&pred, &gold) {
        let (a, b) = (&pred[p].pair, &gold[g].pair);
        let e = slot(a.emotion);
        match mode {
            MatchMode::Strict if a.cause_span == b.cause_span => {
                pc[e] += 1.0;
                rc[e] += 1.0;
            }
            MatchMode::Strict => {}
            MatchMode::Proportional => {
                pc[e] += overlap as f64 / (a.cause_span.end - a.cause_span.start) as f64;
                rc[e] += overlap as f64 / (b.cause_span.end - b.cause_span.start) as f64;
            }
        }
    }
    let mut out = OracleScores {
        per_emotion_f1: vec![0.0; 6],
        weighted_precision: 0.0,
        weighted_recall: 0.0,
        weighted_f1: 0.0,
    };
    let total: f64 = ng.iter().sum();
    for e in 0..6 {
        let p = if np[e] > 0.0 { pc[e] / np[e] } else { 0.0 };
        let r = if ng[e] > 0.0 { rc[e] / ng[e] } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        out.per_emotion_f1[e] = f;
        if total > 0.0 {
            out.weighted_precision += ng[e] / total * p;
            out.weighted_recall += ng[e] / total * r;
            out.weighted_f1 += ng[e] / total * f;
        }
    }
    out
}

fn c1_metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let instances = 2000;
    let mut matched = 0;
    for i in 0..instances {
        let inst = random_instance(&mut rng);
        for mode in [MatchMode::Strict, MatchMode::Proportional] {
            let got = score_pairs(&inst.pred, &inst.gold, mode).map_err(err)?;
            let want = oracle_scores(&inst.pred, &inst.gold, mode);
            let per_emotion: Vec<f64> = got.per_emotion.iter().map(|s| s.f1).collect();
            let close = |a: f64, b: f64| (a - b).abs() <= TOL;
            let agree = close(got.weighted_f1, want.weighted_f1)
                && close(got.weighted_precision, want.weighted_precision)
                && close(got.weighted_recall, want.weighted_recall)
                && per_emotion.iter().zip(&want.per_emotion_f1).all(|(&a, &b)| close(a, b));
            ensure(agree, || {
                format!(
                    "instance {i} ({mode:?}): scorer {:?} vs oracle {want:?}\npred {:?}\ngold {:?}",
                    (got.weighted_precision, got.weighted_recall, got.weighted_f1, per_emotion),
                    inst.pred,
                    inst.gold
                )
            })?;
        }
        matched += usize::from(!inst.gold.is_empty() && !inst.pred.is_empty());
    }
    Ok(format!("{instances} instances x 2 modes agree within {TOL:e} ({matched} with both sides non-empty)"))
}

fn c2a_dominance_random() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let instances = 2000;
    let mut strictly = 0;
    for i in 0..instances {
        let inst = random_instance(&mut rng);
        let strict = score_pairs(&inst.pred, &inst.gold, MatchMode::Strict).map_err(err)?.weighted_f1;
        let prop = score_pairs(&inst.pred, &inst.gold, MatchMode::Proportional).map_err(err)?.weighted_f1;
        ensure(prop >= strict - TOL, || format!("instance {i}: proportional {prop} < strict {strict}"))?;
        strictly += usize::from(prop > strict + TOL);
    }
    Ok(format!("{instances} random instances; proportional > strict on {strictly}"))
}

fn c2b_dominance_dev() -> Outcome {
    let (_, dev) = official_split()?;
    let pred = baseline(&dev, &gold_emotions(&dev));
    let strict = score_conversations(&pred, &dev, MatchMode::Strict).map_err(err)?.weighted_f1;
    let prop = score_conversations(&pred, &dev, MatchMode::Proportional).map_err(err)?.weighted_f1;
    ensure(prop >= strict, || format!("dev: proportional {prop:.4} < strict {strict:.4}"))?;
    Ok(format!("dev heuristic predictions: proportional {prop:.4} >= strict {strict:.4}"))
}

// ---------------------------------------------------------------------------
// 3, 4: corpus

fn c3_corpus_statistics() -> Outcome {
    let stats = corpus_stats(&official_corpus()?);
    let with_cause = stats.emotional_with_cause_fraction.unwrap_or(f64::NAN);
    let multi = stats.multi_emotion_cause_fraction.unwrap_or(f64::NAN);
    let detail = format!(
        "{} dialogs / {} utterances / {} pairs; with-cause {with_cause:.3}; multi-emotion causes {multi:.3}",
        stats.dialogs, stats.utterances, stats.pairs
    );
    ensure(
        (stats.dialogs, stats.utterances, stats.pairs) == (1374, 13619, 9364),
        || format!("totals differ from 1374 / 13619 / 9364: {detail}"),
    )?;
    ensure((with_cause - 0.91).abs() <= 0.01 && (multi - 0.16).abs() <= 0.01, || {
        format!("fractions outside 0.91 / 0.16 +- 0.01: {detail}")
    })?;
    Ok(detail)
}

fn check_split(corpus: &[Conversation]) -> Result<(usize, usize), String> {
    let (train, dev) = split_corpus(corpus, 0.1, DEFAULT_SPLIT_SEED).map_err(err)?;
    let ids = |c: &[Conversation]| c.iter().map(|d| d.id.clone()).collect::<BTreeSet<_>>();
    let (a, b) = (ids(&train), ids(&dev));
    ensure(a.is_disjoint(&b) && a.len() + b.len() == corpus.len(), || "split is not a partition".into())?;
    let (again_train, _) = split_corpus(corpus, 0.1, DEFAULT_SPLIT_SEED).map_err(err)?;
    ensure(again_train == train, || "split is not deterministic".into())?;
    Ok((train.len(), dev.len()))
}

fn c4_split() -> Outcome {
    let synthetic = check_split(&common::corpus(1374, 4))?;
    ensure(synthetic == (1236, 138), || format!("1374 dialogs split into {synthetic:?}"))?;
    match official_corpus() {
        Ok(corpus) => {
            let official = check_split(&corpus)?;
            ensure(official == (1236, 138), || format!("official release split into {official:?}"))?;
            Ok(format!("seed {DEFAULT_SPLIT_SEED}: 1236 / 138 on the official release and a 1374-dialog synthetic corpus"))
        }
        Err(_) => Ok(format!(
            "seed {DEFAULT_SPLIT_SEED}: 1374 dialogs -> 1236 / 138 (synthetic corpus; counts depend only on the dialog count)"
        )),
    }
}

// ---------------------------------------------------------------------------
// 5, 6: cause model

fn c5_capacity() -> Outcome {
    // Predicted causes are whole utterances, so whole-utterance gold spans
    // make a perfect fit score 1.
    let train = common::whole_utterance_spans(&common::corpus(10, 5));
    let embedder = HashingEmbedder::new(768).map_err(err)?;
    let config = CauseConfig::default();
    let data = EmbeddedDialogs::new(&train, &embedder).map_err(err)?;
    let trained = train_cause_model(&data, None, &config, 13).map_err(err)?;
    let pred = predict_corpus(&trained.final_model, &train, &gold_emotions(&train), &embedder).map_err(err)?;
    let f1 = score_conversations(&pred, &train, MatchMode::Proportional).map_err(err)?.weighted_f1;
    let detail = format!(
        "10 dialogs, {} epochs, d_h {}, {} layers: training proportional F1 {f1:.3}",
        config.epochs, config.hidden_size, config.num_layers
    );
    ensure(config.epochs <= 200 && f1 >= 0.95, || detail.clone())?;
    Ok(detail)
}

fn c6_usefulness() -> Outcome {
    let (train, dev) = official_split()?;
    let (embedder, name) = encoder()?;
    let config = CauseConfig::default();
    let train_data = EmbeddedDialogs::new(&train, embedder.as_ref()).map_err(err)?;
    let dev_data = EmbeddedDialogs::new(&dev, embedder.as_ref()).map_err(err)?;
    let trained = train_cause_model(&train_data, Some(&dev_data), &config, 13).map_err(err)?;
    let emotions = gold_emotions(&dev);
    let pred = predict_corpus(&trained.best_model, &dev, &emotions, embedder.as_ref()).map_err(err)?;
    let model = score_conversations(&pred, &dev, MatchMode::Proportional).map_err(err)?.weighted_f1;
    let heuristic = score_conversations(&baseline(&dev, &emotions), &dev, MatchMode::Proportional)
        .map_err(err)?
        .weighted_f1;
    let detail = format!("{name} embeddings, gold emotions: model {model:.4} vs self+previous {heuristic:.4}");
    ensure(model > heuristic, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 7: emotion stage

/// F1 per class of the fine-tuned classifier, in label order
/// (neutral, anger, disgust, fear, joy, sadness, surprise).
const FINE_TUNED_F1: [f64; 7] = [0.70, 0.57, 0.42, 0.51, 0.63, 0.52, 0.66];
const FINE_TUNED_WEIGHTED: f64 = 0.64;
const FINE_TUNED_MACRO: f64 = 0.57;

fn c7a_reweighted_row() -> Outcome {
    let per_class: BTreeMap<EmotionLabel, f64> = EmotionLabel::ALL.into_iter().zip(FINE_TUNED_F1).collect();
    let macro_avg = FINE_TUNED_F1.iter().sum::<f64>() / 7.0;
    ensure((macro_avg - FINE_TUNED_MACRO).abs() < 0.005, || format!("row macro {macro_avg:.4} != 0.57"))?;
    let (_, dev) = official_split()?;
    let mut supports: BTreeMap<EmotionLabel, usize> = BTreeMap::new();
    for label in gold_emotions(&dev).into_iter().flatten() {
        *supports.entry(label).or_default() += 1;
    }
    let weighted = weighted_average(&per_class, &supports).map_err(err)?.weighted;
    let detail = format!("dev supports {supports:?}: weighted {weighted:.4} (reported {FINE_TUNED_WEIGHTED})");
    ensure((weighted - FINE_TUNED_WEIGHTED).abs() <= 0.02, || detail.clone())?;
    Ok(detail)
}

fn local_vs_neutral(
    train: &[Conversation],
    dev: &[Conversation],
    embedder: &dyn Embedder,
    config: &LocalClassifierConfig,
) -> Result<(f64, f64), String> {
    let model = train_local_classifier(train, embedder, config, 7).map_err(err)?;
    let mut pred = Vec::new();
    for conv in dev {
        pred.extend(model.predict(conv, embedder).map_err(err)?);
    }
    let gold: Vec<EmotionLabel> = gold_emotions(dev).into_iter().flatten().collect();
    let neutral = vec![EmotionLabel::Neutral; gold.len()];
    Ok((
        classification_f1(&pred, &gold).map_err(err)?.weighted_f1,
        classification_f1(&neutral, &gold).map_err(err)?.weighted_f1,
    ))
}

fn c7b_local_classifier() -> Outcome {
    let (train, dev) = official_split()?;
    let (embedder, name) = encoder()?;
    let (model, neutral) = local_vs_neutral(&train, &dev, embedder.as_ref(), &LocalClassifierConfig::default())?;
    let detail = format!("{name} embeddings, dev weighted F1: local {model:.4} vs always-neutral {neutral:.4}");
    ensure(model > neutral, || detail.clone())?;
    Ok(detail)
}

fn c7b_local_classifier_synthetic() -> Outcome {
    let corpus = common::corpus(200, 71);
    let (train, dev) = split_corpus(&corpus, 0.1, DEFAULT_SPLIT_SEED).map_err(err)?;
    let embedder = HashingEmbedder::new(256).map_err(err)?;
    let (model, neutral) = local_vs_neutral(&train, &dev, &embedder, &LocalClassifierConfig::default())?;
    let detail = format!("synthetic dev weighted F1: local {model:.4} vs always-neutral {neutral:.4}");
    ensure(model > neutral, || detail.clone())?;
    Ok(detail)
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn golden_conversation() -> Conversation {
    let utt = |index: usize, speaker: &str, text: &str, label: EmotionLabel| Utterance {
        index,
        speaker: speaker.into(),
        text: text.into(),
        gold_emotion: Some(label),
    };
    Conversation {
        id: "golden".into(),
        utterances: vec![
            utt(1, "Monica", "Okay, everybody, relax. This is not even a date.", EmotionLabel::Neutral),
            utt(2, "Chandler", "Wait, \"<UTT_1>\" is a $1 date? Oh my God!", EmotionLabel::Surprise),
            utt(3, "Ross", "I can't believe this is happening.", EmotionLabel::Sadness),
        ],
        gold_pairs: Vec::new(),
    }
}

fn few_shot_template() -> PromptTemplate {
    let ex = |previous: Option<&str>, target: &str, label| Exemplar {
        previous: previous.map(str::to_string),
        target: target.into(),
        label,
    };
    let exemplars = vec![
        ex(None, "Hi, everybody.", EmotionLabel::Neutral),
        ex(Some("You ate my sandwich?"), "Get out of my apartment!", EmotionLabel::Anger),
        ex(Some("He licked the pole."), "Ew, that is so gross.", EmotionLabel::Disgust),
        ex(Some("Did you hear that noise?"), "I'm scared, hold my hand.", EmotionLabel::Fear),
        ex(Some("We got the apartment!"), "This is the best day ever!", EmotionLabel::Joy),
        ex(Some("She left this morning."), "I miss her so much.", EmotionLabel::Sadness),
        ex(Some("I'm moving to London."), "What? Since when?", EmotionLabel::Surprise),
    ];
    PromptTemplate::new(PromptTemplate::default().instruction, exemplars).unwrap()
}

fn golden_outputs() -> Result<Vec<(&'static str, String)>, String> {
    let conv = golden_conversation();
    let zero = PromptTemplate::default();
    let reordered = PromptTemplate::new(
        "Current line: <UTT_2>\nLine before it: <UTT_1>\nReply with one emotion word.",
        Vec::new(),
    )
    .map_err(err)?;
    Ok(vec![
        ("zero_shot_t1.json", json(&build_prompt(&zero, &conv, 1).map_err(err)?)),
        ("zero_shot_t2.json", json(&build_prompt(&zero, &conv, 2).map_err(err)?)),
        ("few_shot_t3.json", json(&build_prompt(&few_shot_template(), &conv, 3).map_err(err)?)),
        ("reordered_placeholders_t2.json", json(&build_prompt(&reordered, &conv, 2).map_err(err)?)),
        ("finetune.jsonl", to_jsonl(&build_finetune_dataset(std::slice::from_ref(&conv), &zero).map_err(err)?).map_err(err)?),
    ])
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).unwrap() + "\n"
}

fn c7c_golden_prompts() -> Outcome {
    let bless = std::env::var_os("ECPE_BLESS_GOLDEN").is_some();
    let dir = golden_dir();
    let outputs = golden_outputs()?;
    for (name, text) in &outputs {
        let path = dir.join(name);
        if bless {
            std::fs::create_dir_all(&dir).map_err(err)?;
            std::fs::write(&path, text).map_err(err)?;
            continue;
        }
        let expected = std::fs::read_to_string(&path)
            .map_err(|e| format!("{}: {e} (set ECPE_BLESS_GOLDEN=1 to create it)", path.display()))?;
        ensure(&expected == text, || format!("{name} differs from the golden file:\n{text}"))?;
    }
    Ok(format!("{} golden files match byte for byte{}", outputs.len(), if bless { " (blessed)" } else { "" }))
}

// ---------------------------------------------------------------------------
// 8: architectural invariants

fn small_config() -> CauseConfig {
    CauseConfig {
        hidden_size: 32,
        num_layers: 2,
        head_hidden: 32,
        learning_rate: 3e-3,
        epochs: 30,
        batch_size: 8,
        ..CauseConfig::default()
    }
}

fn c8_invariants() -> Outcome {
    let corpus = common::corpus(40, 8);
    let embedder = HashingEmbedder::new(128).map_err(err)?;
    let data = EmbeddedDialogs::new(&corpus, &embedder).map_err(err)?;
    let model = train_cause_model(&data, None, &small_config(), 21).map_err(err)?.final_model;

    let dir = tempfile::tempdir().map_err(err)?;
    let path = dir.path().join("cause.ckpt");
    model.save(&path).map_err(err)?;
    let reloaded = CauseModel::load(&path, Some(embedder.id())).map_err(err)?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut pairs, mut targets, mut candidates) = (0, 0, 0);
    for conv in &corpus {
        let emotions: Vec<EmotionLabel> =
            (0..conv.len()).map(|_| EmotionLabel::ALL[rng.gen_range(0..EmotionLabel::ALL.len())]).collect();
        let predicted = predict_causes(&model, conv, &emotions, &embedder).map_err(err)?;
        let again = predict_causes(&reloaded, conv, &emotions, &embedder).map_err(err)?;
        ensure(predicted == again, || format!("{}: reloaded checkpoint predicts differently", conv.id))?;
        for p in &predicted {
            ensure(p.cause_index <= p.target_index, || format!("{}: cause after target in {p:?}", conv.id))?;
            ensure(!emotions[p.target_index - 1].is_neutral(), || format!("{}: neutral target in {p:?}", conv.id))?;
            ensure(p.emotion == emotions[p.target_index - 1], || format!("{}: emotion mismatch in {p:?}", conv.id))?;
        }
        pairs += predicted.len();

        let contextual = model.contextualize(&embed_conversation(conv, &embedder).map_err(err)?).map_err(err)?;
        let speakers = speaker_encodings(conv, model.max_speakers).map_err(err)?;
        for (p, &emotion) in emotions.iter().enumerate() {
            let t = p + 1;
            let built = build_pair_candidates(conv, t, emotion, &contextual, &speakers);
            if emotion.is_neutral() {
                ensure(built.is_err(), || format!("{}: neutral utterance {t} got candidates", conv.id))?;
                continue;
            }
            let built = built.map_err(err)?;
            let causes: Vec<usize> = built.iter().map(|c| c.cause_index).collect();
            ensure(causes == (1..=t).collect::<Vec<_>>(), || format!("{}: target {t} has candidates {causes:?}", conv.id))?;
            targets += 1;
            candidates += built.len();
        }
    }
    ensure(pairs > 0, || "the trained model predicted no pairs at all".into())?;
    ensure(model.to_bytes().map_err(err)? == reloaded.to_bytes().map_err(err)?, || "archive bytes changed on reload".into())?;
    Ok(format!(
        "{} dialogs: {pairs} predicted pairs, {targets} targets / {candidates} candidates, reload identical",
        corpus.len()
    ))
}

// ---------------------------------------------------------------------------
// 9: analysis

fn c9a_distance_mode() -> Outcome {
    let corpus = official_corpus()?;
    let profile = distance_profile(&[], &keyed_pairs(&corpus)).map_err(err)?;
    let mode = profile.gold_mode();
    let counts: Vec<(i64, usize)> = profile.buckets.iter().filter(|b| b.gold > 0).map(|b| (b.distance, b.gold)).take(6).collect();
    let detail = format!("gold distance mode {mode:?}; first buckets {counts:?}");
    ensure(mode == Some(0), || detail.clone())?;
    Ok(detail)
}

fn c9b_confusion_rows() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for round in 0..200 {
        let n = rng.gen_range(0..300);
        let gold: Vec<EmotionLabel> = (0..n).map(|_| EmotionLabel::ALL[rng.gen_range(0..7)]).collect();
        let pred: Vec<EmotionLabel> = (0..n).map(|_| EmotionLabel::ALL[rng.gen_range(0..7)]).collect();
        let m = confusion(&pred, &gold).map_err(err)?;
        for label in EmotionLabel::ALL {
            let row: usize = EmotionLabel::ALL.iter().map(|&p| m.count(label, p)).sum();
            let support = gold.iter().filter(|&&g| g == label).count();
            ensure(row == support, || format!("round {round}: row {label:?} sums to {row}, gold count {support}"))?;
        }
        ensure(m.total() == n, || format!("round {round}: total {} != {n}", m.total()))?;
    }
    let corpus = common::corpus(100, 90);
    let gold: Vec<EmotionLabel> = gold_emotions(&corpus).into_iter().flatten().collect();
    let m = confusion(&gold, &gold).map_err(err)?;
    for label in EmotionLabel::ALL {
        let support = gold.iter().filter(|&&g| g == label).count();
        ensure(m.count(label, label) == support, || format!("diagonal of {label:?} is not its gold count"))?;
    }
    Ok("200 random label sequences and a synthetic corpus: row sums equal gold counts".into())
}

fn pair(conv: &str, cause: usize, target: usize, emotion: EmotionLabel, start: usize, end: usize) -> KeyedPair {
    KeyedPair::new(
        conv,
        EmotionCausePair {
            cause_index: cause,
            target_index: target,
            emotion,
            cause_span: CharSpan::new(start, end),
        },
    )
}

/// Filters both pair lists to targets whose predicted label equals a
/// non-neutral gold label, then scores proportionally.
fn manual_filter_oracle(
    pred_pairs: &[KeyedPair],
    gold_pairs: &[KeyedPair],
    pred_labels: &BTreeMap<(String, usize), EmotionLabel>,
    gold_labels: &BTreeMap<(String, usize), EmotionLabel>,
) -> Option<f64> {
    let mut keep = BTreeSet::new();
    for (key, gold) in gold_labels {
        if *gold != EmotionLabel::Neutral && pred_labels.get(key) == Some(gold) {
            keep.insert(key.clone());
        }
    }
    if keep.is_empty() {
        return None;
    }
    let filter = |pairs: &[KeyedPair]| -> Vec<KeyedPair> {
        let mut out = Vec::new();
        for p in pairs {
            if keep.contains(&(p.conversation.clone(), p.pair.target_index)) {
                out.push(p.clone());
            }
        }
        out
    };
    Some(score_pairs(&filter(pred_pairs), &filter(gold_pairs), MatchMode::Proportional).unwrap().weighted_f1)
}

fn labels_of(conv: &str, labels: &[EmotionLabel]) -> BTreeMap<(String, usize), EmotionLabel> {
    labels.iter().enumerate().map(|(p, &l)| ((conv.to_string(), p + 1), l)).collect()
}

fn labelled(conv: &str, labels: &[EmotionLabel], len: usize) -> Conversation {
    Conversation {
        id: conv.into(),
        utterances: labels
            .iter()
            .enumerate()
            .map(|(p, &l)| Utterance {
                index: p + 1,
                speaker: "A".into(),
                text: "x".repeat(len),
                gold_emotion: Some(l),
            })
            .collect(),
        gold_pairs: Vec::new(),
    }
}

fn c9c_cause_by_emotion() -> Outcome {
    use EmotionLabel::*;
    // Targets 2 (joy) and 4 (sadness) are classified correctly, 3 is not.
    let gold_labels = [Neutral, Joy, Anger, Sadness];
    let pred_labels = [Neutral, Joy, Disgust, Sadness];
    let gold = vec![
        pair("c", 1, 2, Joy, 0, 10),
        pair("c", 3, 3, Anger, 0, 12),
        pair("c", 2, 4, Sadness, 0, 8),
        pair("c", 4, 4, Sadness, 0, 12),
    ];
    let pred = vec![
        pair("c", 1, 2, Joy, 0, 10),
        pair("c", 3, 3, Disgust, 0, 12),
        pair("c", 2, 4, Sadness, 0, 4),
        pair("c", 3, 4, Sadness, 0, 12),
    ];
    let gm = label_map(&[labelled("c", &gold_labels, 12)]);
    let pm = label_map(&[labelled("c", &pred_labels, 12)]);
    let got = cause_scores_by_emotion(&pred, &gold, &pm, &gm).map_err(err)?;
    let report = got.report.ok_or("fixture produced no report")?;
    // joy: P = R = 1; sadness: P = 1/2, R = 1/4, F1 = 1/3; weights 1 and 2.
    let hand = (1.0 + 2.0 / 3.0) / 3.0;
    ensure((report.weighted_f1 - hand).abs() <= TOL, || format!("fixture: {} != {hand}", report.weighted_f1))?;
    let oracle = manual_filter_oracle(&pred, &gold, &labels_of("c", &pred_labels), &labels_of("c", &gold_labels));
    ensure(oracle == Some(report.weighted_f1), || format!("fixture: oracle {oracle:?}"))?;
    ensure(got.qualifying_targets == 2, || format!("fixture: {} qualifying targets", got.qualifying_targets))?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let rounds = 300;
    for round in 0..rounds {
        let n = rng.gen_range(1..=6);
        let draw = |rng: &mut ChaCha8Rng| EmotionLabel::ALL[rng.gen_range(0..4)];
        let gold_labels: Vec<EmotionLabel> = (0..n).map(|_| draw(&mut rng)).collect();
        let pred_labels: Vec<EmotionLabel> =
            gold_labels.iter().map(|&g| if rng.gen_bool(0.6) { g } else { draw(&mut rng) }).collect();
        let random_pairs = |labels: &[EmotionLabel], rng: &mut ChaCha8Rng| -> Vec<KeyedPair> {
            let mut out = Vec::new();
            for (p, &l) in labels.iter().enumerate() {
                if l.is_neutral() {
                    continue;
                }
                for _ in 0..rng.gen_range(0..=2) {
                    let start = rng.gen_range(0..10);
                    out.push(pair("r", rng.gen_range(1..=p + 1), p + 1, l, start, rng.gen_range(start + 1..=12)));
                }
            }
            out
        };
        let gold = random_pairs(&gold_labels, &mut rng);
        let pred = random_pairs(&pred_labels, &mut rng);
        let got = cause_scores_by_emotion(
            &pred,
            &gold,
            &label_map(&[labelled("r", &pred_labels, 12)]),
            &label_map(&[labelled("r", &gold_labels, 12)]),
        )
        .map_err(err)?;
        let oracle = manual_filter_oracle(&pred, &gold, &labels_of("r", &pred_labels), &labels_of("r", &gold_labels));
        let ok = match (&got.report, oracle) {
            (None, None) => true,
            (Some(r), Some(o)) => (r.weighted_f1 - o).abs() <= TOL,
            _ => false,
        };
        ensure(ok, || format!("round {round}: {:?} vs oracle {oracle:?}", got.report.as_ref().map(|r| r.weighted_f1)))?;
    }
    Ok(format!("3-target fixture = {hand:.4} by hand; {rounds} random fixtures match the filter oracle"))
}

// ---------------------------------------------------------------------------

fn panic_text(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() {
    let checks: &[(&str, fn() -> Outcome)] = &[
        ("1", c1_metric_oracle),
        ("2a", c2a_dominance_random),
        ("2b", c2b_dominance_dev),
        ("3", c3_corpus_statistics),
        ("4", c4_split),
        ("5", c5_capacity),
        ("6", c6_usefulness),
        ("7a", c7a_reweighted_row),
        ("7b", c7b_local_classifier),
        ("7b-synthetic", c7b_local_classifier_synthetic),
        ("7c", c7c_golden_prompts),
        ("8", c8_invariants),
        ("9a", c9a_distance_mode),
        ("9b", c9b_confusion_rows),
        ("9c", c9c_cause_by_emotion),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<_> = checks
        .iter()
        .filter(|(id, _)| filters.is_empty() || filters.iter().any(|f| id.starts_with(f.as_str())))
        .collect();

    let mut failed = Vec::new();
    for (id, check) in &selected {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| Err(format!("panic: {}", panic_text(p))));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id}: PASS ({secs:.1}s) {detail}"),
            Err(detail) => {
                println!("criterion {id}: FAIL ({secs:.1}s) {detail}");
                failed.push(*id);
            }
        }
    }
    println!("acceptance: {} of {} checks passed", selected.len() - failed.len(), selected.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
