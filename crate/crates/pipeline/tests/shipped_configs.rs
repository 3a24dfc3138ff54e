use std::path::Path;

use ecpe_core::emotion::BackendKind;
use ecpe_core::embed::EmbedderSpec;
use ecpe_pipeline::parse_config;

fn parse(name: &str) -> ecpe_pipeline::PipelineConfig {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let text = std::fs::read_to_string(dir.join(name)).unwrap();
    let lookup = |k: &str| (k == "ECPE_TRAIN_JSON").then(|| "/data/train.json".to_string());
    parse_config(&text, &dir, &lookup).unwrap_or_else(|e| panic!("{name}: {e}")).0
}

#[test]
fn full_config_uses_bert_and_the_finetuned_route() {
    let c = parse("full.toml");
    assert_eq!(c.emotion.backend, BackendKind::RemoteFinetuned);
    assert!(matches!(c.embedder, EmbedderSpec::Bert { .. }));
    assert_eq!(c.cause.model, ecpe_core::cause::CauseConfig::default());
    assert_eq!(c.data.train, Path::new("/data/train.json"));
    assert_eq!(c.emotion.remote.model, "gpt-3.5-turbo-1106");
}

#[test]
fn offline_config_needs_no_network() {
    let c = parse("offline.toml");
    assert_eq!(c.emotion.backend, BackendKind::Local);
    assert!(matches!(c.embedder, EmbedderSpec::Hashing { dim: 768 }));
}

#[test]
fn few_shot_config_has_one_exemplar_per_label() {
    let c = parse("few-shot.toml");
    let labels: std::collections::BTreeSet<_> = c.emotion.prompt.exemplars.iter().map(|e| e.label).collect();
    assert_eq!(c.emotion.prompt.exemplars.len(), 7);
    assert_eq!(labels.len(), 7);
}
