use std::path::{Path, PathBuf};

use rorpcap::decoder::Tokenizer;
use rorpcap::evaluation::Prediction;
use rorpcap::pipeline::{load_checkpoint, train, train_on, PipelineData, METRICS_FILE};
use rorpcap::store::records::{read_captions, read_jsonl};
use rorpcap::store::{build_store, Emb1Matrix, IdRecord};
use rorpcap::synthetic::{SyntheticConfig, SyntheticTask};
use rorpcap::tensor::ParamSet;
use rorpcap::text::normalize_caption;
use rorpcap::training::{CaptionModel, TrainingConfig};
use rorpcap::ErrorKind;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn small_task(dir: &Path, images: usize, epochs: usize) -> TrainingConfig {
    let task = SyntheticTask::generate(SyntheticConfig { images, ..SyntheticConfig::default() }).unwrap();
    let mut cfg = TrainingConfig::desk();
    cfg.epochs = epochs;
    task.write_with_config(dir, cfg).unwrap()
}

#[test]
fn train_writes_a_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_task(dir.path(), 10, 2);
    let out = train(&cfg).unwrap();
    assert_eq!(out.epoch_losses.len(), 2);
    assert_eq!(out.steps, 20);
    let metrics = std::fs::read_to_string(out.checkpoint.join(METRICS_FILE)).unwrap();
    assert_eq!(metrics.lines().count(), 20);

    let ck = load_checkpoint(&out.checkpoint).unwrap();
    assert_eq!(ck.meta.step, 20);
    assert_eq!(ck.config, cfg);
    let data = PipelineData::load(cfg.data.as_ref().unwrap(), &cfg.prompt).unwrap();
    let emb = data.image_embedding(0).unwrap();
    let prompt = data.prompt(Some(0), emb, &cfg.ablation, &ck.tokenizer).unwrap().unwrap();
    let a = ck.caption(emb, &prompt.token_ids, 3).unwrap();
    let b = ck.caption(emb, &prompt.token_ids, 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn edited_config_is_rejected_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_task(dir.path(), 4, 1);
    let out = train(&cfg).unwrap();
    let path = out.checkpoint.join("config.json");
    let text = std::fs::read_to_string(&path).unwrap().replace("\"epochs\": 1", "\"epochs\": 2");
    std::fs::write(&path, text).unwrap();
    let err = load_checkpoint(&out.checkpoint).err().expect("hash mismatch");
    assert_eq!(err.kind(), ErrorKind::Data);
}

#[test]
fn missing_input_is_reported_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_task(dir.path(), 4, 1);
    std::fs::remove_file(dir.path().join("lexicon.tsv")).unwrap();
    let err = train(&cfg).unwrap_err();
    assert!(err.to_string().contains("lexicon"), "{err}");
    assert!(!dir.path().join("checkpoint").exists());
}

#[test]
fn loss_average_falls_and_frozen_layers_stay_put() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_task(dir.path(), 50, 3);
    let data = PipelineData::load(cfg.data.as_ref().unwrap(), &cfg.prompt).unwrap();
    let (tok, run) = train_on(&cfg, &data, |_| {}).unwrap();
    let ema = &run.epoch_end_ema;
    assert!(ema[0] > ema[1] && ema[1] > ema[2], "{ema:?}");

    let init = CaptionModel::<f32>::init(cfg.seed, &cfg.model, tok.len(), true).unwrap();
    let mut frozen = 0;
    for (before, after) in init.params().iter().zip(run.model.params()) {
        assert_eq!(before.name, after.name);
        if run.model.is_frozen(&before.name) {
            frozen += 1;
            assert_eq!(before.data, after.data, "{} moved", before.name);
        } else if before.name.starts_with("decoder.layers.3") {
            assert_ne!(before.data, after.data, "{} did not move", before.name);
        }
    }
    assert!(frozen > 0);
}

#[test]
fn tokenizer_round_trips_fixture_captions() {
    let caps = read_captions(fixtures().join("orem/datastore.captions.jsonl")).unwrap();
    let norm: Vec<String> = caps.iter().map(|c| normalize_caption(&c.text)).collect();
    let tok = Tokenizer::build(norm.iter().map(String::as_str));
    for text in &norm {
        let ids = tok.encode(text).unwrap();
        assert_eq!(&tok.decode(&ids).unwrap(), text);
    }
    let dir = tempfile::tempdir().unwrap();
    tok.save(dir.path().join("vocab.txt")).unwrap();
    let back = Tokenizer::load(dir.path().join("vocab.txt")).unwrap();
    assert_eq!(back.len(), tok.len());
    assert_eq!(back.encode(&norm[0]).unwrap(), tok.encode(&norm[0]).unwrap());
}

#[test]
fn emb1_fixtures() {
    let dir = fixtures().join("emb1");
    let good = Emb1Matrix::read(dir.join("good.emb1")).unwrap();
    assert_eq!((good.count, good.dim), (3, 4));
    assert_eq!(good.row(2), &[9.0, 10.0, 11.0, 12.0]);
    let store = build_store(dir.join("good.emb1"), dir.join("good.ids.jsonl")).unwrap();
    assert_eq!(store.ids(), &[0, 1, 2]);
    let ids: Vec<IdRecord> = read_jsonl(dir.join("good.ids.jsonl")).unwrap();
    assert_eq!(ids[1], IdRecord { id: 1, image_id: 1 });

    let out = tempfile::tempdir().unwrap();
    good.write(out.path().join("copy.emb1")).unwrap();
    assert_eq!(
        std::fs::read(out.path().join("copy.emb1")).unwrap(),
        std::fs::read(dir.join("good.emb1")).unwrap()
    );
    for bad in ["bad_magic", "short_header", "empty", "truncated_payload", "trailing_bytes", "count_overflow"] {
        let err = Emb1Matrix::read(dir.join(format!("{bad}.emb1"))).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::Data, "{bad}: {err}");
    }
}

#[test]
fn prediction_lines_parse() {
    let p: Prediction = serde_json::from_str(r#"{"image_id": 4, "caption": "a dog"}"#).unwrap();
    assert_eq!(p.image_id, 4);
}
