//! File-driven training and inference: loading inputs, building prompts,
//! running the trainer and reading and writing checkpoint directories.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::decoder::Tokenizer;
use crate::error::{Error, Result};
use crate::evaluation::Prediction;
use crate::orem::head::{build_head_vocab, train_head, HeadTrainConfig, DEFAULT_VOCAB_SIZE};
use crate::orem::{assemble_prompt, mask_word_sets, HighFreqHead, Lexicon, Orem, PromptBundle, Template};
use crate::store::records::{read_captions, read_jsonl, write_jsonl};
use crate::store::{build_store, CaptionCorpus, CaptionRecord, Emb1Matrix, EmbeddingStore, IdRecord, QueryEmbedding, WordStore};
use crate::text::normalize_caption;
use crate::training::checkpoint::{
    load_tensors, model_path, save_tensors, CheckpointMeta, CONFIG_FILE, VERSION, VOCAB_FILE,
};
use crate::training::{train_samples, Ablation, CaptionModel, DataPaths, PromptConfig, Sample, StepMetrics, TrainRun, TrainingConfig};

/// Per-step metrics log written next to the checkpoint.
pub const METRICS_FILE: &str = "metrics.jsonl";

/// Everything read from a [`DataPaths`] set.
pub struct PipelineData {
    images: Emb1Matrix,
    image_rows: HashMap<i64, usize>,
    pub train_captions: Vec<CaptionRecord>,
    pub datastore: EmbeddingStore,
    pub datastore_captions: CaptionCorpus,
    pub orem: Orem,
}

/// Fails with the first missing input, naming its config key.
pub fn check_inputs(paths: &DataPaths) -> Result<()> {
    for (key, p) in paths.all() {
        if !p.exists() {
            return Err(Error::Config(format!("data.{key}: {} does not exist", p.display())));
        }
    }
    Ok(())
}

impl PipelineData {
    pub fn load(paths: &DataPaths, prompt: &PromptConfig) -> Result<Self> {
        check_inputs(paths)?;
        let images = Emb1Matrix::read(&paths.image_embeddings)?;
        let image_recs: Vec<IdRecord> = read_jsonl(&paths.image_ids)?;
        if image_recs.len() != images.count {
            return Err(Error::CountMismatch {
                vectors: images.count,
                ids: image_recs.len(),
            });
        }
        let mut image_rows = HashMap::with_capacity(image_recs.len());
        for (row, r) in image_recs.iter().enumerate() {
            if image_rows.insert(r.image_id, row).is_some() {
                return Err(Error::DuplicateId(r.image_id));
            }
        }
        let train_captions = read_captions(&paths.train_captions)?;
        for c in &train_captions {
            if !image_rows.contains_key(&c.image_id) {
                return Err(Error::Invalid(format!("caption {} refers to unknown image {}", c.id, c.image_id)));
            }
        }
        let datastore = build_store(&paths.datastore_embeddings, &paths.datastore_ids)?;
        let datastore_captions = CaptionCorpus::load(&paths.datastore_captions)?;
        datastore_captions.check_matches(&datastore)?;
        let orem = Orem {
            head: HighFreqHead::load(&paths.head)?,
            lexicon: Lexicon::load(&paths.lexicon)?,
            word_store: WordStore::load(&paths.word_embeddings, &paths.words)?,
            thresholds: prompt.thresholds,
            k: prompt.k,
        };
        Ok(Self {
            images,
            image_rows,
            train_captions,
            datastore,
            datastore_captions,
            orem,
        })
    }

    pub fn image_ids(&self) -> Vec<i64> {
        let mut ids: Vec<i64> = self.image_rows.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn image_embedding(&self, image_id: i64) -> Result<&[f32]> {
        self.image_rows
            .get(&image_id)
            .map(|&r| self.images.row(r))
            .ok_or_else(|| Error::Invalid(format!("unknown image {image_id}")))
    }

    /// Training captions grouped by image, normalized.
    pub fn references(&self) -> BTreeMap<i64, Vec<String>> {
        let mut refs: BTreeMap<i64, Vec<String>> = BTreeMap::new();
        for c in &self.train_captions {
            refs.entry(c.image_id).or_default().push(normalize_caption(&c.text));
        }
        refs
    }

    /// Word vocabulary covering captions, retrieved sentences, head words and
    /// template literals.
    pub fn tokenizer(&self) -> Tokenizer {
        let captions: Vec<String> = self
            .train_captions
            .iter()
            .map(|c| c.text.as_str())
            .chain(self.datastore_captions.iter().map(|c| c.text.as_str()))
            .map(normalize_caption)
            .collect();
        let literals = Template::all_literals();
        Tokenizer::build(
            captions
                .iter()
                .map(String::as_str)
                .chain(self.orem.head.vocab().iter().map(String::as_str))
                .chain(std::iter::once(literals.as_str())),
        )
    }

    /// The prompt for one image, or `None` when prompts are ablated. The
    /// image's own captions are excluded from retrieval.
    pub fn prompt(&self, image_id: Option<i64>, image_emb: &[f32], ablation: &Ablation, tokenizer: &Tokenizer) -> Result<Option<PromptBundle>> {
        if !ablation.use_prompt {
            return Ok(None);
        }
        let q = QueryEmbedding::new(image_emb.to_vec())?;
        let ex = self.orem.extract(&q, &self.datastore, &self.datastore_captions, image_id)?;
        let ws = mask_word_sets(ex.word_sets, ablation.use_objects, ablation.use_relations);
        assemble_prompt(ws, ablation.template_id, tokenizer).map(Some)
    }

    /// One sample per training caption, in file order.
    pub fn samples(&self, tokenizer: &Tokenizer, ablation: &Ablation) -> Result<Vec<Sample>> {
        let mut prompts: HashMap<i64, Vec<usize>> = HashMap::new();
        let ids = self.image_ids();
        let built: Vec<Result<(i64, Vec<usize>)>> = ids
            .par_iter()
            .map(|&id| {
                let p = self.prompt(Some(id), self.image_embedding(id)?, ablation, tokenizer)?;
                Ok((id, p.map(|b| b.token_ids).unwrap_or_default()))
            })
            .collect();
        for b in built {
            let (id, p) = b?;
            prompts.insert(id, p);
        }
        self.train_captions
            .iter()
            .map(|c| {
                Ok(Sample {
                    image_id: c.image_id,
                    image_emb: self.image_embedding(c.image_id)?.to_vec(),
                    prompt_ids: prompts[&c.image_id].clone(),
                    caption_ids: tokenizer.encode(&normalize_caption(&c.text))?,
                })
            })
            .collect()
    }
}

/// Fits a head on image embeddings against the words of their captions.
pub fn pretrain_head(
    images: &[(Vec<f32>, Vec<String>)],
    vocab_size: usize,
    cfg: HeadTrainConfig,
) -> Result<(HighFreqHead, Vec<f64>)> {
    let vocab = build_head_vocab(images.iter().flat_map(|(_, caps)| caps.iter().map(String::as_str)), vocab_size);
    let examples: Vec<(Vec<f32>, HashSet<String>)> = images
        .iter()
        .map(|(emb, caps)| (emb.clone(), caps.iter().flat_map(|c| crate::text::words(c)).collect()))
        .collect();
    train_head(vocab, &examples, cfg)
}

/// [`pretrain_head`] over the files of a data set, before any head exists.
pub fn pretrain_head_from_files(paths: &DataPaths, cfg: HeadTrainConfig) -> Result<(HighFreqHead, Vec<f64>)> {
    let images = Emb1Matrix::read(&paths.image_embeddings)?;
    let recs: Vec<IdRecord> = read_jsonl(&paths.image_ids)?;
    if recs.len() != images.count {
        return Err(Error::CountMismatch {
            vectors: images.count,
            ids: recs.len(),
        });
    }
    let mut by_image: BTreeMap<i64, Vec<String>> = BTreeMap::new();
    for c in read_captions(&paths.train_captions)? {
        by_image.entry(c.image_id).or_default().push(c.text);
    }
    let pairs: Vec<(Vec<f32>, Vec<String>)> = recs
        .iter()
        .enumerate()
        .map(|(row, r)| (images.row(row).to_vec(), by_image.get(&r.image_id).cloned().unwrap_or_default()))
        .collect();
    pretrain_head(&pairs, DEFAULT_VOCAB_SIZE, cfg)
}

/// A trained model with everything needed to caption new images.
pub struct LoadedCheckpoint {
    pub config: TrainingConfig,
    pub tokenizer: Tokenizer,
    pub model: CaptionModel<f32>,
    pub meta: CheckpointMeta,
}

impl LoadedCheckpoint {
    /// Caption for one image given its prompt ids.
    pub fn caption(&self, image_emb: &[f32], prompt_ids: &[usize], beam_size: usize) -> Result<String> {
        let ids = self.model.generate(image_emb, prompt_ids, beam_size, self.config.max_caption_len)?;
        self.tokenizer.decode(&ids)
    }
}

pub fn save_checkpoint(dir: &Path, config: &TrainingConfig, tokenizer: &Tokenizer, model: &CaptionModel<f32>, meta: &CheckpointMeta) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_tensors(model_path(dir), model)?;
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, config.to_json() + "\n").map_err(|e| Error::io(&cfg_path, e))?;
    tokenizer.save(dir.join(VOCAB_FILE))?;
    meta.save(dir)
}

pub fn load_checkpoint(dir: &Path) -> Result<LoadedCheckpoint> {
    let meta = CheckpointMeta::load(dir)?;
    let cfg_path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let config = TrainingConfig::from_json(&text)?;
    if config.hash() != meta.config_hash {
        return Err(Error::Checkpoint("config.json does not match the recorded hash".into()));
    }
    let tokenizer = Tokenizer::load(dir.join(VOCAB_FILE))?;
    let mut model = CaptionModel::init(0, &config.model, tokenizer.len(), config.ablation.freeze_decoder_layers)?;
    load_tensors(model_path(dir), &mut model)?;
    Ok(LoadedCheckpoint {
        config,
        tokenizer,
        model,
        meta,
    })
}

/// Trains from loaded data without touching the filesystem.
pub fn train_on(
    config: &TrainingConfig,
    data: &PipelineData,
    on_step: impl FnMut(&StepMetrics),
) -> Result<(Tokenizer, TrainRun)> {
    config.validate()?;
    let tokenizer = data.tokenizer();
    let samples = data.samples(&tokenizer, &config.ablation)?;
    let model = CaptionModel::init(config.seed, &config.model, tokenizer.len(), config.ablation.freeze_decoder_layers)?;
    let run = train_samples(config, model, &samples, on_step)?;
    Ok((tokenizer, run))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub steps: u64,
    pub epoch_losses: Vec<f64>,
}

/// Trains from `config.data` and writes a checkpoint directory with a
/// per-step metrics log to `config.out_dir`. Every input is checked before
/// training starts.
pub fn train(config: &TrainingConfig) -> Result<TrainOutput> {
    config.validate()?;
    let paths = config
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("data paths are required for training".into()))?;
    let out = config
        .out_dir
        .clone()
        .ok_or_else(|| Error::Config("out_dir is required for training".into()))?;
    let data = PipelineData::load(paths, &config.prompt)?;
    let mut metrics = Vec::new();
    let (tokenizer, run) = train_on(config, &data, |m| metrics.push(*m))?;
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let metrics_path = out.join(METRICS_FILE);
    write_jsonl(&metrics_path, &metrics)?;
    let meta = CheckpointMeta {
        version: VERSION,
        step: run.steps.last().map_or(0, |s| s.step),
        epoch: run.epoch_losses.len(),
        config_hash: config.hash(),
        last_epoch_loss: run.epoch_losses.last().copied(),
    };
    save_checkpoint(&out, config, &tokenizer, &run.model, &meta)?;
    Ok(TrainOutput {
        checkpoint: out,
        metrics: metrics_path,
        steps: meta.step,
        epoch_losses: run.epoch_losses,
    })
}

/// Captions every image of `data`, in ascending image id order.
pub fn caption_images(
    model: &CaptionModel<f32>,
    tokenizer: &Tokenizer,
    data: &PipelineData,
    config: &TrainingConfig,
    beam_size: usize,
) -> Result<Vec<Prediction>> {
    data.image_ids()
        .par_iter()
        .map(|&id| {
            let emb = data.image_embedding(id)?;
            let prompt = data.prompt(Some(id), emb, &config.ablation, tokenizer)?;
            let ids = model.generate(emb, prompt.as_ref().map_or(&[][..], |p| &p.token_ids), beam_size, config.max_caption_len)?;
            Ok(Prediction {
                image_id: id,
                caption: tokenizer.decode(&ids)?,
            })
        })
        .collect()
}
