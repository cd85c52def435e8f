use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decoder::{default_frozen, DecoderConfig, DEFAULT_BEAM};
use crate::error::{Error, Result};
use crate::orem::{ExtractionThresholds, Template};
use crate::ssm::MappingConfig;
use crate::store::DEFAULT_K;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingKind {
    #[default]
    Ssm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub use_prompt: bool,
    pub use_objects: bool,
    pub use_relations: bool,
    pub template_id: Template,
    pub freeze_decoder_layers: bool,
    pub mapping: MappingKind,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            use_prompt: true,
            use_objects: true,
            use_relations: true,
            template_id: Template::ContainsObjects,
            freeze_decoder_layers: true,
            mapping: MappingKind::Ssm,
        }
    }
}

/// Network sizes. The decoder width is the mapping network's `d_model`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub mapping: MappingConfig,
    pub decoder_layers: usize,
    pub decoder_heads: usize,
    pub decoder_ff: usize,
    pub context: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            mapping: MappingConfig::default(),
            decoder_layers: 12,
            decoder_heads: 12,
            decoder_ff: 3072,
            context: 1024,
        }
    }
}

impl ModelDims {
    pub fn desk() -> Self {
        Self {
            mapping: MappingConfig::desk(),
            decoder_layers: 4,
            decoder_heads: 4,
            decoder_ff: 256,
            context: 64,
        }
    }

    pub fn decoder(&self, vocab_size: usize, freeze: bool) -> DecoderConfig {
        DecoderConfig {
            vocab_size,
            d_model: self.mapping.d_model,
            n_layers: self.decoder_layers,
            n_heads: self.decoder_heads,
            d_ff: self.decoder_ff,
            context: self.context,
            frozen_below: if freeze { default_frozen(self.decoder_layers) } else { 0 },
        }
    }
}

/// Retrieval and extraction settings used to build prompts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub k: usize,
    pub thresholds: ExtractionThresholds,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            thresholds: ExtractionThresholds::default(),
        }
    }
}

/// Input files for file-driven training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    /// EMB1 of training images; row `i` belongs to `image_ids[i]`.
    pub image_embeddings: PathBuf,
    /// JSONL `{"id", "image_id"}` sidecar for `image_embeddings`.
    pub image_ids: PathBuf,
    /// JSONL `{"id", "image_id", "text"}` target captions.
    pub train_captions: PathBuf,
    /// Retrieval datastore: caption embeddings, their ids and texts.
    pub datastore_embeddings: PathBuf,
    pub datastore_ids: PathBuf,
    pub datastore_captions: PathBuf,
    /// `word<TAB>tag` lines.
    pub lexicon: PathBuf,
    /// Directory holding the high-frequency head files.
    pub head: PathBuf,
    pub word_embeddings: PathBuf,
    pub words: PathBuf,
}

impl DataPaths {
    pub fn all(&self) -> [(&'static str, &Path); 10] {
        [
            ("image_embeddings", &self.image_embeddings),
            ("image_ids", &self.image_ids),
            ("train_captions", &self.train_captions),
            ("datastore_embeddings", &self.datastore_embeddings),
            ("datastore_ids", &self.datastore_ids),
            ("datastore_captions", &self.datastore_captions),
            ("lexicon", &self.lexicon),
            ("head", &self.head),
            ("word_embeddings", &self.word_embeddings),
            ("words", &self.words),
        ]
    }

    /// Resolves relative paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.image_embeddings,
            &mut self.image_ids,
            &mut self.train_captions,
            &mut self.datastore_embeddings,
            &mut self.datastore_ids,
            &mut self.datastore_captions,
            &mut self.lexicon,
            &mut self.head,
            &mut self.word_embeddings,
            &mut self.words,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub epochs: usize,
    #[serde(default)]
    pub optimizer: AdamConfig,
    pub grad_clip: f64,
    pub seed: u64,
    /// Caption length including `<eos>`.
    pub max_caption_len: usize,
    #[serde(default)]
    pub ablation: Ablation,
    pub model: ModelDims,
    #[serde(default)]
    pub prompt: PromptConfig,
    pub beam_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataPaths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainingConfig {
    /// Batch 40, learning rate 9e-6, 5000 warm-up steps, 6 epochs.
    fn default() -> Self {
        Self {
            batch_size: 40,
            learning_rate: 9e-6,
            warmup_steps: 5000,
            epochs: 6,
            optimizer: AdamConfig::default(),
            grad_clip: 1.0,
            seed: 0,
            max_caption_len: 20,
            ablation: Ablation::default(),
            model: ModelDims::default(),
            prompt: PromptConfig::default(),
            beam_size: DEFAULT_BEAM,
            data: None,
            out_dir: None,
        }
    }
}

impl TrainingConfig {
    /// Small network and a short schedule that trains in seconds on one core.
    pub fn desk() -> Self {
        Self {
            batch_size: 1,
            learning_rate: 1e-3,
            warmup_steps: 20,
            max_caption_len: 16,
            model: ModelDims::desk(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.max_caption_len == 0 {
            return bad("max_caption_len must be positive");
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return bad("grad_clip must be positive");
        }
        if self.beam_size == 0 {
            return bad("beam_size must be positive");
        }
        let o = &self.optimizer;
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || o.eps.is_nan() || o.eps <= 0.0 {
            return bad("optimizer betas must be in [0, 1) and eps positive");
        }
        self.model.decoder(1, self.ablation.freeze_decoder_layers).validate()?;
        self.prompt.thresholds.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative data paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = cfg.data.as_mut() {
            d.rebase(base);
        }
        if let Some(o) = cfg.out_dir.as_mut() {
            if o.is_relative() {
                *o = base.join(&*o);
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
