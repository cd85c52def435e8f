//! Seeded synthetic captioning task.
//!
//! Each image shows a subject doing something with an object, e.g. "a dog
//! riding a bike". Word vectors are random unit vectors; an image embedding is
//! the sum of its three word vectors plus noise, and so is every datastore
//! caption embedding. The datastore holds paraphrases of each scene under
//! separate pseudo-image ids, so retrieval for an image finds its own
//! paraphrases even with the image's own captions excluded.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::orem::head::HeadTrainConfig;
use crate::orem::PosTag;
use crate::pipeline::pretrain_head;
use crate::store::records::{write_jsonl, write_lines};
use crate::store::{CaptionRecord, Emb1Matrix, IdRecord};
use crate::training::{DataPaths, TrainingConfig};

pub const SUBJECTS: [&str; 8] = ["man", "woman", "boy", "girl", "dog", "cat", "horse", "bird"];
pub const RELATIONS: [&str; 6] = ["riding", "holding", "on", "with", "near", "under"];
pub const OBJECTS: [&str; 8] = ["bike", "ball", "table", "tree", "car", "boat", "bench", "kite"];
const FUNCTION_WORDS: [&str; 5] = ["a", "the", "is", "there", "outside"];

/// Datastore paraphrase patterns; `{s}`, `{r}`, `{o}` are the scene words.
const PARAPHRASES: [&str; 4] = [
    "a {s} {r} a {o}",
    "the {s} is {r} the {o}",
    "there is a {s} {r} a {o}",
    "a {s} {r} the {o} outside",
];

#[derive(Debug, Clone, Copy)]
pub struct SyntheticConfig {
    pub images: usize,
    pub dim: usize,
    /// Standard deviation of per-coordinate embedding noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    /// 50 images of dimension 32.
    fn default() -> Self {
        Self {
            images: 50,
            dim: 32,
            noise: 0.05,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scene {
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
}

impl Scene {
    pub fn words(&self) -> [&'static str; 3] {
        [SUBJECTS[self.subject], RELATIONS[self.relation], OBJECTS[self.object]]
    }

    fn render(&self, pattern: &str) -> String {
        let [s, r, o] = self.words();
        pattern.replace("{s}", s).replace("{r}", r).replace("{o}", o)
    }

    pub fn caption(&self) -> String {
        self.render(PARAPHRASES[0])
    }
}

/// In-memory synthetic data set.
pub struct SyntheticTask {
    pub scenes: Vec<Scene>,
    pub words: Vec<String>,
    pub word_vectors: Emb1Matrix,
    /// Row `i` is image `i`.
    pub images: Emb1Matrix,
    pub train_captions: Vec<CaptionRecord>,
    pub datastore: Emb1Matrix,
    pub datastore_ids: Vec<IdRecord>,
    pub datastore_captions: Vec<CaptionRecord>,
}

/// Image ids of datastore pseudo-images start here.
pub const PSEUDO_IMAGE_BASE: i64 = 1000;

impl SyntheticTask {
    pub fn generate(cfg: SyntheticConfig) -> Result<Self> {
        let total = SUBJECTS.len() * RELATIONS.len() * OBJECTS.len();
        if cfg.images == 0 || cfg.images > total {
            return Err(Error::Config(format!("images must be in 1..={total}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut all: Vec<Scene> = (0..total)
            .map(|i| Scene {
                subject: i / (RELATIONS.len() * OBJECTS.len()),
                relation: (i / OBJECTS.len()) % RELATIONS.len(),
                object: i % OBJECTS.len(),
            })
            .collect();
        all.shuffle(&mut rng);
        let scenes = all[..cfg.images].to_vec();

        let content: Vec<&str> = SUBJECTS.iter().chain(&RELATIONS).chain(&OBJECTS).copied().collect();
        let gauss = Normal::new(0.0, 1.0).expect("valid normal");
        let mut vectors = Vec::with_capacity(content.len() * cfg.dim);
        for _ in &content {
            let v: Vec<f64> = (0..cfg.dim).map(|_| gauss.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            vectors.extend(v.iter().map(|x| (x / norm) as f32));
        }
        let word_vectors = Emb1Matrix::new(content.len(), cfg.dim, vectors)?;
        let index = |w: &str| content.iter().position(|c| *c == w).expect("content word");
        let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::Config(e.to_string()))?;
        let embed = |scene: &Scene, rng: &mut ChaCha8Rng| -> Vec<f32> {
            let mut v = vec![0.0f32; cfg.dim];
            for w in scene.words() {
                for (a, b) in v.iter_mut().zip(word_vectors.row(index(w))) {
                    *a += b;
                }
            }
            v.iter().map(|x| x + noise.sample(rng) as f32).collect()
        };

        let mut image_data = Vec::with_capacity(cfg.images * cfg.dim);
        let mut train_captions = Vec::with_capacity(cfg.images);
        let mut store_data = Vec::new();
        let mut datastore_ids = Vec::new();
        let mut datastore_captions = Vec::new();
        for (i, scene) in scenes.iter().enumerate() {
            let image_id = i as i64;
            let emb = embed(scene, &mut rng);
            image_data.extend_from_slice(&emb);
            train_captions.push(CaptionRecord {
                id: image_id,
                image_id,
                text: scene.caption(),
            });
            // the image's own caption sits in the datastore too and must be excluded
            let mut push = |id: i64, image_id: i64, text: String, v: Vec<f32>| {
                store_data.extend_from_slice(&v);
                datastore_ids.push(IdRecord { id, image_id });
                datastore_captions.push(CaptionRecord { id, image_id, text });
            };
            push(image_id, image_id, scene.caption(), embed(scene, &mut rng));
            for (j, p) in PARAPHRASES.iter().enumerate() {
                let id = 10_000 + 10 * image_id + j as i64;
                push(id, PSEUDO_IMAGE_BASE + image_id, scene.render(p), embed(scene, &mut rng));
            }
        }
        let images = Emb1Matrix::new(cfg.images, cfg.dim, image_data)?;
        let datastore = Emb1Matrix::new(datastore_ids.len(), cfg.dim, store_data)?;
        Ok(Self {
            scenes,
            words: content.iter().map(|s| s.to_string()).collect(),
            word_vectors,
            images,
            train_captions,
            datastore,
            datastore_ids,
            datastore_captions,
        })
    }

    pub fn lexicon_text() -> String {
        let mut lines = Vec::new();
        for w in SUBJECTS.iter().chain(&OBJECTS) {
            lines.push(format!("{w}\t{}", PosTag::Noun));
        }
        for w in RELATIONS {
            let tag = if w.ends_with("ing") { PosTag::Gerund } else { PosTag::Preposition };
            lines.push(format!("{w}\t{tag}"));
        }
        for w in FUNCTION_WORDS {
            lines.push(format!("{w}\t{}", PosTag::Other));
        }
        lines.join("\n") + "\n"
    }

    /// Writes every input file plus a pretrained head under `dir` and returns
    /// paths relative to `dir`.
    pub fn write(&self, dir: &Path) -> Result<DataPaths> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = DataPaths {
            image_embeddings: "images.emb1".into(),
            image_ids: "images.ids.jsonl".into(),
            train_captions: "train_captions.jsonl".into(),
            datastore_embeddings: "datastore.emb1".into(),
            datastore_ids: "datastore.ids.jsonl".into(),
            datastore_captions: "datastore.captions.jsonl".into(),
            lexicon: "lexicon.tsv".into(),
            head: "head".into(),
            word_embeddings: "words.emb1".into(),
            words: "words.txt".into(),
        };
        let at = |p: &Path| dir.join(p);
        self.images.write(at(&paths.image_embeddings))?;
        let image_ids: Vec<IdRecord> = (0..self.images.count as i64).map(|i| IdRecord { id: i, image_id: i }).collect();
        write_jsonl(at(&paths.image_ids), &image_ids)?;
        write_jsonl(at(&paths.train_captions), &self.train_captions)?;
        self.datastore.write(at(&paths.datastore_embeddings))?;
        write_jsonl(at(&paths.datastore_ids), &self.datastore_ids)?;
        write_jsonl(at(&paths.datastore_captions), &self.datastore_captions)?;
        let lex = at(&paths.lexicon);
        fs::write(&lex, Self::lexicon_text()).map_err(|e| Error::io(&lex, e))?;
        self.word_vectors.write(at(&paths.word_embeddings))?;
        write_lines(at(&paths.words), &self.words)?;
        let pairs: Vec<(Vec<f32>, Vec<String>)> = self
            .train_captions
            .iter()
            .map(|c| (self.images.row(c.image_id as usize).to_vec(), vec![c.text.clone()]))
            .collect();
        let (head, _) = pretrain_head(&pairs, crate::orem::head::DEFAULT_VOCAB_SIZE, HeadTrainConfig::default())?;
        head.save(at(&paths.head))?;
        Ok(paths)
    }

    /// Writes the data set and a desk-scale `config.json` pointing at it.
    pub fn write_with_config(&self, dir: &Path, mut config: TrainingConfig) -> Result<TrainingConfig> {
        config.data = Some(self.write(dir)?);
        config.out_dir = Some("checkpoint".into());
        let path = dir.join("config.json");
        fs::write(&path, config.to_json() + "\n").map_err(|e| Error::io(&path, e))?;
        TrainingConfig::load(&path)
    }
}
