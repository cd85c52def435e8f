//! `rorpcap` command-line driver.
//!
//! Exit codes: 0 success, 2 usage error, 3 data-format error, 4 numerical failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use rorpcap::evaluation::{evaluate, overlap_report, read_predictions, OverlapInput, Prediction};
use rorpcap::orem::{ExtractionThresholds, HighFreqHead, Lexicon, Orem, Template, WordSets};
use rorpcap::pipeline::{load_checkpoint, train, PipelineData};
use rorpcap::store::records::{read_captions, read_jsonl, write_jsonl};
use rorpcap::store::{build_store, knn_retrieve, CaptionCorpus, Emb1Matrix, EmbeddingStore, IdRecord, QueryEmbedding, WordStore};
use rorpcap::synthetic::{SyntheticConfig, SyntheticTask};
use rorpcap::text::normalize_caption;
use rorpcap::training::TrainingConfig;
use rorpcap::{Error, ErrorKind};

const STORE_EMBEDDINGS: &str = "datastore.emb1";
const STORE_IDS: &str = "datastore.ids.jsonl";
const STORE_CAPTIONS: &str = "datastore.captions.jsonl";

#[derive(Parser)]
#[command(name = "rorpcap", version, about = "Retrieval-prompted image captioning")]
struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate caption embeddings, ids and texts and copy them into a store directory.
    BuildDatastore {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        ids: PathBuf,
        #[arg(long)]
        captions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nearest datastore captions for a query embedding.
    Retrieve {
        #[command(flatten)]
        query: Query,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 7)]
        k: usize,
    },
    /// Object and relation words and the rendered prompt for a query embedding.
    Extract {
        #[command(flatten)]
        query: Query,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// Directory with head_weight.emb1, head_bias.emb1, head_vocab.txt.
        #[arg(long)]
        head: PathBuf,
        #[arg(long)]
        word_embeddings: PathBuf,
        #[arg(long)]
        words: PathBuf,
        /// Threshold overrides, inline JSON or a file path.
        #[arg(long)]
        thresholds_json: Option<String>,
        #[arg(long, default_value_t = 7)]
        k: usize,
        #[arg(long, default_value_t = 3)]
        template: u8,
    },
    /// Train from a JSON config; writes a checkpoint directory.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Caption an image embedding with a trained checkpoint.
    Generate {
        #[command(flatten)]
        query: Query,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 5)]
        beam: usize,
    },
    /// Corpus BLEU of predictions against reference captions.
    Eval {
        /// JSONL `{"image_id", "caption"}`.
        #[arg(long)]
        pred: PathBuf,
        /// Captions JSONL `{"id", "image_id", "text"}`.
        #[arg(long)]
        refs: PathBuf,
    },
    /// Overlap statistics between extracted words and reference captions.
    Stats {
        /// JSONL with `image_id`, `objects`, `relations` per line (the output of `extract --json`).
        #[arg(long)]
        extractions: PathBuf,
        #[arg(long)]
        refs: PathBuf,
    },
    /// Write the seeded synthetic task with a desk-scale config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        images: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args)]
struct Query {
    /// EMB1 file of query vectors.
    #[arg(long = "query-emb", alias = "image-emb")]
    emb: PathBuf,
    /// Ids sidecar for the query file; supplies each row's image id.
    #[arg(long = "query-ids", alias = "image-ids")]
    ids: Option<PathBuf>,
    #[arg(long, default_value_t = 0, conflicts_with = "all")]
    row: usize,
    /// Every row of the query file, one result per line.
    #[arg(long)]
    all: bool,
    /// Datastore image id to skip; defaults to the row's own image id when ids are given.
    #[arg(long = "exclude-image")]
    exclude_image: Option<i64>,
}

struct QueryRow {
    image_id: Option<i64>,
    exclude: Option<i64>,
    values: Vec<f32>,
}

impl Query {
    fn rows(&self) -> Result<Vec<QueryRow>, Error> {
        let m = Emb1Matrix::read(&self.emb)?;
        let ids: Option<Vec<IdRecord>> = self.ids.as_ref().map(read_jsonl).transpose()?;
        if let Some(ids) = &ids {
            if ids.len() != m.count {
                return Err(Error::CountMismatch { vectors: m.count, ids: ids.len() });
            }
        }
        let rows: Vec<usize> = if self.all { (0..m.count).collect() } else { vec![self.row] };
        rows.into_iter()
            .map(|r| {
                if r >= m.count {
                    return Err(Error::Invalid(format!("--row {r} out of range for {} rows", m.count)));
                }
                let image_id = ids.as_ref().map(|ids| ids[r].image_id);
                Ok(QueryRow {
                    image_id,
                    exclude: self.exclude_image.or(image_id),
                    values: m.row(r).to_vec(),
                })
            })
            .collect()
    }
}

fn load_store_dir(dir: &Path) -> Result<(EmbeddingStore, CaptionCorpus), Error> {
    let store = build_store(dir.join(STORE_EMBEDDINGS), dir.join(STORE_IDS))?;
    let corpus = CaptionCorpus::load(dir.join(STORE_CAPTIONS))?;
    corpus.check_matches(&store)?;
    Ok((store, corpus))
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string(v).expect("serializable output"));
}

#[derive(Serialize)]
struct RetrievedLine<'a> {
    id: i64,
    image_id: i64,
    score: f64,
    text: &'a str,
}

#[derive(Serialize)]
struct ExtractOutput<'a> {
    image_id: Option<i64>,
    neighbors: Vec<i64>,
    sentences: &'a [String],
    word_sets: &'a WordSets,
    objects: &'a [String],
    relations: &'a [String],
    rendered: &'a str,
}

#[derive(Deserialize)]
struct ExtractionLine {
    image_id: i64,
    objects: Vec<String>,
    relations: Vec<String>,
}

fn thresholds(arg: Option<&str>) -> Result<ExtractionThresholds, Error> {
    let Some(a) = arg else { return Ok(ExtractionThresholds::default()) };
    let text = if a.trim_start().starts_with('{') {
        a.to_owned()
    } else {
        std::fs::read_to_string(a).map_err(|e| Error::io(a, e))?
    };
    let t: ExtractionThresholds = serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("--thresholds-json: {e}")))?;
    t.validate().map_err(|e| Error::Invalid(format!("--thresholds-json: {e}")))?;
    Ok(t)
}

fn references(path: &Path) -> Result<BTreeMap<i64, Vec<String>>, Error> {
    let mut refs: BTreeMap<i64, Vec<String>> = BTreeMap::new();
    for c in read_captions(path)? {
        refs.entry(c.image_id).or_default().push(normalize_caption(&c.text));
    }
    Ok(refs)
}

fn run(cli: Cli) -> Result<(), Error> {
    let json = cli.json;
    match cli.command {
        Command::BuildDatastore { embeddings, ids, captions, out } => {
            let store = build_store(&embeddings, &ids)?;
            let caps = read_captions(&captions)?;
            CaptionCorpus::new(caps.clone())?.check_matches(&store)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            store.to_matrix().write(out.join(STORE_EMBEDDINGS))?;
            let recs: Vec<IdRecord> = (0..store.len())
                .map(|r| IdRecord { id: store.ids()[r], image_id: store.image_id(r).unwrap_or_default() })
                .collect();
            write_jsonl(out.join(STORE_IDS), &recs)?;
            write_jsonl(out.join(STORE_CAPTIONS), &caps)?;
            if json {
                print_json(&serde_json::json!({"count": store.len(), "dim": store.dim(), "out": out}));
            } else {
                println!("{} captions of dimension {} -> {}", store.len(), store.dim(), out.display());
            }
        }
        Command::Retrieve { query, store, k } => {
            let (store, corpus) = load_store_dir(&store)?;
            for q in query.rows()? {
                let qe = QueryEmbedding::new(q.values)?;
                let hits = knn_retrieve(&qe, &store, k, q.exclude)?;
                let lines: Vec<RetrievedLine> = hits
                    .iter()
                    .map(|h| {
                        let c = corpus.get(h.id).expect("corpus matches store");
                        RetrievedLine { id: h.id, image_id: c.image_id, score: h.score, text: &c.text }
                    })
                    .collect();
                if json {
                    print_json(&serde_json::json!({"image_id": q.image_id, "neighbors": lines}));
                } else {
                    for l in lines {
                        println!("{}\t{:.8}", l.id, l.score);
                    }
                }
            }
        }
        Command::Extract { query, store, lexicon, head, word_embeddings, words, thresholds_json, k, template } => {
            let template = Template::try_from(template)?;
            let (store, corpus) = load_store_dir(&store)?;
            let orem = Orem {
                head: HighFreqHead::load(&head)?,
                lexicon: Lexicon::load(&lexicon)?,
                word_store: WordStore::load(&word_embeddings, &words)?,
                thresholds: thresholds(thresholds_json.as_deref())?,
                k,
            };
            for q in query.rows()? {
                let qe = QueryEmbedding::new(q.values)?;
                let ex = orem.extract(&qe, &store, &corpus, q.exclude)?;
                let rendered = template.render(&ex.word_sets.wo, &ex.word_sets.wr)?;
                if json {
                    print_json(&ExtractOutput {
                        image_id: q.image_id,
                        neighbors: ex.neighbors.iter().map(|n| n.id).collect(),
                        sentences: &ex.sentences,
                        word_sets: &ex.word_sets,
                        objects: &ex.word_sets.wo,
                        relations: &ex.word_sets.wr,
                        rendered: &rendered,
                    });
                } else {
                    if let Some(id) = q.image_id {
                        println!("image: {id}");
                    }
                    println!("objects: {}", ex.word_sets.wo.join(", "));
                    println!("relations: {}", ex.word_sets.wr.join(", "));
                    println!("prompt: {rendered}");
                }
            }
        }
        Command::Train { config } => {
            let cfg = TrainingConfig::load(&config)?;
            let out = train(&cfg)?;
            if json {
                print_json(&out);
            } else {
                println!("{} steps, epoch losses {:?}", out.steps, out.epoch_losses);
                println!("checkpoint: {}", out.checkpoint.display());
                println!("metrics: {}", out.metrics.display());
            }
        }
        Command::Generate { query, checkpoint, beam } => {
            let ck = load_checkpoint(&checkpoint)?;
            let data = match (&ck.config.data, ck.config.ablation.use_prompt) {
                (Some(paths), true) => Some(PipelineData::load(paths, &ck.config.prompt)?),
                (None, true) => return Err(Error::Config("checkpoint config has prompts enabled but no data paths".into())),
                _ => None,
            };
            for (i, q) in query.rows()?.into_iter().enumerate() {
                let prompt = match &data {
                    Some(d) => d.prompt(q.exclude, &q.values, &ck.config.ablation, &ck.tokenizer)?,
                    None => None,
                };
                let caption = ck.caption(&q.values, prompt.as_ref().map_or(&[][..], |p| &p.token_ids), beam)?;
                if json {
                    let image_id = q.image_id.unwrap_or(if query.all { i as i64 } else { query.row as i64 });
                    print_json(&Prediction { image_id, caption });
                } else {
                    println!("{caption}");
                }
            }
        }
        Command::Eval { pred, refs } => {
            let preds = read_predictions(&pred)?;
            let report = evaluate(&preds, &references(&refs)?)?;
            if json {
                print_json(&report);
            } else {
                println!(
                    "BLEU-1 {:.4}  BLEU-2 {:.4}  BLEU-3 {:.4}  BLEU-4 {:.4}  ({} images)",
                    report.bleu1,
                    report.bleu2,
                    report.bleu3,
                    report.bleu4,
                    report.images.len()
                );
            }
        }
        Command::Stats { extractions, refs } => {
            let lines: Vec<ExtractionLine> = read_jsonl(&extractions)?;
            if lines.is_empty() {
                return Err(Error::EmptyCorpus);
            }
            let refs = references(&refs)?;
            let inputs: Vec<OverlapInput> = lines
                .into_iter()
                .map(|l| OverlapInput {
                    references: refs.get(&l.image_id).cloned().unwrap_or_default(),
                    image_id: l.image_id,
                    objects: l.objects,
                    relations: l.relations,
                })
                .collect();
            let report = overlap_report(&inputs);
            if json {
                print_json(&report);
            } else {
                for (d, v) in report.definitions.iter().zip(report.stats.as_array()) {
                    println!("{v:.4}  {d}");
                }
            }
        }
        Command::Synth { out, images, seed } => {
            let task = SyntheticTask::generate(SyntheticConfig { images, seed, ..SyntheticConfig::default() })?;
            let cfg = task.write_with_config(&out, TrainingConfig::desk())?;
            let config = out.join("config.json");
            if json {
                print_json(&serde_json::json!({"config": config, "images": images, "out_dir": cfg.out_dir}));
            } else {
                println!("wrote {} images to {}; train with --config {}", images, out.display(), config.display());
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Usage => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
