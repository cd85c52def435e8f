//! Embedding persistence, caption corpora and exact cosine retrieval.

pub mod emb1;
pub mod records;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

pub use emb1::Emb1Matrix;
pub use records::{CaptionRecord, IdRecord};

use crate::error::{Error, Result};

/// Default number of retrieved captions.
pub const DEFAULT_K: usize = 7;

fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

fn norm_f64(a: &[f32]) -> f64 {
    dot_f64(a, a).sqrt()
}

/// Cosine similarity accumulated in `f64`.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let na = norm_f64(a);
    let nb = norm_f64(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(dot_f64(a, b) / (na * nb))
}

/// A validated query vector: finite entries and nonzero norm.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding {
    values: Vec<f32>,
    norm: f64,
}

impl QueryEmbedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query embedding"));
        }
        let norm = norm_f64(&values);
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(Self { values, norm })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Neighbor {
    pub id: i64,
    pub score: f64,
}

fn rank(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.id.cmp(&b.id))
}

/// Immutable row store. Vectors are kept as given; norms are cached.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: Vec<f32>,
    norms: Vec<f64>,
    ids: Vec<i64>,
    image_ids: Vec<Option<i64>>,
}

impl EmbeddingStore {
    /// Validates rows (finite, nonzero) and ids (unique, one per row).
    pub fn from_parts(matrix: Emb1Matrix, ids: Vec<i64>, image_ids: Vec<Option<i64>>) -> Result<Self> {
        if ids.len() != matrix.count || image_ids.len() != matrix.count {
            return Err(Error::CountMismatch {
                vectors: matrix.count,
                ids: ids.len(),
            });
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }
        let mut norms = Vec::with_capacity(matrix.count);
        for (row, v) in matrix.rows().enumerate() {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteRow { row });
            }
            let n = norm_f64(v);
            if n == 0.0 {
                return Err(Error::ZeroRow { row });
            }
            norms.push(n);
        }
        Ok(Self {
            dim: matrix.dim,
            vectors: matrix.data,
            norms,
            ids,
            image_ids,
        })
    }

    pub fn from_records(matrix: Emb1Matrix, records: &[IdRecord]) -> Result<Self> {
        let ids = records.iter().map(|r| r.id).collect();
        let image_ids = records.iter().map(|r| Some(r.image_id)).collect();
        Self::from_parts(matrix, ids, image_ids)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[i64] {
        &self.ids
    }

    pub fn image_id(&self, row: usize) -> Option<i64> {
        self.image_ids[row]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_of(&self, id: i64) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    pub fn to_matrix(&self) -> Emb1Matrix {
        Emb1Matrix {
            count: self.len(),
            dim: self.dim,
            data: self.vectors.clone(),
        }
    }

    fn score_row(&self, q: &QueryEmbedding, row: usize) -> f64 {
        dot_f64(q.values(), self.row(row)) / (q.norm * self.norms[row])
    }

    fn top_k_in(&self, q: &QueryEmbedding, rows: std::ops::Range<usize>, k: usize, exclude: Option<i64>) -> Vec<Neighbor> {
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        for row in rows {
            if exclude.is_some() && self.image_ids[row] == exclude {
                continue;
            }
            let cand = Neighbor {
                id: self.ids[row],
                score: self.score_row(q, row),
            };
            if best.len() == k && rank(&cand, best.last().unwrap()) != Ordering::Less {
                continue;
            }
            let pos = best.partition_point(|b| rank(b, &cand) == Ordering::Less);
            best.insert(pos, cand);
            best.truncate(k);
        }
        best
    }
}

/// Exact top-`k` retrieval by cosine similarity, descending, ties by ascending id.
///
/// Rows whose image id equals `exclude_image_id` are skipped. An empty
/// candidate set yields an empty result.
pub fn knn_retrieve(
    query: &QueryEmbedding,
    store: &EmbeddingStore,
    k: usize,
    exclude_image_id: Option<i64>,
) -> Result<Vec<Neighbor>> {
    check_query(query, store, k)?;
    Ok(store.top_k_in(query, 0..store.len(), k, exclude_image_id))
}

/// Same contract as [`knn_retrieve`], scanning row chunks on the rayon pool.
pub fn knn_retrieve_parallel(
    query: &QueryEmbedding,
    store: &EmbeddingStore,
    k: usize,
    exclude_image_id: Option<i64>,
    chunk_rows: usize,
) -> Result<Vec<Neighbor>> {
    check_query(query, store, k)?;
    let chunk = chunk_rows.max(1);
    let starts: Vec<usize> = (0..store.len()).step_by(chunk).collect();
    let partials: Vec<Vec<Neighbor>> = starts
        .par_iter()
        .map(|&s| store.top_k_in(query, s..(s + chunk).min(store.len()), k, exclude_image_id))
        .collect();
    let mut merged: Vec<Neighbor> = partials.into_iter().flatten().collect();
    merged.sort_by(rank);
    merged.truncate(k);
    Ok(merged)
}

fn check_query(query: &QueryEmbedding, store: &EmbeddingStore, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    if query.dim() != store.dim() {
        return Err(Error::DimensionMismatch {
            expected: store.dim(),
            actual: query.dim(),
        });
    }
    Ok(())
}

/// Loads an EMB1 file and its ids sidecar into a store.
pub fn build_store(embeddings_file: impl AsRef<Path>, ids_file: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let matrix = Emb1Matrix::read(embeddings_file)?;
    let records: Vec<IdRecord> = records::read_jsonl(ids_file)?;
    EmbeddingStore::from_records(matrix, &records)
}

/// Captions keyed by record id, in id order.
#[derive(Debug, Clone, Default)]
pub struct CaptionCorpus {
    by_id: BTreeMap<i64, CaptionRecord>,
}

impl CaptionCorpus {
    pub fn new(records: Vec<CaptionRecord>) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for r in records {
            let id = r.id;
            if by_id.insert(id, r).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self { by_id })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(records::read_captions(path)?)
    }

    pub fn get(&self, id: i64) -> Option<&CaptionRecord> {
        self.by_id.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CaptionRecord> {
        self.by_id.values()
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    /// Reference captions grouped by image id.
    pub fn by_image(&self) -> BTreeMap<i64, Vec<&str>> {
        let mut out: BTreeMap<i64, Vec<&str>> = BTreeMap::new();
        for r in self.by_id.values() {
            out.entry(r.image_id).or_default().push(r.text.as_str());
        }
        out
    }

    /// Every store row must have a caption, and vice versa.
    pub fn check_matches(&self, store: &EmbeddingStore) -> Result<()> {
        if self.len() != store.len() {
            return Err(Error::CountMismatch {
                vectors: store.len(),
                ids: self.len(),
            });
        }
        for (row, &id) in store.ids().iter().enumerate() {
            let rec = self
                .get(id)
                .ok_or_else(|| Error::Invalid(format!("store row {row} has id {id} with no caption")))?;
            if store.image_id(row) != Some(rec.image_id) {
                return Err(Error::Invalid(format!(
                    "caption {id}: image_id {} disagrees with the ids sidecar",
                    rec.image_id
                )));
            }
        }
        Ok(())
    }
}

/// Word embeddings used for word/image similarity checks.
#[derive(Debug, Clone)]
pub struct WordStore {
    store: EmbeddingStore,
    index: HashMap<String, usize>,
}

impl WordStore {
    pub fn new(matrix: Emb1Matrix, words: Vec<String>) -> Result<Self> {
        if words.len() != matrix.count {
            return Err(Error::CountMismatch {
                vectors: matrix.count,
                ids: words.len(),
            });
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate word {w:?} in word store")));
            }
        }
        let n = matrix.count;
        let store = EmbeddingStore::from_parts(matrix, (0..n as i64).collect(), vec![None; n])?;
        Ok(Self { store, index })
    }

    pub fn load(embeddings_file: impl AsRef<Path>, words_file: impl AsRef<Path>) -> Result<Self> {
        Self::new(Emb1Matrix::read(embeddings_file)?, records::read_lines(words_file)?)
    }

    pub fn dim(&self) -> usize {
        self.store.dim()
    }

    pub fn embedding(&self, word: &str) -> Option<&[f32]> {
        self.index.get(word).map(|&i| self.store.row(i))
    }

    /// Cosine between a word and a query; `None` for unknown words.
    pub fn similarity(&self, word: &str, query: &QueryEmbedding) -> Option<f64> {
        let &row = self.index.get(word)?;
        if query.dim() != self.store.dim() {
            return None;
        }
        Some(self.store.score_row(query, row))
    }
}
