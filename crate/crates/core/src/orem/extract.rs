//! Word-set construction: head selection, POS extraction, intersection and
//! the frequency/similarity supplements.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::pos::{pos_tag, Lexicon, PosTag, TaggedWord};
use crate::error::{Error, Result};
use crate::store::{QueryEmbedding, WordStore};

/// How the relation-word supplement reads its frequency rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationRule {
    /// Only the most frequent relation words, and only above the threshold.
    #[default]
    MaxFrequencyOnly,
    /// Every relation word above the threshold.
    AboveThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionThresholds {
    pub top_d: usize,
    pub score_s: f64,
    /// Object frequency must be strictly greater.
    pub obj_freq_o: usize,
    /// Object/image cosine must be strictly greater.
    pub obj_sim: f64,
    /// Relation frequency must be strictly greater.
    pub rel_freq_r: usize,
    pub max_objects: usize,
    pub max_relations: usize,
    pub relation_rule: RelationRule,
}

impl Default for ExtractionThresholds {
    fn default() -> Self {
        Self {
            top_d: 20,
            score_s: 0.8,
            obj_freq_o: 4,
            obj_sim: 0.24,
            rel_freq_r: 2,
            max_objects: 6,
            max_relations: 3,
            relation_rule: RelationRule::MaxFrequencyOnly,
        }
    }
}

impl ExtractionThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.top_d == 0 || self.max_objects == 0 || self.max_relations == 0 {
            return Err(Error::Config("threshold counts must be positive".into()));
        }
        if !(self.score_s > 0.0 && self.score_s < 1.0) {
            return Err(Error::Config(format!("score_s {} outside (0, 1)", self.score_s)));
        }
        if !(self.obj_sim > -1.0 && self.obj_sim < 1.0) {
            return Err(Error::Config(format!("obj_sim {} outside (-1, 1)", self.obj_sim)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WordSets {
    pub wt: Vec<String>,
    pub ws: BTreeSet<TaggedWord>,
    pub wn: BTreeSet<TaggedWord>,
    pub wo: Vec<String>,
    pub wr: Vec<String>,
}

/// Words scoring above `score_s`, best first (ties by vocab index), at most `top_d`.
pub fn select_wt(scores: &[f64], vocab: &[String], th: &ExtractionThresholds) -> Result<Vec<String>> {
    if scores.len() != vocab.len() {
        return Err(Error::DimensionMismatch {
            expected: vocab.len(),
            actual: scores.len(),
        });
    }
    let mut keep: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > th.score_s).collect();
    keep.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    keep.truncate(th.top_d);
    Ok(keep.into_iter().map(|i| vocab[i].clone()).collect())
}

/// Object and relation words over all sentences; `other` tags are dropped.
pub fn extract_ws<S: AsRef<str>>(sentences: &[S], lexicon: &Lexicon) -> BTreeSet<TaggedWord> {
    sentences
        .iter()
        .flat_map(|s| pos_tag(s.as_ref(), lexicon))
        .filter(|t| t.tag != PosTag::Other)
        .collect()
}

/// Surface-form intersection; members carry their tag from `ws`.
pub fn intersect_wn(wt: &[String], ws: &BTreeSet<TaggedWord>) -> BTreeSet<TaggedWord> {
    ws.iter().filter(|t| wt.contains(&t.surface)).cloned().collect()
}

/// Builds the final object and relation lists.
///
/// `W_n` members enter directly. Objects are supplemented by nouns seen more
/// than `obj_freq_o` times whose embedding is closer than `obj_sim` to the
/// image; relations by the most frequent relation words above `rel_freq_r`.
pub fn frequency_supplement(
    tagged_sentences: &[Vec<TaggedWord>],
    wn: &BTreeSet<TaggedWord>,
    image_emb: &QueryEmbedding,
    word_store: &WordStore,
    th: &ExtractionThresholds,
) -> (Vec<String>, Vec<String>) {
    let mut obj_freq: BTreeMap<&str, usize> = BTreeMap::new();
    let mut rel_freq: BTreeMap<&str, usize> = BTreeMap::new();
    for t in tagged_sentences.iter().flatten() {
        if t.tag.is_object() {
            *obj_freq.entry(&t.surface).or_default() += 1;
        } else if t.tag.is_relation() {
            *rel_freq.entry(&t.surface).or_default() += 1;
        }
    }

    let sim = |w: &str| word_store.similarity(w, image_emb);
    let mut objects: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for t in wn.iter().filter(|t| t.tag.is_object()) {
        let f = obj_freq.get(t.surface.as_str()).copied().unwrap_or(0);
        objects.insert(&t.surface, (f, sim(&t.surface).unwrap_or(f64::NEG_INFINITY)));
    }
    for (&w, &f) in &obj_freq {
        if f > th.obj_freq_o {
            if let Some(s) = sim(w) {
                if s > th.obj_sim {
                    objects.insert(w, (f, s));
                }
            }
        }
    }
    let mut wo: Vec<(&str, (usize, f64))> = objects.into_iter().collect();
    wo.sort_by(|a, b| {
        b.1 .0
            .cmp(&a.1 .0)
            .then(b.1 .1.partial_cmp(&a.1 .1).unwrap_or(Ordering::Equal))
            .then(a.0.cmp(b.0))
    });
    wo.truncate(th.max_objects);

    let mut relations: BTreeMap<&str, usize> = BTreeMap::new();
    for t in wn.iter().filter(|t| t.tag.is_relation()) {
        relations.insert(&t.surface, rel_freq.get(t.surface.as_str()).copied().unwrap_or(0));
    }
    let max_rel = rel_freq.values().copied().max().unwrap_or(0);
    for (&w, &f) in &rel_freq {
        let eligible = match th.relation_rule {
            RelationRule::MaxFrequencyOnly => f == max_rel,
            RelationRule::AboveThreshold => true,
        };
        if eligible && f > th.rel_freq_r {
            relations.insert(w, f);
        }
    }
    let mut wr: Vec<(&str, usize)> = relations.into_iter().collect();
    wr.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    wr.truncate(th.max_relations);

    (
        wo.into_iter().map(|(w, _)| w.to_owned()).collect(),
        wr.into_iter().map(|(w, _)| w.to_owned()).collect(),
    )
}
