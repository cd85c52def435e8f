//! Object and relation extraction from retrieved captions.
//!
//! For one image: retrieve the `k` nearest captions, score the high-frequency
//! vocabulary with the head, tag the retrieved sentences, intersect, then add
//! frequency/similarity supplements and cap the lists.

pub mod extract;
pub mod head;
pub mod pos;
pub mod prompt;

use serde::Serialize;

pub use extract::{
    extract_ws, frequency_supplement, intersect_wn, select_wt, ExtractionThresholds, RelationRule, WordSets,
};
pub use head::{score_high_freq_words, HighFreqHead};
pub use pos::{pos_tag, Lexicon, PosTag, TaggedWord};
pub use prompt::{assemble_prompt, PromptBundle, Template};

use crate::error::{Error, Result};
use crate::store::{knn_retrieve, CaptionCorpus, EmbeddingStore, Neighbor, QueryEmbedding, WordStore};

#[derive(Debug, Clone)]
pub struct Orem {
    pub head: HighFreqHead,
    pub lexicon: Lexicon,
    pub word_store: WordStore,
    pub thresholds: ExtractionThresholds,
    pub k: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Extraction {
    pub neighbors: Vec<Neighbor>,
    pub sentences: Vec<String>,
    pub word_sets: WordSets,
}

impl Orem {
    pub fn extract(
        &self,
        image: &QueryEmbedding,
        store: &EmbeddingStore,
        corpus: &CaptionCorpus,
        exclude_image_id: Option<i64>,
    ) -> Result<Extraction> {
        let neighbors = knn_retrieve(image, store, self.k, exclude_image_id)?;
        let sentences = neighbors
            .iter()
            .map(|n| {
                corpus
                    .get(n.id)
                    .map(|r| r.text.clone())
                    .ok_or_else(|| Error::Invalid(format!("retrieved id {} has no caption", n.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let word_sets = self.word_sets(image, &sentences)?;
        Ok(Extraction {
            neighbors,
            sentences,
            word_sets,
        })
    }

    /// Extraction given already-retrieved sentences.
    pub fn word_sets<S: AsRef<str>>(&self, image: &QueryEmbedding, sentences: &[S]) -> Result<WordSets> {
        let scores = score_high_freq_words(image, &self.head)?;
        let wt = select_wt(&scores, self.head.vocab(), &self.thresholds)?;
        let tagged: Vec<Vec<TaggedWord>> = sentences.iter().map(|s| pos_tag(s.as_ref(), &self.lexicon)).collect();
        let ws = tagged
            .iter()
            .flatten()
            .filter(|t| t.tag != PosTag::Other)
            .cloned()
            .collect();
        let wn = intersect_wn(&wt, &ws);
        let (wo, wr) = frequency_supplement(&tagged, &wn, image, &self.word_store, &self.thresholds);
        Ok(WordSets { wt, ws, wn, wo, wr })
    }
}

/// Empties the object and/or relation lists for word-type ablations.
pub fn mask_word_sets(mut ws: WordSets, use_objects: bool, use_relations: bool) -> WordSets {
    if !use_objects {
        ws.wo.clear();
    }
    if !use_relations {
        ws.wr.clear();
    }
    ws
}
