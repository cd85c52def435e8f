//! How often extracted object and relation words occur in the ground-truth
//! captions of the same image.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::text::words;

/// Extracted words and reference captions of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapInput {
    pub image_id: i64,
    pub objects: Vec<String>,
    pub relations: Vec<String>,
    pub references: Vec<String>,
}

/// Six proportions in `[0, 1]`. Pooled word fractions are 0 when nothing
/// was extracted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    /// Extracted object words found in at least one reference, over all extracted object words.
    pub object_word_hit_rate: f64,
    /// Same for relation words.
    pub relation_word_hit_rate: f64,
    /// Images where at least 3 extracted objects occur in some reference.
    pub images_3_objects_hit: f64,
    /// Images where at least 1 extracted relation occurs in some reference.
    pub images_1_relation_hit: f64,
    /// Images where at least 2 extracted objects each occur in at least 3 references.
    pub images_2_objects_in_3_refs: f64,
    /// Images where at least 1 extracted relation occurs in at least 3 references.
    pub images_1_relation_in_3_refs: f64,
}

impl OverlapStats {
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.object_word_hit_rate,
            self.relation_word_hit_rate,
            self.images_3_objects_hit,
            self.images_1_relation_hit,
            self.images_2_objects_in_3_refs,
            self.images_1_relation_in_3_refs,
        ]
    }
}

/// Plain-language statement of each proportion, in field order.
pub const DEFINITIONS: [&str; 6] = [
    "share of all extracted object words that occur in at least one reference caption of their image",
    "share of all extracted relation words that occur in at least one reference caption of their image",
    "share of images with at least 3 extracted object words occurring in some reference caption",
    "share of images with at least 1 extracted relation word occurring in some reference caption",
    "share of images with at least 2 extracted object words that each occur in at least 3 reference captions",
    "share of images with at least 1 extracted relation word occurring in at least 3 reference captions",
];

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Number of references containing each word.
fn ref_hits(ws: &[String], refs: &[HashSet<String>]) -> Vec<usize> {
    ws.iter().map(|w| refs.iter().filter(|r| r.contains(w)).count()).collect()
}

pub fn overlap_stats(images: &[OverlapInput]) -> OverlapStats {
    let (mut obj_hit, mut obj_total, mut rel_hit, mut rel_total) = (0, 0, 0, 0);
    let mut counts = [0usize; 4];
    for img in images {
        let refs: Vec<HashSet<String>> = img.references.iter().map(|r| words(r).into_iter().collect()).collect();
        let oh = ref_hits(&img.objects, &refs);
        let rh = ref_hits(&img.relations, &refs);
        obj_total += oh.len();
        rel_total += rh.len();
        let o_any = oh.iter().filter(|&&c| c >= 1).count();
        let r_any = rh.iter().filter(|&&c| c >= 1).count();
        obj_hit += o_any;
        rel_hit += r_any;
        counts[0] += usize::from(o_any >= 3);
        counts[1] += usize::from(r_any >= 1);
        counts[2] += usize::from(oh.iter().filter(|&&c| c >= 3).count() >= 2);
        counts[3] += usize::from(rh.iter().any(|&c| c >= 3));
    }
    let n = images.len();
    OverlapStats {
        object_word_hit_rate: ratio(obj_hit, obj_total),
        relation_word_hit_rate: ratio(rel_hit, rel_total),
        images_3_objects_hit: ratio(counts[0], n),
        images_1_relation_hit: ratio(counts[1], n),
        images_2_objects_in_3_refs: ratio(counts[2], n),
        images_1_relation_in_3_refs: ratio(counts[3], n),
    }
}
