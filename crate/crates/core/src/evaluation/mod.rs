//! Caption scoring and extraction statistics.

pub mod bleu;
pub mod overlap;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu, bleu_stats, BleuScores, BleuStats};
pub use overlap::{overlap_stats, OverlapInput, OverlapStats, DEFINITIONS};

use crate::error::{Error, Result};
use crate::store::records::read_jsonl;
use crate::text::words;

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub image_id: i64,
    pub caption: String,
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    read_jsonl(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: i64,
    pub hypothesis: String,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub images: Vec<ImageRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap_stats: Option<OverlapStats>,
}

/// Scores predictions against references grouped by image id.
pub fn evaluate(predictions: &[Prediction], references: &BTreeMap<i64, Vec<String>>) -> Result<EvalReport> {
    if predictions.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut images = Vec::with_capacity(predictions.len());
    for p in predictions {
        let refs = references
            .get(&p.image_id)
            .filter(|r| !r.is_empty())
            .ok_or_else(|| Error::Invalid(format!("no references for image {}", p.image_id)))?;
        images.push(ImageRecord {
            image_id: p.image_id,
            hypothesis: p.caption.clone(),
            references: refs.clone(),
        });
    }
    let hyps: Vec<Vec<String>> = images.iter().map(|r| words(&r.hypothesis)).collect();
    let refs: Vec<Vec<Vec<String>>> = images
        .iter()
        .map(|r| r.references.iter().map(|s| words(s)).collect())
        .collect();
    let s = bleu(&hyps, &refs)?;
    Ok(EvalReport {
        bleu1: s.bleu1,
        bleu2: s.bleu2,
        bleu3: s.bleu3,
        bleu4: s.bleu4,
        images,
        overlap_stats: None,
    })
}

/// Overlap report with the predicate wording alongside the numbers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapReport {
    pub definitions: [&'static str; 6],
    pub images: usize,
    pub stats: OverlapStats,
}

pub fn overlap_report(inputs: &[OverlapInput]) -> OverlapReport {
    OverlapReport {
        definitions: DEFINITIONS,
        images: inputs.len(),
        stats: overlap_stats(inputs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_groups_references() {
        let refs: BTreeMap<i64, Vec<String>> = [
            (1, vec!["a dog on grass".to_string(), "dog on the grass".to_string()]),
            (2, vec!["a red car".to_string()]),
        ]
        .into();
        let preds = vec![
            Prediction {
                image_id: 1,
                caption: "a dog on grass".into(),
            },
            Prediction {
                image_id: 2,
                caption: "A red car.".into(),
            },
        ];
        let r = evaluate(&preds, &refs).unwrap();
        assert_eq!(r.bleu4, 1.0);
        assert_eq!(r.images.len(), 2);
        let missing = [Prediction {
            image_id: 3,
            caption: "x".into(),
        }];
        assert!(evaluate(&missing, &refs).is_err());
        assert!(matches!(evaluate(&[], &refs), Err(Error::EmptyCorpus)));
    }
}
