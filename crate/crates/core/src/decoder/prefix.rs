use ndarray::{concatenate, s, Array2, Axis};

use super::model::DecoderModel;
use super::tokenizer::{EOS, PAD};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Prompt token embeddings followed by the visual tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixSequence<T> {
    pub prompt_ids: Vec<usize>,
    pub visual_len: usize,
    pub embeds: Array2<T>,
}

impl<T> PrefixSequence<T> {
    pub fn len(&self) -> usize {
        self.prompt_ids.len() + self.visual_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn build_prefix<T: Scalar>(prompt_ids: &[usize], visual: &Array2<T>, model: &DecoderModel<T>) -> Result<PrefixSequence<T>> {
    if visual.ncols() != model.config.d_model {
        return Err(Error::DimensionMismatch {
            expected: model.config.d_model,
            actual: visual.ncols(),
        });
    }
    let prompt = model.embed_tokens(prompt_ids)?;
    let embeds = concatenate(Axis(0), &[prompt.view(), visual.view()]).expect("matching widths");
    Ok(PrefixSequence {
        prompt_ids: prompt_ids.to_vec(),
        visual_len: visual.nrows(),
        embeds,
    })
}

/// Caption word ids terminated by `<eos>`, at most `max_len` long in total.
///
/// Returns the ids and whether the caption had to be cut.
pub fn caption_targets(word_ids: &[usize], max_len: usize) -> (Vec<usize>, bool) {
    let keep = max_len.saturating_sub(1);
    let truncated = word_ids.len() > keep;
    let mut ids: Vec<usize> = word_ids.iter().copied().take(keep).collect();
    ids.push(EOS);
    (ids, truncated)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSequence<T> {
    pub prefix: PrefixSequence<T>,
    /// Caption ids ending in `<eos>`.
    pub caption_ids: Vec<usize>,
    /// `prefix ++ embed(caption_ids)`.
    pub input: Array2<T>,
    /// Next-token target per input position; `<pad>` where the mask is unset.
    pub targets: Vec<usize>,
    pub loss_mask: Vec<bool>,
    pub truncated: bool,
}

impl<T> TrainingSequence<T> {
    pub fn masked_count(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }
}

/// Appends the caption to the prefix. Position `n - 1 + j` predicts caption
/// token `j`, so the mask covers exactly the caption ids including `<eos>`.
pub fn concat_training_sequence<T: Scalar>(
    prefix: PrefixSequence<T>,
    caption_word_ids: &[usize],
    max_caption_len: usize,
    model: &DecoderModel<T>,
) -> Result<TrainingSequence<T>> {
    if max_caption_len == 0 {
        return Err(Error::Invalid("max caption length must be at least 1".into()));
    }
    let (caption_ids, truncated) = caption_targets(caption_word_ids, max_caption_len);
    if truncated {
        log::warn!(
            "caption of {} tokens truncated to {}",
            caption_word_ids.len(),
            max_caption_len - 1
        );
    }
    let n = prefix.len();
    if n == 0 {
        return Err(Error::Invalid("prefix must contain at least one position".into()));
    }
    let cap = model.embed_tokens(&caption_ids)?;
    let input = concatenate(Axis(0), &[prefix.embeds.view(), cap.view()]).expect("matching widths");
    let total = input.nrows();
    let mut targets = vec![PAD; total];
    let mut loss_mask = vec![false; total];
    for (j, &id) in caption_ids.iter().enumerate() {
        targets[n - 1 + j] = id;
        loss_mask[n - 1 + j] = true;
    }
    Ok(TrainingSequence {
        prefix,
        caption_ids,
        input,
        targets,
        loss_mask,
        truncated,
    })
}

impl<T: Scalar> TrainingSequence<T> {
    /// Splits an input-embedding gradient into (prompt rows, visual rows, caption rows).
    pub fn split_input_grad<'a>(
        &self,
        dx: &'a Array2<T>,
    ) -> (ndarray::ArrayView2<'a, T>, ndarray::ArrayView2<'a, T>, ndarray::ArrayView2<'a, T>) {
        let p = self.prefix.prompt_ids.len();
        let v = p + self.prefix.visual_len;
        (dx.slice(s![..p, ..]), dx.slice(s![p..v, ..]), dx.slice(s![v.., ..]))
    }
}
