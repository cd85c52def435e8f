//! Prefix-conditioned causal language model.

pub mod beam;
pub mod loss;
pub mod model;
pub mod prefix;
pub mod tokenizer;

use ndarray::{concatenate, Array2, Axis};

pub use beam::{beam_search, greedy, BeamConfig, Hypothesis, StepModel, DEFAULT_BEAM};
pub use loss::{cross_entropy_loss, log_softmax, nll_with_grad};
pub use model::{default_frozen, DecoderCache, DecoderConfig, DecoderModel};
pub use prefix::{build_prefix, caption_targets, concat_training_sequence, PrefixSequence, TrainingSequence};
pub use tokenizer::Tokenizer;

use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// A decoder conditioned on a fixed prefix, exposed as a [`StepModel`].
pub struct PrefixedDecoder<'a, T> {
    model: &'a DecoderModel<T>,
    prefix: &'a Array2<T>,
    banned: Vec<usize>,
}

impl<'a, T: Scalar> PrefixedDecoder<'a, T> {
    /// `<pad>`, `<bos>` and `<null>` are never generated.
    pub fn new(model: &'a DecoderModel<T>, prefix: &'a Array2<T>) -> Self {
        Self {
            model,
            prefix,
            banned: vec![tokenizer::PAD, tokenizer::BOS, tokenizer::NULL],
        }
    }

    /// Longest generation that fits in the model context.
    pub fn max_len_cap(&self) -> Result<usize> {
        let ctx = self.model.config.context;
        if self.prefix.nrows() == 0 || self.prefix.nrows() > ctx {
            return Err(Error::ContextOverflow {
                len: self.prefix.nrows(),
                max: ctx,
            });
        }
        Ok(ctx - self.prefix.nrows() + 1)
    }
}

impl<T: Scalar> StepModel for PrefixedDecoder<'_, T> {
    fn log_probs(&self, tokens: &[usize]) -> Vec<f64> {
        let emb = self.model.embed_tokens(tokens).expect("generated ids are in vocab");
        let input = concatenate(Axis(0), &[self.prefix.view(), emb.view()]).expect("matching widths");
        let logits = self.model.forward(&input).expect("length bounded by max_len_cap");
        let mut lp = log_softmax(logits.row(logits.nrows() - 1).iter().copied());
        for &b in &self.banned {
            if let Some(v) = lp.get_mut(b) {
                *v = f64::NEG_INFINITY;
            }
        }
        lp
    }
}

/// Beam-search caption ids (without `<eos>`) for a prefix.
pub fn generate_ids<T: Scalar>(model: &DecoderModel<T>, prefix: &Array2<T>, beam_size: usize, max_len: usize) -> Result<Vec<usize>> {
    let step = PrefixedDecoder::new(model, prefix);
    let cfg = BeamConfig {
        beam_size,
        max_len: max_len.min(step.max_len_cap()?),
        eos: tokenizer::EOS,
    };
    let h = beam_search(&step, cfg)?;
    Ok(h.words(tokenizer::EOS).to_vec())
}
