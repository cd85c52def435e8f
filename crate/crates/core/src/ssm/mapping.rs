use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::block::{block_backward, block_forward, block_forward_cached, BlockCache};
use super::params::SsmBlockParams;
use crate::error::{Error, Result};
use crate::tensor::{randn, view1, view1_mut, view2, view2_mut, ParamSet, ParamView, ParamViewMut, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingConfig {
    pub input_dim: usize,
    pub seq_len: usize,
    pub d_model: usize,
    pub n_blocks: usize,
    pub n_state: usize,
}

impl Default for MappingConfig {
    /// 512-d image features to 10 tokens of width 768 through 10 blocks with state size 16.
    fn default() -> Self {
        Self {
            input_dim: 512,
            seq_len: 10,
            d_model: 768,
            n_blocks: 10,
            n_state: 16,
        }
    }
}

impl MappingConfig {
    pub fn desk() -> Self {
        Self {
            input_dim: 32,
            seq_len: 4,
            d_model: 64,
            n_blocks: 2,
            n_state: 4,
        }
    }
}

/// Expands an image embedding into `seq_len` decoder-space tokens and runs
/// them through stacked selective-SSM blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingNetwork<T> {
    pub config: MappingConfig,
    /// `(seq_len * d_model) x input_dim`
    pub expand_w: Array2<T>,
    pub expand_b: Array1<T>,
    pub blocks: Vec<SsmBlockParams<T>>,
}

/// Activations of one recorded forward pass. Starts empty.
#[derive(Debug, Clone, Default)]
pub struct MappingTape<T> {
    inner: Option<TapeInner<T>>,
}

#[derive(Debug, Clone)]
struct TapeInner<T> {
    input: Array1<T>,
    blocks: Vec<BlockCache<T>>,
}

impl<T> MappingTape<T> {
    pub fn is_recorded(&self) -> bool {
        self.inner.is_some()
    }
}

impl<T: Scalar> MappingNetwork<T> {
    pub fn zeros(config: MappingConfig) -> Self {
        let out = config.seq_len * config.d_model;
        Self {
            config,
            expand_w: Array2::zeros((out, config.input_dim)),
            expand_b: Array1::zeros(out),
            blocks: (0..config.n_blocks)
                .map(|_| SsmBlockParams::zeros(config.d_model, config.n_state))
                .collect(),
        }
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, config: MappingConfig) -> Self {
        let out = config.seq_len * config.d_model;
        Self {
            config,
            expand_w: randn(rng, (out, config.input_dim), 1.0 / (config.input_dim as f64).sqrt()),
            expand_b: Array1::zeros(out),
            blocks: (0..config.n_blocks)
                .map(|_| SsmBlockParams::init(rng, config.d_model, config.n_state))
                .collect(),
        }
    }

    fn expand(&self, x: ArrayView1<T>) -> Result<Array2<T>> {
        if x.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                actual: x.len(),
            });
        }
        let flat = self.expand_w.dot(&x) + &self.expand_b;
        Ok(flat
            .into_shape_with_order((self.config.seq_len, self.config.d_model))
            .expect("expand output has seq_len * d_model entries"))
    }

    /// `seq_len x d_model` visual-text embeddings for one image embedding.
    pub fn forward(&self, image_emb: ArrayView1<T>) -> Result<Array2<T>> {
        let mut h = self.expand(image_emb)?;
        for b in &self.blocks {
            h = block_forward(&h, b);
        }
        Ok(h)
    }

    pub fn forward_recorded(&self, image_emb: ArrayView1<T>, tape: &mut MappingTape<T>) -> Result<Array2<T>> {
        let mut h = self.expand(image_emb)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (next, cache) = block_forward_cached(&h, b);
            caches.push(cache);
            h = next;
        }
        tape.inner = Some(TapeInner {
            input: image_emb.to_owned(),
            blocks: caches,
        });
        Ok(h)
    }

    /// Accumulates gradients of the recorded pass into `grads`.
    pub fn backward(&self, tape: &MappingTape<T>, dout: &Array2<T>, grads: &mut Self) -> Result<()> {
        let inner = tape.inner.as_ref().ok_or(Error::BackwardWithoutForward)?;
        let want = (self.config.seq_len, self.config.d_model);
        if dout.dim() != want {
            return Err(Error::DimensionMismatch {
                expected: want.0 * want.1,
                actual: dout.len(),
            });
        }
        let mut d = dout.clone();
        for ((cache, p), g) in inner.blocks.iter().zip(&self.blocks).zip(&mut grads.blocks).rev() {
            d = block_backward(cache, &d, p, g);
        }
        let flat = d.into_shape_with_order(want.0 * want.1).expect("contiguous");
        for (i, &gi) in flat.iter().enumerate() {
            grads.expand_b[i] += gi;
            let mut row = grads.expand_w.row_mut(i);
            row.scaled_add(gi, &inner.input);
        }
        Ok(())
    }
}

impl<T: Scalar> ParamSet<T> for MappingNetwork<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        let mut out = vec![view2("", "expand.weight", &self.expand_w), view1("", "expand.bias", &self.expand_b)];
        for (i, b) in self.blocks.iter().enumerate() {
            out.extend(b.params().into_iter().map(|mut v| {
                v.name = format!("blocks.{i}.{}", v.name);
                v
            }));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_, T>> {
        let mut out = vec![
            view2_mut("", "expand.weight", &mut self.expand_w),
            view1_mut("", "expand.bias", &mut self.expand_b),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.extend(b.params_mut().into_iter().map(|mut v| {
                v.name = format!("blocks.{i}.{}", v.name);
                v
            }));
        }
        out
    }
}
