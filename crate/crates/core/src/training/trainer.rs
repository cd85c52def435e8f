use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{clip_grad_norm, Adam};
use super::config::{ModelDims, TrainingConfig};
use super::schedule::lr_schedule;
use crate::decoder::model::in_frozen_layer;
use crate::decoder::{build_prefix, concat_training_sequence, generate_ids, nll_with_grad, DecoderModel};
use crate::error::{Error, Result};
use crate::ssm::{MappingNetwork, MappingTape};
use crate::tensor::{accumulate, ParamSet, ParamView, ParamViewMut, Scalar};

/// Mapping network plus decoder: everything updated by caption training.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionModel<T> {
    pub mapping: MappingNetwork<T>,
    pub decoder: DecoderModel<T>,
}

impl<T: Scalar> CaptionModel<T> {
    pub fn init(seed: u64, dims: &ModelDims, vocab_size: usize, freeze: bool) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mapping = MappingNetwork::init(&mut rng, dims.mapping);
        let decoder = DecoderModel::init(&mut rng, dims.decoder(vocab_size, freeze))?;
        Ok(Self { mapping, decoder })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            mapping: MappingNetwork::zeros(self.mapping.config),
            decoder: DecoderModel::zeros(self.decoder.config),
        }
    }

    /// Whether the named tensor sits in a frozen decoder layer.
    pub fn is_frozen(&self, name: &str) -> bool {
        name.strip_prefix("decoder.").is_some_and(|n| self.decoder.is_frozen(n))
    }

    pub fn visual_tokens(&self, image_emb: &[f32]) -> Result<Array2<T>> {
        let x: Array1<T> = image_emb.iter().map(|&v| T::from_f64_lossy(v as f64)).collect();
        self.mapping.forward(x.view())
    }

    /// Full prefix (prompt embeddings then visual tokens) for one image.
    pub fn prefix(&self, image_emb: &[f32], prompt_ids: &[usize]) -> Result<Array2<T>> {
        Ok(build_prefix(prompt_ids, &self.visual_tokens(image_emb)?, &self.decoder)?.embeds)
    }

    /// Caption token ids without `<eos>`; `beam_size = 1` is greedy decoding.
    pub fn generate(&self, image_emb: &[f32], prompt_ids: &[usize], beam_size: usize, max_len: usize) -> Result<Vec<usize>> {
        let prefix = self.prefix(image_emb, prompt_ids)?;
        generate_ids(&self.decoder, &prefix, beam_size, max_len)
    }
}

impl<T: Scalar> ParamSet<T> for CaptionModel<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        let mut out = Vec::new();
        for mut p in self.mapping.params() {
            p.name = format!("mapping.{}", p.name);
            out.push(p);
        }
        for mut p in self.decoder.params() {
            p.name = format!("decoder.{}", p.name);
            out.push(p);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_, T>> {
        let mut out = Vec::new();
        for mut p in self.mapping.params_mut() {
            p.name = format!("mapping.{}", p.name);
            out.push(p);
        }
        for mut p in self.decoder.params_mut() {
            p.name = format!("decoder.{}", p.name);
            out.push(p);
        }
        out
    }
}

/// One image/caption training pair with its prompt already tokenized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub image_id: i64,
    pub image_emb: Vec<f32>,
    /// Empty when the prompt is ablated.
    pub prompt_ids: Vec<usize>,
    /// Caption word ids, without `<eos>`.
    pub caption_ids: Vec<usize>,
}

fn masked_len(sample: &Sample, max_caption_len: usize) -> usize {
    sample.caption_ids.len().min(max_caption_len.saturating_sub(1)) + 1
}

/// Summed token NLL of one sample and its gradient, scaled by `scale`.
pub fn sample_gradient<T: Scalar>(
    model: &CaptionModel<T>,
    sample: &Sample,
    max_caption_len: usize,
    scale: f64,
) -> Result<(f64, CaptionModel<T>)> {
    let x: Array1<T> = sample.image_emb.iter().map(|&v| T::from_f64_lossy(v as f64)).collect();
    let mut tape = MappingTape::default();
    let visual = model.mapping.forward_recorded(x.view(), &mut tape)?;
    let prefix = build_prefix(&sample.prompt_ids, &visual, &model.decoder)?;
    let seq = concat_training_sequence(prefix, &sample.caption_ids, max_caption_len, &model.decoder)?;
    let (logits, cache) = model.decoder.forward_cached(&seq.input)?;
    let (nll, dlogits) = nll_with_grad(&logits, &seq.targets, &seq.loss_mask, scale)?;

    let mut g = model.zeros_like();
    let dx = model.decoder.backward(&cache, &dlogits, &mut g.decoder);
    let (dprompt, dvisual, dcaption) = seq.split_input_grad(&dx);
    DecoderModel::scatter_token_grad(&mut g.decoder, &seq.prefix.prompt_ids, dprompt);
    DecoderModel::scatter_token_grad(&mut g.decoder, &seq.caption_ids, dcaption);
    model.mapping.backward(&tape, &dvisual.to_owned(), &mut g.mapping)?;
    Ok((nll, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Optimizer state around a model.
pub struct Trainer {
    pub config: TrainingConfig,
    pub model: CaptionModel<f32>,
    adam: Adam,
    pub step: u64,
}

impl Trainer {
    pub fn new(config: TrainingConfig, model: CaptionModel<f32>) -> Self {
        let adam = Adam::new(config.optimizer, &model);
        Self {
            config,
            model,
            adam,
            step: 0,
        }
    }

    /// Gradient of the batch-mean token loss, merged in sample order.
    pub fn batch_gradient(&self, batch: &[Sample]) -> Result<(f64, CaptionModel<f32>)> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty batch".into()));
        }
        let l = self.config.max_caption_len;
        let tokens: usize = batch.iter().map(|s| masked_len(s, l)).sum();
        let scale = 1.0 / tokens as f64;
        let parts: Vec<Result<(f64, CaptionModel<f32>)>> = batch
            .par_iter()
            .map(|s| sample_gradient(&self.model, s, l, scale))
            .collect();
        let mut total = self.model.zeros_like();
        let mut nll = 0.0;
        for (i, part) in parts.into_iter().enumerate() {
            let (n, g) = part?;
            if !n.is_finite() {
                return Err(Error::NonFiniteLoss {
                    sample: i,
                    image_id: batch[i].image_id,
                });
            }
            nll += n;
            accumulate(&mut total, &g);
        }
        Ok((nll / tokens as f64, total))
    }

    /// One optimizer update; returns the batch loss before the update.
    pub fn train_step(&mut self, batch: &[Sample], epoch: usize) -> Result<StepMetrics> {
        let (loss, mut grads) = self.batch_gradient(batch)?;
        let lr = lr_schedule(self.step as usize + 1, self.config.learning_rate, self.config.warmup_steps);
        let below = self.model.decoder.config.frozen_below;
        let frozen = move |n: &str| n.strip_prefix("decoder.").is_some_and(|n| in_frozen_layer(n, below));
        clip_grad_norm(&mut grads, self.config.grad_clip, frozen);
        self.adam.step(&mut self.model, &grads, lr, frozen);
        self.step += 1;
        Ok(StepMetrics {
            step: self.step,
            epoch,
            lr,
            loss,
        })
    }
}

/// Result of an in-memory training run.
pub struct TrainRun {
    pub model: CaptionModel<f32>,
    pub steps: Vec<StepMetrics>,
    /// Mean step loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Exponential moving average (decay 0.9) of the step loss at each epoch end.
    pub epoch_end_ema: Vec<f64>,
}

/// Sample order for an epoch: a seeded shuffle independent of other epochs.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000_0000_0000 ^ epoch as u64);
    order.shuffle(&mut rng);
    order
}

pub fn train_samples(
    config: &TrainingConfig,
    model: CaptionModel<f32>,
    samples: &[Sample],
    mut on_step: impl FnMut(&StepMetrics),
) -> Result<TrainRun> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut trainer = Trainer::new(config.clone(), model);
    let mut steps = Vec::new();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut epoch_end_ema = Vec::with_capacity(config.epochs);
    let mut ema: Option<f64> = None;
    for epoch in 1..=config.epochs {
        let order = epoch_order(config.seed, epoch, samples.len());
        let mut sum = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let m = trainer.train_step(&batch, epoch)?;
            sum += m.loss;
            count += 1;
            ema = Some(ema.map_or(m.loss, |e| 0.9 * e + 0.1 * m.loss));
            on_step(&m);
            steps.push(m);
        }
        epoch_losses.push(sum / count as f64);
        epoch_end_ema.push(ema.unwrap_or(f64::NAN));
        log::info!("epoch {epoch}: mean loss {:.4}", sum / count as f64);
    }
    Ok(TrainRun {
        model: trainer.model,
        steps,
        epoch_losses,
        epoch_end_ema,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::MappingConfig;
    use crate::tensor::cast_params;

    fn tiny_dims() -> ModelDims {
        ModelDims {
            mapping: MappingConfig {
                input_dim: 6,
                seq_len: 2,
                d_model: 8,
                n_blocks: 1,
                n_state: 2,
            },
            decoder_layers: 3,
            decoder_heads: 2,
            decoder_ff: 16,
            context: 16,
        }
    }

    fn sample(id: i64) -> Sample {
        Sample {
            image_id: id,
            image_emb: (0..6).map(|i| ((i as f32) * 0.7 + id as f32).sin()).collect(),
            prompt_ids: vec![4, 5],
            caption_ids: vec![6, 7, 8],
        }
    }

    #[test]
    fn sample_gradient_matches_finite_differences() {
        let m32 = CaptionModel::<f32>::init(3, &tiny_dims(), 10, false).unwrap();
        let mut m = CaptionModel::<f64>::init(0, &tiny_dims(), 10, false).unwrap();
        cast_params(&m32, &mut m);
        let s = sample(1);
        let (_, g) = sample_gradient(&m, &s, 8, 1.0).unwrap();
        let loss = |m: &CaptionModel<f64>| sample_gradient(m, &s, 8, 1.0).unwrap().0;
        let eps = 1e-4;
        let grads: Vec<(String, Vec<f64>)> = g.params().iter().map(|p| (p.name.clone(), p.data.to_vec())).collect();
        for (ti, (name, gv)) in grads.iter().enumerate() {
            // a handful of entries per tensor keeps this fast
            for k in (0..gv.len()).step_by(gv.len().div_ceil(5)) {
                let mut p = m.clone();
                p.params_mut()[ti].data[k] += eps;
                let mut q = m.clone();
                q.params_mut()[ti].data[k] -= eps;
                let fd = (loss(&p) - loss(&q)) / (2.0 * eps);
                let err = (fd - gv[k]).abs() / fd.abs().max(gv[k].abs()).max(1e-6);
                assert!(err < 1e-4, "{name}[{k}]: {} vs {fd}", gv[k]);
            }
        }
    }

    #[test]
    fn zero_lr_leaves_parameters_unchanged() {
        let mut cfg = TrainingConfig::desk();
        cfg.model = tiny_dims();
        cfg.learning_rate = 0.0;
        cfg.max_caption_len = 8;
        let m = CaptionModel::init(0, &cfg.model, 10, true).unwrap();
        let mut t = Trainer::new(cfg, m.clone());
        let r = t.train_step(&[sample(1), sample(2)], 1).unwrap();
        assert!(r.loss.is_finite() && r.loss > 0.0);
        assert_eq!(t.model, m);
    }

    #[test]
    fn frozen_layers_do_not_move() {
        let mut cfg = TrainingConfig::desk();
        cfg.model = tiny_dims();
        cfg.max_caption_len = 8;
        cfg.learning_rate = 1e-2;
        cfg.warmup_steps = 0;
        let m = CaptionModel::init(0, &cfg.model, 10, true).unwrap();
        assert_eq!(m.decoder.config.frozen_below, 2);
        let mut t = Trainer::new(cfg, m.clone());
        for _ in 0..5 {
            t.train_step(&[sample(1)], 1).unwrap();
        }
        assert_eq!(t.model.decoder.layers[0], m.decoder.layers[0]);
        assert_eq!(t.model.decoder.layers[1], m.decoder.layers[1]);
        assert_ne!(t.model.decoder.layers[2], m.decoder.layers[2]);
        assert_ne!(t.model.mapping, m.mapping);
    }

    #[test]
    fn batch_gradient_is_order_independent_of_threads() {
        let mut cfg = TrainingConfig::desk();
        cfg.model = tiny_dims();
        cfg.max_caption_len = 8;
        let m = CaptionModel::init(0, &cfg.model, 10, true).unwrap();
        let t = Trainer::new(cfg, m);
        let batch: Vec<Sample> = (0..6).map(sample).collect();
        let (l1, g1) = t.batch_gradient(&batch).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let (l2, g2) = pool.install(|| t.batch_gradient(&batch)).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(g1, g2);
    }

    #[test]
    fn non_finite_loss_names_the_sample() {
        let mut cfg = TrainingConfig::desk();
        cfg.model = tiny_dims();
        cfg.max_caption_len = 8;
        let m = CaptionModel::init(0, &cfg.model, 10, true).unwrap();
        let t = Trainer::new(cfg, m);
        let mut bad = sample(7);
        bad.image_emb[0] = f32::NAN;
        let err = t.batch_gradient(&[sample(1), bad]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { sample: 1, image_id: 7 }));
    }

    #[test]
    fn toy_overfit() {
        let mut cfg = TrainingConfig::desk();
        cfg.model = tiny_dims();
        cfg.max_caption_len = 8;
        cfg.learning_rate = 1e-2;
        cfg.warmup_steps = 0;
        cfg.ablation.freeze_decoder_layers = false;
        let mut t = Trainer::new(cfg, CaptionModel::init(0, &tiny_dims(), 10, false).unwrap());
        let s = [sample(1)];
        let first = t.train_step(&s, 1).unwrap().loss;
        let mut last = first;
        for _ in 0..199 {
            last = t.train_step(&s, 1).unwrap().loss;
        }
        assert!(last <= 0.1 * first, "{first} -> {last}");
    }
}
