//! Linear + sigmoid head scoring a fixed high-frequency vocabulary from an
//! image embedding.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::store::records::{read_lines, write_lines};
use crate::store::{Emb1Matrix, QueryEmbedding};
use crate::tensor::sigmoid;
use crate::text;

/// Vocabulary size used by the reference configuration.
pub const DEFAULT_VOCAB_SIZE: usize = 906;

pub const WEIGHT_FILE: &str = "head_weight.emb1";
pub const BIAS_FILE: &str = "head_bias.emb1";
pub const VOCAB_FILE: &str = "head_vocab.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct HighFreqHead {
    vocab: Vec<String>,
    dim: usize,
    /// `V x dim`, row-major.
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl HighFreqHead {
    pub fn new(vocab: Vec<String>, dim: usize, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        let v = vocab.len();
        if weight.len() != v * dim {
            return Err(Error::DimensionMismatch {
                expected: v * dim,
                actual: weight.len(),
            });
        }
        if bias.len() != v {
            return Err(Error::DimensionMismatch {
                expected: v,
                actual: bias.len(),
            });
        }
        if weight.iter().chain(&bias).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("head parameters"));
        }
        Ok(Self { vocab, dim, weight, bias })
    }

    pub fn zeros(vocab: Vec<String>, dim: usize) -> Self {
        let v = vocab.len();
        Self {
            vocab,
            dim,
            weight: vec![0.0; v * dim],
            bias: vec![0.0; v],
        }
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight_row(&self, i: usize) -> &[f32] {
        &self.weight[i * self.dim..(i + 1) * self.dim]
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// Loads `head_weight.emb1`, `head_bias.emb1` (one row of V) and `head_vocab.txt`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let w = Emb1Matrix::read(dir.join(WEIGHT_FILE))?;
        let b = Emb1Matrix::read(dir.join(BIAS_FILE))?;
        let vocab = read_lines(dir.join(VOCAB_FILE))?;
        if w.count != vocab.len() || b.count != 1 {
            return Err(Error::CountMismatch {
                vectors: w.count,
                ids: vocab.len(),
            });
        }
        Self::new(vocab, w.dim, w.data, b.data)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Emb1Matrix::new(self.vocab.len(), self.dim, self.weight.clone())?.write(dir.join(WEIGHT_FILE))?;
        Emb1Matrix::new(1, self.vocab.len(), self.bias.clone())?.write(dir.join(BIAS_FILE))?;
        write_lines(dir.join(VOCAB_FILE), &self.vocab)
    }
}

/// `sigmoid(W x + b)` per vocabulary word, accumulated in `f64`.
pub fn score_high_freq_words(image_emb: &QueryEmbedding, head: &HighFreqHead) -> Result<Vec<f64>> {
    if image_emb.dim() != head.dim {
        return Err(Error::DimensionMismatch {
            expected: head.dim,
            actual: image_emb.dim(),
        });
    }
    let x = image_emb.values();
    Ok((0..head.vocab.len())
        .map(|i| {
            let z: f64 = head
                .weight_row(i)
                .iter()
                .zip(x)
                .map(|(&w, &v)| w as f64 * v as f64)
                .sum::<f64>()
                + head.bias[i] as f64;
            sigmoid(z)
        })
        .collect())
}

/// The `size` most frequent words of a corpus; ties broken lexicographically.
pub fn build_head_vocab<'a>(texts: impl IntoIterator<Item = &'a str>, size: usize) -> Vec<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in texts {
        for w in text::words(t) {
            *counts.entry(w).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(size).map(|(w, _)| w).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct HeadTrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
}

impl Default for HeadTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 400,
            learning_rate: 0.05,
        }
    }
}

/// Fits the head with per-word binary cross-entropy against word presence,
/// full batch, Adam, zero initialization. Returns the head and the loss trace.
pub fn train_head(
    vocab: Vec<String>,
    examples: &[(Vec<f32>, HashSet<String>)],
    cfg: HeadTrainConfig,
) -> Result<(HighFreqHead, Vec<f64>)> {
    let first = examples.first().ok_or(Error::EmptyCorpus)?;
    let dim = first.0.len();
    let v = vocab.len();
    let n = examples.len() as f64;
    let mut w = vec![0.0f64; v * dim];
    let mut b = vec![0.0f64; v];
    let labels: Vec<Vec<f64>> = examples
        .iter()
        .map(|(x, present)| {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: x.len(),
                });
            }
            Ok(vocab.iter().map(|word| f64::from(present.contains(word) as u8)).collect())
        })
        .collect::<Result<_>>()?;
    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);
    let mut mw = vec![0.0; w.len()];
    let mut vw = vec![0.0; w.len()];
    let mut mb = vec![0.0; v];
    let mut vb = vec![0.0; v];
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 1..=cfg.iterations {
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; v];
        let mut loss = 0.0;
        for ((x, _), y) in examples.iter().zip(&labels) {
            for j in 0..v {
                let row = &w[j * dim..(j + 1) * dim];
                let z: f64 = row.iter().zip(x).map(|(&a, &c)| a * c as f64).sum::<f64>() + b[j];
                let p = sigmoid(z);
                // log(1 + e^z) - y z, stable form of BCE on logits
                loss += z.max(0.0) - z * y[j] + (-z.abs()).exp().ln_1p();
                let g = (p - y[j]) / n;
                gb[j] += g;
                for (gk, &xk) in gw[j * dim..(j + 1) * dim].iter_mut().zip(x) {
                    *gk += g * xk as f64;
                }
            }
        }
        trace.push(loss / (n * v as f64));
        let bc1 = 1.0 - f64::powi(beta1, it as i32);
        let bc2 = 1.0 - f64::powi(beta2, it as i32);
        for (p, (g, (m, s))) in w.iter_mut().chain(b.iter_mut()).zip(
            gw.iter()
                .chain(gb.iter())
                .zip(mw.iter_mut().chain(mb.iter_mut()).zip(vw.iter_mut().chain(vb.iter_mut()))),
        ) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *s = beta2 * *s + (1.0 - beta2) * g * g;
            *p -= cfg.learning_rate * (*m / bc1) / ((*s / bc2).sqrt() + eps);
        }
    }
    let head = HighFreqHead::new(
        vocab,
        dim,
        w.into_iter().map(|x| x as f32).collect(),
        b.into_iter().map(|x| x as f32).collect(),
    )?;
    Ok((head, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_head_scores_half() {
        let head = HighFreqHead::zeros(vec!["a".into(), "b".into(), "c".into()], 4);
        let q = QueryEmbedding::new(vec![0.3, -1.0, 2.0, 0.1]).unwrap();
        assert_eq!(score_high_freq_words(&q, &head).unwrap(), vec![0.5; 3]);
    }

    #[test]
    fn dimension_mismatch() {
        let head = HighFreqHead::zeros(vec!["a".into()], 4);
        let q = QueryEmbedding::new(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            score_high_freq_words(&q, &head),
            Err(Error::DimensionMismatch { expected: 4, actual: 2 })
        ));
    }

    #[test]
    fn matches_f64_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (v, d) = (37, 19);
        let w: Vec<f32> = (0..v * d).map(|_| rng.random_range(-0.5..0.5)).collect();
        let b: Vec<f32> = (0..v).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f32> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let head = HighFreqHead::new((0..v).map(|i| format!("w{i}")).collect(), d, w.clone(), b.clone()).unwrap();
        let got = score_high_freq_words(&QueryEmbedding::new(x.clone()).unwrap(), &head).unwrap();
        for i in 0..v {
            let mut z = b[i] as f64;
            for k in 0..d {
                z += w[i * d + k] as f64 * x[k] as f64;
            }
            let want = 1.0 / (1.0 + (-z).exp());
            assert!((got[i] - want).abs() < 1e-5);
            assert!(got[i] > 0.0 && got[i] < 1.0);
        }
    }

    #[test]
    fn vocab_is_frequency_ranked() {
        let v = build_head_vocab(["a dog on a mat", "a cat", "dog"], 3);
        assert_eq!(v, ["a", "dog", "cat"]);
    }

    #[test]
    fn training_separates_present_words() {
        let vocab: Vec<String> = ["dog", "cat", "grass"].iter().map(|s| s.to_string()).collect();
        let set = |ws: &[&str]| ws.iter().map(|s| s.to_string()).collect::<HashSet<_>>();
        let examples = vec![
            (vec![1.0, 0.0, 0.2], set(&["dog", "grass"])),
            (vec![0.0, 1.0, 0.1], set(&["cat"])),
            (vec![0.9, 0.1, 1.0], set(&["dog", "grass"])),
            (vec![0.1, 0.9, -0.3], set(&["cat"])),
        ];
        let (head, trace) = train_head(vocab, &examples, HeadTrainConfig::default()).unwrap();
        assert!(trace.last().unwrap() < &(trace[0] * 0.2));
        let s = score_high_freq_words(&QueryEmbedding::new(examples[0].0.clone()).unwrap(), &head).unwrap();
        assert!(s[0] > 0.8 && s[1] < 0.2, "{s:?}");
        let dir = tempfile::tempdir().unwrap();
        head.save(dir.path()).unwrap();
        assert_eq!(HighFreqHead::load(dir.path()).unwrap(), head);
    }
}
