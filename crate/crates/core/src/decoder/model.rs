//! Pre-norm causal transformer with tied input/output embeddings and a
//! hand-written backward pass.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{c, linear, linear_backward, randn, view1, view1_mut, view2, view2_mut, ParamSet, ParamView, ParamViewMut, Scalar};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Maximum input length.
    pub context: usize,
    /// Layers `0..frozen_below` are excluded from training.
    pub frozen_below: usize,
}

impl DecoderConfig {
    /// 12 layers of width 768 with the first 8 frozen.
    pub fn full(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: 768,
            n_layers: 12,
            n_heads: 12,
            d_ff: 3072,
            context: 1024,
            frozen_below: default_frozen(12),
        }
    }

    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: 64,
            n_layers: 4,
            n_heads: 4,
            d_ff: 256,
            context: 64,
            frozen_below: default_frozen(4),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.d_model == 0 || self.n_heads == 0 || self.context == 0 || self.d_ff == 0 {
            return Err(Error::Config("decoder dimensions must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.frozen_below > self.n_layers {
            return Err(Error::Config(format!(
                "frozen_below {} exceeds n_layers {}",
                self.frozen_below, self.n_layers
            )));
        }
        Ok(())
    }
}

/// Whether tensor `name` lives in a layer below `frozen_below`.
pub fn in_frozen_layer(name: &str, frozen_below: usize) -> bool {
    name.strip_prefix("layers.")
        .and_then(|rest| rest.split('.').next())
        .and_then(|i| i.parse::<usize>().ok())
        .is_some_and(|i| i < frozen_below)
}

/// `floor(2L/3)`: 8 of 12 layers.
pub fn default_frozen(n_layers: usize) -> usize {
    2 * n_layers / 3
}

/// Weight init scale: `1/sqrt(d)`, at least the usual 0.02.
pub fn init_std(d_model: usize) -> f64 {
    (1.0 / (d_model as f64).sqrt()).max(0.02)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_g: Array1<T>,
    pub ln1_b: Array1<T>,
    /// `3d x d`, rows ordered query, key, value.
    pub w_qkv: Array2<T>,
    pub b_qkv: Array1<T>,
    pub w_o: Array2<T>,
    pub b_o: Array1<T>,
    pub ln2_g: Array1<T>,
    pub ln2_b: Array1<T>,
    pub w_fc: Array2<T>,
    pub b_fc: Array1<T>,
    pub w_proj: Array2<T>,
    pub b_proj: Array1<T>,
}

impl<T: Scalar> LayerParams<T> {
    fn zeros(d: usize, ff: usize) -> Self {
        Self {
            ln1_g: Array1::zeros(d),
            ln1_b: Array1::zeros(d),
            w_qkv: Array2::zeros((3 * d, d)),
            b_qkv: Array1::zeros(3 * d),
            w_o: Array2::zeros((d, d)),
            b_o: Array1::zeros(d),
            ln2_g: Array1::zeros(d),
            ln2_b: Array1::zeros(d),
            w_fc: Array2::zeros((ff, d)),
            b_fc: Array1::zeros(ff),
            w_proj: Array2::zeros((d, ff)),
            b_proj: Array1::zeros(d),
        }
    }

    fn init<R: Rng + ?Sized>(rng: &mut R, d: usize, ff: usize, n_layers: usize) -> Self {
        let std = init_std(d);
        let resid = std / ((2 * n_layers.max(1)) as f64).sqrt();
        Self {
            ln1_g: Array1::ones(d),
            w_qkv: randn(rng, (3 * d, d), std),
            w_o: randn(rng, (d, d), resid),
            ln2_g: Array1::ones(d),
            w_fc: randn(rng, (ff, d), std),
            w_proj: randn(rng, (d, ff), resid),
            ..Self::zeros(d, ff)
        }
    }

    fn views<'a>(&'a self, p: &str) -> Vec<ParamView<'a, T>> {
        vec![
            view1(p, "ln1.weight", &self.ln1_g),
            view1(p, "ln1.bias", &self.ln1_b),
            view2(p, "attn.qkv.weight", &self.w_qkv),
            view1(p, "attn.qkv.bias", &self.b_qkv),
            view2(p, "attn.out.weight", &self.w_o),
            view1(p, "attn.out.bias", &self.b_o),
            view1(p, "ln2.weight", &self.ln2_g),
            view1(p, "ln2.bias", &self.ln2_b),
            view2(p, "mlp.fc.weight", &self.w_fc),
            view1(p, "mlp.fc.bias", &self.b_fc),
            view2(p, "mlp.proj.weight", &self.w_proj),
            view1(p, "mlp.proj.bias", &self.b_proj),
        ]
    }

    fn views_mut<'a>(&'a mut self, p: &str) -> Vec<ParamViewMut<'a, T>> {
        vec![
            view1_mut(p, "ln1.weight", &mut self.ln1_g),
            view1_mut(p, "ln1.bias", &mut self.ln1_b),
            view2_mut(p, "attn.qkv.weight", &mut self.w_qkv),
            view1_mut(p, "attn.qkv.bias", &mut self.b_qkv),
            view2_mut(p, "attn.out.weight", &mut self.w_o),
            view1_mut(p, "attn.out.bias", &mut self.b_o),
            view1_mut(p, "ln2.weight", &mut self.ln2_g),
            view1_mut(p, "ln2.bias", &mut self.ln2_b),
            view2_mut(p, "mlp.fc.weight", &mut self.w_fc),
            view1_mut(p, "mlp.fc.bias", &mut self.b_fc),
            view2_mut(p, "mlp.proj.weight", &mut self.w_proj),
            view1_mut(p, "mlp.proj.bias", &mut self.b_proj),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel<T> {
    pub config: DecoderConfig,
    /// Token embeddings, also the output projection.
    pub wte: Array2<T>,
    pub wpe: Array2<T>,
    pub layers: Vec<LayerParams<T>>,
    pub lnf_g: Array1<T>,
    pub lnf_b: Array1<T>,
}

struct LnCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
}

struct LayerCache<T> {
    ln1: LnCache<T>,
    a: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    /// One `len x len` attention matrix per head.
    probs: Vec<Array2<T>>,
    attn: Array2<T>,
    ln2: LnCache<T>,
    m: Array2<T>,
    f: Array2<T>,
    g: Array2<T>,
}

/// Activations kept for [`DecoderModel::backward`].
pub struct DecoderCache<T> {
    layers: Vec<LayerCache<T>>,
    lnf: LnCache<T>,
    hf: Array2<T>,
}

fn layer_norm<T: Scalar>(x: &Array2<T>, g: &Array1<T>, b: &Array1<T>) -> (Array2<T>, LnCache<T>) {
    let d: T = c(x.ncols() as f64);
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (t, mut row) in xhat.rows_mut().into_iter().enumerate() {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / d;
        let r = T::one() / (var + c(LN_EPS)).sqrt();
        row.mapv_inplace(|v| v * r);
        inv_std[t] = r;
    }
    let y = &xhat * g + b;
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward<T: Scalar>(
    cache: &LnCache<T>,
    g: &Array1<T>,
    dy: &Array2<T>,
    dg: &mut Array1<T>,
    db: &mut Array1<T>,
) -> Array2<T> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let d: T = c(cache.xhat.ncols() as f64);
    let dxhat = dy * g;
    let mut dx = Array2::zeros(dy.dim());
    for t in 0..dy.nrows() {
        let row = dxhat.row(t);
        let xh = cache.xhat.row(t);
        let mean = row.sum() / d;
        let mean_x = row.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<T>() / d;
        let r = cache.inv_std[t];
        for j in 0..dy.ncols() {
            dx[[t, j]] = r * (row[j] - mean - xh[j] * mean_x);
        }
    }
    dx
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

fn gelu<T: Scalar>(x: T) -> T {
    let half: T = c(0.5);
    half * x * (T::one() + (c::<T>(GELU_K) * (x + c::<T>(GELU_C) * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let half: T = c(0.5);
    let th = (c::<T>(GELU_K) * (x + c::<T>(GELU_C) * x * x * x)).tanh();
    let inner = c::<T>(GELU_K) * (T::one() + c::<T>(3.0 * GELU_C) * x * x);
    half * (T::one() + th) + half * x * (T::one() - th * th) * inner
}

fn softmax_causal<T: Scalar>(scores: &mut Array2<T>) {
    for (t, mut row) in scores.rows_mut().into_iter().enumerate() {
        let max = row.slice(s![..=t]).fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        for (j, v) in row.iter_mut().enumerate() {
            if j <= t {
                *v = (*v - max).exp();
                sum += *v;
            } else {
                *v = T::zero();
            }
        }
        row.mapv_inplace(|v| v / sum);
    }
}

impl<T: Scalar> DecoderModel<T> {
    pub fn zeros(config: DecoderConfig) -> Self {
        let d = config.d_model;
        Self {
            config,
            wte: Array2::zeros((config.vocab_size, d)),
            wpe: Array2::zeros((config.context, d)),
            layers: (0..config.n_layers).map(|_| LayerParams::zeros(d, config.d_ff)).collect(),
            lnf_g: Array1::zeros(d),
            lnf_b: Array1::zeros(d),
        }
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, config: DecoderConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        Ok(Self {
            config,
            wte: randn(rng, (config.vocab_size, d), init_std(d)),
            wpe: randn(rng, (config.context, d), 0.01),
            layers: (0..config.n_layers)
                .map(|_| LayerParams::init(rng, d, config.d_ff, config.n_layers))
                .collect(),
            lnf_g: Array1::ones(d),
            lnf_b: Array1::zeros(d),
        })
    }

    /// Rows of the token embedding table for `ids`.
    pub fn embed_tokens(&self, ids: &[usize]) -> Result<Array2<T>> {
        let mut out = Array2::zeros((ids.len(), self.config.d_model));
        for (r, &id) in ids.iter().enumerate() {
            if id >= self.config.vocab_size {
                return Err(Error::BadTokenId(id));
            }
            out.row_mut(r).assign(&self.wte.row(id));
        }
        Ok(out)
    }

    fn check_input(&self, x: &Array2<T>) -> Result<()> {
        if x.ncols() != self.config.d_model {
            return Err(Error::DimensionMismatch {
                expected: self.config.d_model,
                actual: x.ncols(),
            });
        }
        if x.nrows() == 0 {
            return Err(Error::Invalid("empty decoder input".into()));
        }
        if x.nrows() > self.config.context {
            return Err(Error::ContextOverflow {
                len: x.nrows(),
                max: self.config.context,
            });
        }
        Ok(())
    }

    /// Per-position vocabulary logits for a sequence of input embeddings.
    pub fn forward(&self, x: &Array2<T>) -> Result<Array2<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Array2<T>) -> Result<(Array2<T>, DecoderCache<T>)> {
        self.check_input(x)?;
        let len = x.nrows();
        let d = self.config.d_model;
        let nh = self.config.n_heads;
        let dh = d / nh;
        let scale: T = c(1.0 / (dh as f64).sqrt());
        let mut h = x + &self.wpe.slice(s![..len, ..]);
        let mut caches = Vec::with_capacity(self.layers.len());
        for lp in &self.layers {
            let (a, ln1) = layer_norm(&h, &lp.ln1_g, &lp.ln1_b);
            let qkv = linear(a.view(), lp.w_qkv.view(), Some(lp.b_qkv.view()));
            let q = qkv.slice(s![.., ..d]).to_owned();
            let k = qkv.slice(s![.., d..2 * d]).to_owned();
            let v = qkv.slice(s![.., 2 * d..]).to_owned();
            let mut attn = Array2::zeros((len, d));
            let mut probs = Vec::with_capacity(nh);
            for hd in 0..nh {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let mut sc = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                softmax_causal(&mut sc);
                attn.slice_mut(cols).assign(&sc.dot(&v.slice(cols)));
                probs.push(sc);
            }
            let h1 = &h + &linear(attn.view(), lp.w_o.view(), Some(lp.b_o.view()));
            let (m, ln2) = layer_norm(&h1, &lp.ln2_g, &lp.ln2_b);
            let f = linear(m.view(), lp.w_fc.view(), Some(lp.b_fc.view()));
            let g = f.mapv(gelu);
            h = &h1 + &linear(g.view(), lp.w_proj.view(), Some(lp.b_proj.view()));
            caches.push(LayerCache {
                ln1,
                a,
                q,
                k,
                v,
                probs,
                attn,
                ln2,
                m,
                f,
                g,
            });
        }
        let (hf, lnf) = layer_norm(&h, &self.lnf_g, &self.lnf_b);
        let logits = hf.dot(&self.wte.t());
        Ok((
            logits,
            DecoderCache {
                layers: caches,
                lnf,
                hf,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input embeddings.
    pub fn backward(&self, cache: &DecoderCache<T>, dlogits: &Array2<T>, grads: &mut Self) -> Array2<T> {
        let len = dlogits.nrows();
        let d = self.config.d_model;
        let nh = self.config.n_heads;
        let dh = d / nh;
        let scale: T = c(1.0 / (dh as f64).sqrt());

        grads.wte.scaled_add(T::one(), &dlogits.t().dot(&cache.hf));
        let dhf = dlogits.dot(&self.wte);
        let mut dh_ = layer_norm_backward(&cache.lnf, &self.lnf_g, &dhf, &mut grads.lnf_g, &mut grads.lnf_b);

        for ((lp, lc), lg) in self.layers.iter().zip(&cache.layers).zip(&mut grads.layers).rev() {
            // feed-forward branch
            let dg = linear_backward(lc.g.view(), lp.w_proj.view(), dh_.view(), &mut lg.w_proj, Some(&mut lg.b_proj));
            let df = &dg * &lc.f.mapv(gelu_grad);
            let dm = linear_backward(lc.m.view(), lp.w_fc.view(), df.view(), &mut lg.w_fc, Some(&mut lg.b_fc));
            dh_ += &layer_norm_backward(&lc.ln2, &lp.ln2_g, &dm, &mut lg.ln2_g, &mut lg.ln2_b);

            // attention branch
            let dattn = linear_backward(lc.attn.view(), lp.w_o.view(), dh_.view(), &mut lg.w_o, Some(&mut lg.b_o));
            let mut dqkv = Array2::zeros((len, 3 * d));
            for hd in 0..nh {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let p = &lc.probs[hd];
                let d_o = dattn.slice(cols);
                let dv = p.t().dot(&d_o);
                let dp = d_o.dot(&lc.v.slice(cols).t());
                let mut ds = Array2::zeros((len, len));
                for t in 0..len {
                    let dot: T = (0..=t).map(|j| dp[[t, j]] * p[[t, j]]).sum();
                    for j in 0..=t {
                        ds[[t, j]] = p[[t, j]] * (dp[[t, j]] - dot) * scale;
                    }
                }
                let dq = ds.dot(&lc.k.slice(cols));
                let dk = ds.t().dot(&lc.q.slice(cols));
                dqkv.slice_mut(s![.., hd * dh..(hd + 1) * dh]).assign(&dq);
                dqkv.slice_mut(s![.., d + hd * dh..d + (hd + 1) * dh]).assign(&dk);
                dqkv.slice_mut(s![.., 2 * d + hd * dh..2 * d + (hd + 1) * dh]).assign(&dv);
            }
            let da = linear_backward(lc.a.view(), lp.w_qkv.view(), dqkv.view(), &mut lg.w_qkv, Some(&mut lg.b_qkv));
            dh_ += &layer_norm_backward(&lc.ln1, &lp.ln1_g, &da, &mut lg.ln1_g, &mut lg.ln1_b);
        }
        grads.wpe.slice_mut(s![..len, ..]).scaled_add(T::one(), &dh_);
        dh_
    }

    /// Adds `dx` rows into the embedding-table gradient for the given token ids.
    pub fn scatter_token_grad(grads: &mut Self, ids: &[usize], dx: ndarray::ArrayView2<T>) {
        for (r, &id) in ids.iter().enumerate() {
            let mut row = grads.wte.row_mut(id);
            row += &dx.row(r);
        }
    }

    /// Whether the named tensor belongs to a frozen layer.
    pub fn is_frozen(&self, name: &str) -> bool {
        in_frozen_layer(name, self.config.frozen_below)
    }
}

impl<T: Scalar> ParamSet<T> for DecoderModel<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        let mut out = vec![view2("", "wte", &self.wte), view2("", "wpe", &self.wpe)];
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(l.views(&format!("layers.{i}.")));
        }
        out.push(view1("", "lnf.weight", &self.lnf_g));
        out.push(view1("", "lnf.bias", &self.lnf_b));
        out
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_, T>> {
        let mut out = vec![view2_mut("", "wte", &mut self.wte), view2_mut("", "wpe", &mut self.wpe)];
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.extend(l.views_mut(&format!("layers.{i}.")));
        }
        out.push(view1_mut("", "lnf.weight", &mut self.lnf_g));
        out.push(view1_mut("", "lnf.bias", &mut self.lnf_b));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::cast_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(vocab: usize) -> DecoderConfig {
        DecoderConfig {
            vocab_size: vocab,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            d_ff: 12,
            context: 10,
            frozen_below: 1,
        }
    }

    fn rand_input(rng: &mut ChaCha8Rng, len: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((len, d), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn frozen_layer_count() {
        assert_eq!(default_frozen(12), 8);
        assert_eq!(default_frozen(4), 2);
        assert_eq!(DecoderConfig::full(100).frozen_below, 8);
    }

    #[test]
    fn logits_shape_and_context_overflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = DecoderModel::<f64>::init(&mut rng, tiny(7)).unwrap();
        assert_eq!(m.forward(&rand_input(&mut rng, 1, 8)).unwrap().dim(), (1, 7));
        assert!(matches!(
            m.forward(&rand_input(&mut rng, 11, 8)),
            Err(Error::ContextOverflow { len: 11, max: 10 })
        ));
        assert!(matches!(
            m.forward(&Array2::zeros((2, 5))),
            Err(Error::DimensionMismatch { expected: 8, actual: 5 })
        ));
    }

    #[test]
    fn causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DecoderModel::<f64>::init(&mut rng, tiny(9)).unwrap();
        let x = rand_input(&mut rng, 7, 8);
        let base = m.forward(&x).unwrap();
        for t in 0..6 {
            let mut y = x.clone();
            for j in 0..8 {
                y[[t + 1, j]] += 0.5;
            }
            let out = m.forward(&y).unwrap();
            assert_eq!(base.slice(s![..=t, ..]), out.slice(s![..=t, ..]));
            assert_ne!(base.row(t + 1), out.row(t + 1));
        }
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = DecoderModel::<f32>::init(&mut ChaCha8Rng::seed_from_u64(5), DecoderConfig::desk(30)).unwrap();
        let b = DecoderModel::<f32>::init(&mut ChaCha8Rng::seed_from_u64(5), DecoderConfig::desk(30)).unwrap();
        let x = Array2::from_elem((3, 64), 0.1f32);
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = DecoderModel::<f64>::init(&mut rng, tiny(6)).unwrap();
        // larger weights than the init so attention is far from uniform
        for p in m.params_mut() {
            for v in p.data.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let x = rand_input(&mut rng, 5, 8);
        let w = rand_input(&mut rng, 5, 6);
        let loss = |m: &DecoderModel<f64>, x: &Array2<f64>| (&m.forward(x).unwrap() * &w).sum();

        let (_, cache) = m.forward_cached(&x).unwrap();
        let mut g = DecoderModel::zeros(m.config);
        let dx = m.backward(&cache, &w, &mut g);
        let eps = 1e-5;
        let check = |name: &str, a: f64, fd: f64| {
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            assert!(err < 1e-4, "{name}: analytic {a} fd {fd}");
        };
        let analytic: Vec<Vec<f64>> = g.params().iter().map(|p| p.data.to_vec()).collect();
        let names: Vec<String> = g.params().iter().map(|p| p.name.clone()).collect();
        for (ti, grad) in analytic.iter().enumerate() {
            for (k, &gk) in grad.iter().enumerate() {
                let mut plus = m.clone();
                plus.params_mut()[ti].data[k] += eps;
                let mut minus = m.clone();
                minus.params_mut()[ti].data[k] -= eps;
                let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * eps);
                check(&format!("{}[{k}]", names[ti]), gk, fd);
            }
        }
        for idx in 0..x.len() {
            let (r, col) = (idx / 8, idx % 8);
            let mut xp = x.clone();
            xp[[r, col]] += eps;
            let mut xm = x.clone();
            xm[[r, col]] -= eps;
            let fd = (loss(&m, &xp) - loss(&m, &xm)) / (2.0 * eps);
            check("input", dx[[r, col]], fd);
        }
    }

    #[test]
    fn frozen_names() {
        let m = DecoderModel::<f32>::zeros(tiny(4));
        assert!(m.is_frozen("layers.0.ln1.weight"));
        assert!(!m.is_frozen("layers.1.ln1.weight"));
        assert!(!m.is_frozen("wte"));
        assert!(!m.is_frozen("lnf.bias"));
    }

    #[test]
    fn precision_cast_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m32 = DecoderModel::<f32>::init(&mut rng, tiny(6)).unwrap();
        let mut m64 = DecoderModel::<f64>::zeros(m32.config);
        cast_params(&m32, &mut m64);
        let x = rand_input(&mut rng, 4, 8);
        let a = m32.forward(&x.mapv(|v| v as f32)).unwrap();
        let b = m64.forward(&x).unwrap();
        for (p, q) in a.iter().zip(b.iter()) {
            assert!((*p as f64 - q).abs() < 1e-4);
        }
    }
}
