use ndarray::{Array1, Array2};
use rand::Rng;

use crate::tensor::{c, randn, view1, view1_mut, view2, view2_mut, ParamSet, ParamView, ParamViewMut, Scalar};

/// Learnable tensors of one selective-SSM block.
///
/// The transition is stored as `a_log` with `A = -exp(a_log)`, which keeps
/// every entry of `A` strictly negative under any update.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmBlockParams<T> {
    pub d_model: usize,
    pub n_state: usize,
    pub norm_scale: Array1<T>,
    pub in_proj: Array2<T>,
    pub gate_proj: Array2<T>,
    pub w_delta: Array2<T>,
    pub b_delta: Array1<T>,
    pub w_b: Array2<T>,
    pub b_b: Array1<T>,
    pub w_c: Array2<T>,
    pub b_c: Array1<T>,
    /// `d_model x n_state`
    pub a_log: Array2<T>,
    pub d_skip: Array1<T>,
    pub out_proj: Array2<T>,
}

impl<T: Scalar> SsmBlockParams<T> {
    pub fn zeros(d_model: usize, n_state: usize) -> Self {
        let (d, n) = (d_model, n_state);
        Self {
            d_model,
            n_state,
            norm_scale: Array1::zeros(d),
            in_proj: Array2::zeros((d, d)),
            gate_proj: Array2::zeros((d, d)),
            w_delta: Array2::zeros((d, d)),
            b_delta: Array1::zeros(d),
            w_b: Array2::zeros((n, d)),
            b_b: Array1::zeros(n),
            w_c: Array2::zeros((n, d)),
            b_c: Array1::zeros(n),
            a_log: Array2::zeros((d, n)),
            d_skip: Array1::zeros(d),
            out_proj: Array2::zeros((d, d)),
        }
    }

    /// `A = -(1..=n_state)` per channel; `softplus(b_delta)` log-uniform in
    /// `[0.01, 0.1]`; projections scaled by `1/sqrt(d_model)`.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, d_model: usize, n_state: usize) -> Self {
        let (d, n) = (d_model, n_state);
        let std = 1.0 / (d as f64).sqrt();
        let b_delta = Array1::from_shape_fn(d, |_| {
            let dt: f64 = (rng.random_range(0.01f64.ln()..0.1f64.ln())).exp();
            // inverse softplus
            c(dt + (-(-dt).exp_m1()).ln())
        });
        Self {
            d_model,
            n_state,
            norm_scale: Array1::ones(d),
            in_proj: randn(rng, (d, d), std),
            gate_proj: randn(rng, (d, d), std),
            w_delta: randn(rng, (d, d), 0.1 * std),
            b_delta,
            w_b: randn(rng, (n, d), std),
            b_b: Array1::zeros(n),
            w_c: randn(rng, (n, d), std),
            b_c: Array1::zeros(n),
            a_log: Array2::from_shape_fn((d, n), |(_, i)| c(((i + 1) as f64).ln())),
            d_skip: Array1::ones(d),
            out_proj: randn(rng, (d, d), 0.5 * std),
        }
    }

    /// Continuous-time transition `A = -exp(a_log)`.
    pub fn a(&self) -> Array2<T> {
        self.a_log.mapv(|x| -x.exp())
    }
}

impl<T: Scalar> ParamSet<T> for SsmBlockParams<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        vec![
            view1("", "norm_scale", &self.norm_scale),
            view2("", "in_proj", &self.in_proj),
            view2("", "gate_proj", &self.gate_proj),
            view2("", "w_delta", &self.w_delta),
            view1("", "b_delta", &self.b_delta),
            view2("", "w_b", &self.w_b),
            view1("", "b_b", &self.b_b),
            view2("", "w_c", &self.w_c),
            view1("", "b_c", &self.b_c),
            view2("", "a_log", &self.a_log),
            view1("", "d_skip", &self.d_skip),
            view2("", "out_proj", &self.out_proj),
        ]
    }

    fn params_mut(&mut self) -> Vec<ParamViewMut<'_, T>> {
        vec![
            view1_mut("", "norm_scale", &mut self.norm_scale),
            view2_mut("", "in_proj", &mut self.in_proj),
            view2_mut("", "gate_proj", &mut self.gate_proj),
            view2_mut("", "w_delta", &mut self.w_delta),
            view1_mut("", "b_delta", &mut self.b_delta),
            view2_mut("", "w_b", &mut self.w_b),
            view1_mut("", "b_b", &mut self.b_b),
            view2_mut("", "w_c", &mut self.w_c),
            view1_mut("", "b_c", &mut self.b_c),
            view2_mut("", "a_log", &mut self.a_log),
            view1_mut("", "d_skip", &mut self.d_skip),
            view2_mut("", "out_proj", &mut self.out_proj),
        ]
    }
}
