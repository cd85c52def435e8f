use super::config::AdamConfig;
use crate::tensor::{ParamSet, Scalar};

/// Adam with bias correction. Moment buffers are kept in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<T: Scalar, P: ParamSet<T>>(config: AdamConfig, params: &P) -> Self {
        let shapes: Vec<usize> = params.params().iter().map(|p| p.data.len()).collect();
        Self {
            config,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update. Tensors for which `skip(name)` holds are left untouched,
    /// moments included.
    pub fn step<T: Scalar, P: ParamSet<T>>(&mut self, params: &mut P, grads: &P, lr: f64, skip: impl Fn(&str) -> bool) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .params_mut()
            .into_iter()
            .zip(grads.params())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            if skip(&p.name) {
                continue;
            }
            for (((w, &gi), mi), vi) in p.data.iter_mut().zip(g.data).zip(m.iter_mut()).zip(v.iter_mut()) {
                let gi = gi.to_f64_lossy();
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let upd = lr * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
                *w = T::from_f64_lossy(w.to_f64_lossy() - upd);
            }
        }
    }
}

/// Global L2 norm over tensors not excluded by `skip`, summed in `f64`.
pub fn global_norm<T: Scalar, P: ParamSet<T>>(grads: &P, skip: impl Fn(&str) -> bool) -> f64 {
    grads
        .params()
        .iter()
        .filter(|p| !skip(&p.name))
        .flat_map(|p| p.data.iter())
        .map(|&g| {
            let g = g.to_f64_lossy();
            g * g
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescales gradients so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm<T: Scalar, P: ParamSet<T>>(grads: &mut P, max_norm: f64, skip: impl Fn(&str) -> bool) -> f64 {
    let norm = global_norm(grads, &skip);
    if norm > max_norm && norm.is_finite() {
        let s = T::from_f64_lossy(max_norm / norm);
        for p in grads.params_mut() {
            if !skip(&p.name) {
                p.data.iter_mut().for_each(|g| *g *= s);
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{view1, view1_mut, ParamView, ParamViewMut};
    use ndarray::{array, Array1};

    #[derive(Clone)]
    struct Two {
        a: Array1<f64>,
        b: Array1<f64>,
    }

    impl ParamSet<f64> for Two {
        fn params(&self) -> Vec<ParamView<'_, f64>> {
            vec![view1("", "a", &self.a), view1("", "b", &self.b)]
        }
        fn params_mut(&mut self) -> Vec<ParamViewMut<'_, f64>> {
            vec![view1_mut("", "a", &mut self.a), view1_mut("", "b", &mut self.b)]
        }
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = Two {
            a: array![1.0, -2.0],
            b: array![0.5],
        };
        let g = Two {
            a: array![0.3, -4.0],
            b: array![2.0],
        };
        let mut opt = Adam::new(AdamConfig::default(), &p);
        opt.step(&mut p, &g, 0.1, |n| n == "b");
        assert!((p.a[0] - 0.9).abs() < 1e-6);
        assert!((p.a[1] + 1.9).abs() < 1e-6);
        assert_eq!(p.b[0], 0.5);
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let mut p = Two {
            a: array![1.0, -2.0],
            b: array![0.5],
        };
        let before = p.a.clone();
        let g = Two {
            a: array![0.3, -4.0],
            b: array![2.0],
        };
        let mut opt = Adam::new(AdamConfig::default(), &p);
        opt.step(&mut p, &g, 0.0, |_| false);
        assert_eq!(p.a, before);
    }

    #[test]
    fn clipping() {
        let mut g = Two {
            a: array![3.0, 0.0],
            b: array![4.0],
        };
        assert_eq!(clip_grad_norm(&mut g, 1.0, |_| false), 5.0);
        assert!((global_norm(&g, |_| false) - 1.0).abs() < 1e-12);
        let mut g = Two {
            a: array![0.3],
            b: array![100.0],
        };
        clip_grad_norm(&mut g, 1.0, |n| n == "b");
        assert_eq!(g.a[0], 0.3);
        assert_eq!(g.b[0], 100.0);
    }
}
