//! Selective state-space mapping network.

pub mod block;
pub mod mapping;
pub mod params;
pub mod scan;

pub use block::{block_backward, block_forward, block_forward_cached, BlockCache};
pub use mapping::{MappingConfig, MappingNetwork, MappingTape};
pub use params::SsmBlockParams;
pub use scan::{discretize, project_dynamics, scan_backward, selective_scan, selective_scan_cached, Dynamics, ScanState};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::tensor::{cast_params, ParamSet};
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_input(rng: &mut ChaCha8Rng, len: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((len, d), |_| rng.random_range(-1.0..1.0))
    }

    /// Step-by-step recurrence written with scalar loops only.
    fn naive_scan(u: &Array2<f64>, p: &SsmBlockParams<f64>) -> Array2<f64> {
        let (len, d) = u.dim();
        let n = p.n_state;
        let mut h = vec![vec![0.0f64; n]; d];
        let mut y = Array2::zeros((len, d));
        for t in 0..len {
            let x: Vec<f64> = (0..d).map(|k| u[[t, k]]).collect();
            let lin = |w: &Array2<f64>, b: &Array1<f64>, r: usize| -> f64 {
                (0..d).map(|k| w[[r, k]] * x[k]).sum::<f64>() + b[r]
            };
            let bt: Vec<f64> = (0..n).map(|i| lin(&p.w_b, &p.b_b, i)).collect();
            let ct: Vec<f64> = (0..n).map(|i| lin(&p.w_c, &p.b_c, i)).collect();
            for ch in 0..d {
                let z = lin(&p.w_delta, &p.b_delta, ch);
                let dt = (1.0 + z.exp()).ln();
                let mut out = 0.0;
                for i in 0..n {
                    let a = -p.a_log[[ch, i]].exp();
                    let az = a * dt;
                    let a_bar = az.exp();
                    let b_bar = if az.abs() < 1e-5 {
                        dt * (1.0 + az / 2.0 + az * az / 6.0) * bt[i]
                    } else {
                        (az.exp() - 1.0) / a * bt[i]
                    };
                    h[ch][i] = a_bar * h[ch][i] + b_bar * x[ch];
                    out += ct[i] * h[ch][i];
                }
                y[[t, ch]] = out + p.d_skip[ch] * x[ch];
            }
        }
        y
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn scan_matches_naive_recurrence(seed in any::<u64>(), len in 1usize..24, d in 1usize..12, n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = SsmBlockParams::<f64>::init(&mut rng, d, n);
            let u = random_input(&mut rng, len, d);
            let (y, _) = selective_scan(&u, &p);
            let want = naive_scan(&u, &p);
            for (a, b) in y.iter().zip(want.iter()) {
                prop_assert!(rel_close(*a, *b, 1e-6), "{} vs {}", a, b);
            }
        }

        #[test]
        fn a_bar_stays_in_unit_interval(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = SsmBlockParams::<f64>::init(&mut rng, 6, 4);
            let x = random_input(&mut rng, 1, 6);
            let dynm = project_dynamics(x.row(0), &p);
            let a = p.a();
            for ch in 0..6 {
                prop_assert!(dynm.delta[ch] > 0.0);
                let (ab, _) = discretize(a.row(ch).as_slice().unwrap(), dynm.delta[ch], dynm.b.as_slice().unwrap());
                for v in ab {
                    prop_assert!(v > 0.0 && v < 1.0);
                }
            }
        }
    }

    #[test]
    fn unit_recurrence_is_a_running_sum() {
        let (d, n, len) = (3, 4, 6);
        let mut p = SsmBlockParams::<f64>::zeros(d, n);
        // delta = softplus(-60) ~ 8.8e-27 so |A delta| is in the small-step branch
        p.b_delta.fill(-60.0);
        let dt = (-60.0f64).exp().ln_1p();
        p.b_b.fill(1.0 / dt);
        p.b_c.fill(1.0 / n as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_input(&mut rng, len, d);
        let (y, _) = selective_scan(&u, &p);
        for ch in 0..d {
            let mut acc = 0.0;
            for t in 0..len {
                acc += u[[t, ch]];
                assert!((y[[t, ch]] - acc).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_out_proj_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = SsmBlockParams::<f32>::init(&mut rng, 8, 3);
        p.out_proj.fill(0.0);
        let x = Array2::from_shape_fn((5, 8), |_| rng.random_range(-1.0f32..1.0));
        assert_eq!(block_forward(&x, &p), x);
    }

    #[test]
    fn block_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = SsmBlockParams::<f32>::init(&mut rng, 16, 4);
        let x = Array2::from_shape_fn((10, 16), |_| rng.random_range(-1.0f32..1.0));
        let a = block_forward(&x, &p);
        let b = block_forward(&x, &p);
        assert_eq!(a.as_slice().unwrap(), b.as_slice().unwrap());
    }

    #[test]
    fn mapping_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = MappingNetwork::<f32>::init(&mut rng, MappingConfig::desk());
        let x = Array1::from_shape_fn(32, |_| rng.random_range(-1.0f32..1.0));
        assert_eq!(net.forward(x.view()).unwrap().dim(), (4, 64));
        assert!(matches!(
            net.forward(Array1::zeros(31).view()),
            Err(Error::DimensionMismatch { expected: 32, actual: 31 })
        ));
    }

    #[test]
    fn full_scale_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cfg = MappingConfig { n_blocks: 1, ..MappingConfig::default() };
        let net = MappingNetwork::<f32>::init(&mut rng, cfg);
        let x = Array1::from_shape_fn(512, |_| rng.random_range(-1.0f32..1.0));
        assert_eq!(net.forward(x.view()).unwrap().dim(), (10, 768));
    }

    #[test]
    fn zero_expand_and_residual_blocks_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = MappingNetwork::<f64>::init(&mut rng, MappingConfig::desk());
        net.expand_w.fill(0.0);
        net.expand_b.fill(0.0);
        for b in &mut net.blocks {
            b.out_proj.fill(0.0);
        }
        let x = Array1::from_shape_fn(32, |_| rng.random_range(-1.0..1.0));
        assert!(net.forward(x.view()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_requires_forward() {
        let net = MappingNetwork::<f64>::zeros(MappingConfig::desk());
        let mut g = MappingNetwork::zeros(MappingConfig::desk());
        let tape = MappingTape::default();
        assert!(matches!(
            net.backward(&tape, &Array2::zeros((4, 64)), &mut g),
            Err(Error::BackwardWithoutForward)
        ));
    }

    #[test]
    fn d_gradient_is_column_sum_of_scan_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = SsmBlockParams::<f64>::init(&mut rng, 5, 3);
        let u = random_input(&mut rng, 7, 5);
        let (y, cache) = selective_scan_cached(&u, &p);
        let mut g = SsmBlockParams::zeros(5, 3);
        scan_backward(&cache, &Array2::ones(y.dim()), &p, &mut g);
        for ch in 0..5 {
            let want: f64 = u.column(ch).sum();
            assert!((g.d_skip[ch] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cfg = MappingConfig { input_dim: 6, seq_len: 3, d_model: 8, n_blocks: 2, n_state: 3 };
        let net = MappingNetwork::<f64>::init(&mut rng, cfg);
        let x = Array1::from_shape_fn(6, |_| rng.random_range(-1.0..1.0));
        let mut tape = MappingTape::default();
        net.forward_recorded(x.view(), &mut tape).unwrap();
        let mut g = MappingNetwork::zeros(cfg);
        net.backward(&tape, &Array2::zeros((3, 8)), &mut g).unwrap();
        assert!(g.params().iter().all(|p| p.data.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let cfg = MappingConfig { input_dim: 5, seq_len: 4, d_model: 6, n_blocks: 2, n_state: 3 };
        let mut net = MappingNetwork::<f64>::init(&mut rng, cfg);
        // larger steps than the default init so the exp path is exercised
        for b in &mut net.blocks {
            b.b_delta.mapv_inplace(|v| v + 2.0);
        }
        let x = Array1::from_shape_fn(5, |_| rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_fn((4, 6), |_| rng.random_range(-1.0..1.0));
        let loss = |n: &MappingNetwork<f64>| (&n.forward(x.view()).unwrap() * &w).sum();

        let mut tape = MappingTape::default();
        net.forward_recorded(x.view(), &mut tape).unwrap();
        let mut g = MappingNetwork::zeros(cfg);
        net.backward(&tape, &w, &mut g).unwrap();
        let analytic: Vec<(String, Vec<f64>)> = g.params().into_iter().map(|p| (p.name, p.data.to_vec())).collect();

        let eps = 1e-5;
        for (ti, (name, grad)) in analytic.iter().enumerate() {
            for (k, &gk) in grad.iter().enumerate() {
                let mut plus = net.clone();
                plus.params_mut()[ti].data[k] += eps;
                let mut minus = net.clone();
                minus.params_mut()[ti].data[k] -= eps;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                let err = (fd - gk).abs() / fd.abs().max(gk.abs()).max(1e-6);
                assert!(err < 1e-4, "{name}[{k}]: analytic {gk} fd {fd}");
            }
        }
    }

    #[test]
    fn f32_and_f64_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let net32 = MappingNetwork::<f32>::init(&mut rng, MappingConfig::desk());
        let mut net64 = MappingNetwork::<f64>::zeros(MappingConfig::desk());
        cast_params(&net32, &mut net64);
        let x = Array1::from_shape_fn(32, |_| rng.random_range(-1.0f32..1.0));
        let y32 = net32.forward(x.view()).unwrap();
        let y64 = net64.forward(x.mapv(|v| v as f64).view()).unwrap();
        for (a, b) in y32.iter().zip(y64.iter()) {
            assert!((*a as f64 - b).abs() < 1e-4);
        }
    }
}
