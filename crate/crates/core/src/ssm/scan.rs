//! Input-dependent dynamics, zero-order-hold discretization and the
//! sequential selective scan, with reverse-mode gradients.
//!
//! Shapes: `u` is `seq_len x d_model`; each channel `c` carries a state
//! `h[c] in R^n_state`; `B_t`, `C_t in R^n_state` are shared across channels
//! and `delta_t in R^d_model` is per channel.
//!
//! ```text
//! delta_t = softplus(W_delta u_t + b_delta)
//! B_t     = W_B u_t + b_B,   C_t = W_C u_t + b_C
//! Abar    = exp(A[c] * delta_t[c])
//! Bbar    = (exp(A[c] * delta_t[c]) - 1) / A[c] * B_t
//! h_t[c]  = Abar * h_{t-1}[c] + Bbar * u_t[c]
//! y_t[c]  = <C_t, h_t[c]> + D[c] u_t[c]
//! ```

use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::params::SsmBlockParams;
use crate::tensor::{c, sigmoid, softplus, Scalar};

/// Below this `|A * delta|`, `Bbar` uses the limit value `delta * B`.
pub const SMALL_STEP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics<T> {
    pub delta: Array1<T>,
    pub b: Array1<T>,
    pub c: Array1<T>,
}

/// Per-token projections; `x_t` has `d_model` entries.
pub fn project_dynamics<T: Scalar>(x_t: ArrayView1<T>, p: &SsmBlockParams<T>) -> Dynamics<T> {
    let pre = p.w_delta.dot(&x_t) + &p.b_delta;
    Dynamics {
        delta: pre.mapv(softplus),
        b: p.w_b.dot(&x_t) + &p.b_b,
        c: p.w_c.dot(&x_t) + &p.b_c,
    }
}

/// Zero-order hold for one channel: returns `(Abar, Bbar)`.
pub fn discretize<T: Scalar>(a_row: &[T], delta: T, b: &[T]) -> (Vec<T>, Vec<T>) {
    let mut a_bar = Vec::with_capacity(a_row.len());
    let mut b_bar = Vec::with_capacity(a_row.len());
    for (&a, &bi) in a_row.iter().zip(b) {
        let (ab, g) = zoh(a, delta);
        a_bar.push(ab);
        b_bar.push(g * bi);
    }
    (a_bar, b_bar)
}

/// `(exp(a d), (exp(a d) - 1) / a)` with the small-step limit `d`.
#[inline]
fn zoh<T: Scalar>(a: T, d: T) -> (T, T) {
    let z = a * d;
    let g = if z.abs() < c(SMALL_STEP) { d } else { z.exp_m1() / a };
    (z.exp(), g)
}

/// Partial derivatives of `g(a, d) = expm1(a d) / a`: `(dg/da, dg/dd)`.
#[inline]
fn zoh_grad<T: Scalar>(a: T, d: T) -> (T, T) {
    let z = a * d;
    if z.abs() < c(SMALL_STEP) {
        return (T::zero(), T::one());
    }
    let dg_dd = z.exp();
    // dg/da = d^2 (z e^z - expm1 z) / z^2, series near zero to avoid cancellation
    let s = if z.abs() < c(1e-4) {
        c::<T>(0.5) + z / c(3.0) + z * z / c(8.0)
    } else {
        (z * z.exp() - z.exp_m1()) / (z * z)
    };
    (d * d * s, dg_dd)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanState<T> {
    /// `d_model x n_state`
    pub h: Array2<T>,
    pub t: usize,
}

/// Activations recorded for [`scan_backward`].
#[derive(Debug, Clone)]
pub struct ScanCache<T> {
    u: Array2<T>,
    delta_pre: Array2<T>,
    delta: Array2<T>,
    b: Array2<T>,
    c: Array2<T>,
    /// `h_t` for t = 1..=T, each `d_model x n_state`
    hs: Vec<Array2<T>>,
}

pub fn selective_scan<T: Scalar>(u: &Array2<T>, p: &SsmBlockParams<T>) -> (Array2<T>, ScanState<T>) {
    let (y, cache) = selective_scan_cached(u, p);
    let t = u.nrows();
    let h = cache.hs.last().cloned().unwrap_or_else(|| Array2::zeros((p.d_model, p.n_state)));
    (y, ScanState { h, t })
}

pub fn selective_scan_cached<T: Scalar>(u: &Array2<T>, p: &SsmBlockParams<T>) -> (Array2<T>, ScanCache<T>) {
    let (len, d) = u.dim();
    let n = p.n_state;
    let delta_pre = u.dot(&p.w_delta.t()) + &p.b_delta;
    let delta = delta_pre.mapv(softplus);
    let b = u.dot(&p.w_b.t()) + &p.b_b;
    let cm = u.dot(&p.w_c.t()) + &p.b_c;
    let a = p.a();

    let mut h = Array2::<T>::zeros((d, n));
    let mut hs = Vec::with_capacity(len);
    let mut y = Array2::<T>::zeros((len, d));
    for t in 0..len {
        for ch in 0..d {
            let dt = delta[[t, ch]];
            let ut = u[[t, ch]];
            let mut acc = T::zero();
            for i in 0..n {
                let (a_bar, g) = zoh(a[[ch, i]], dt);
                let hv = a_bar * h[[ch, i]] + g * b[[t, i]] * ut;
                h[[ch, i]] = hv;
                acc += cm[[t, i]] * hv;
            }
            y[[t, ch]] = acc + p.d_skip[ch] * ut;
        }
        hs.push(h.clone());
    }
    (
        y,
        ScanCache {
            u: u.clone(),
            delta_pre,
            delta,
            b,
            c: cm,
            hs,
        },
    )
}

/// Accumulates parameter gradients into `g` and returns `du`.
pub fn scan_backward<T: Scalar>(
    cache: &ScanCache<T>,
    dy: &Array2<T>,
    p: &SsmBlockParams<T>,
    g: &mut SsmBlockParams<T>,
) -> Array2<T> {
    let (len, d) = cache.u.dim();
    let n = p.n_state;
    let a = p.a();
    let u = &cache.u;

    let mut du = Array2::<T>::zeros((len, d));
    let mut d_delta = Array2::<T>::zeros((len, d));
    let mut db = Array2::<T>::zeros((len, n));
    let mut dc = Array2::<T>::zeros((len, n));
    let mut da = Array2::<T>::zeros((d, n));
    let mut dh = Array2::<T>::zeros((d, n));
    let zero_state = Array2::<T>::zeros((d, n));

    for t in (0..len).rev() {
        let h_t = &cache.hs[t];
        let h_prev = if t > 0 { &cache.hs[t - 1] } else { &zero_state };
        for ch in 0..d {
            let gy = dy[[t, ch]];
            let ut = u[[t, ch]];
            let dt = cache.delta[[t, ch]];
            g.d_skip[ch] += gy * ut;
            let mut du_t = p.d_skip[ch] * gy;
            let mut ddt = T::zero();
            for i in 0..n {
                dc[[t, i]] += gy * h_t[[ch, i]];
                let dhi = dh[[ch, i]] + gy * cache.c[[t, i]];
                let ai = a[[ch, i]];
                let (a_bar, gz) = zoh(ai, dt);
                let bi = cache.b[[t, i]];
                // h = a_bar h_prev + gz * b * u
                let d_abar = dhi * h_prev[[ch, i]];
                let d_gz = dhi * bi * ut;
                db[[t, i]] += dhi * gz * ut;
                du_t += dhi * gz * bi;
                // a_bar = exp(a dt)
                let (dg_da, dg_dd) = zoh_grad(ai, dt);
                da[[ch, i]] += d_abar * a_bar * dt + d_gz * dg_da;
                ddt += d_abar * a_bar * ai + d_gz * dg_dd;
                dh[[ch, i]] = dhi * a_bar;
            }
            d_delta[[t, ch]] = ddt;
            du[[t, ch]] += du_t;
        }
    }

    // A = -exp(a_log)  =>  dA/da_log = A
    g.a_log.zip_mut_with(&(&da * &a), |x, &v| *x += v);

    let d_pre = &d_delta * &cache.delta_pre.mapv(sigmoid);
    g.w_delta += &d_pre.t().dot(u);
    g.b_delta += &d_pre.sum_axis(Axis(0));
    g.w_b += &db.t().dot(u);
    g.b_b += &db.sum_axis(Axis(0));
    g.w_c += &dc.t().dot(u);
    g.b_c += &dc.sum_axis(Axis(0));
    du += &d_pre.dot(&p.w_delta);
    du += &db.dot(&p.w_b);
    du += &dc.dot(&p.w_c);
    du
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softplus_of_zero_projection() {
        let mut p = SsmBlockParams::<f64>::zeros(3, 2);
        p.b_delta.fill(0.0);
        let dynm = project_dynamics(array![0.0, 0.0, 0.0].view(), &p);
        for &d in dynm.delta.iter() {
            assert!((d - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn discretize_analytic_case() {
        let (a_bar, b_bar) = discretize(&[-1.0f64], std::f64::consts::LN_2, &[3.0]);
        assert!((a_bar[0] - 0.5).abs() < 1e-12);
        assert!((b_bar[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn discretize_small_step_limit() {
        for delta in [1e-10f64, 1e-6] {
            let a = [-1.0, -2.5, -4.0];
            let b = [0.7, -2.0, 1.0];
            let (a_bar, b_bar) = discretize(&a, delta, &b);
            for i in 0..3 {
                assert!((a_bar[i] - 1.0).abs() < 1e-5);
                assert!((b_bar[i] - delta * b[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn discretize_matches_series_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let a: f64 = -rng.random_range(0.01..20.0);
            let d: f64 = 10f64.powf(rng.random_range(-9.0..0.5));
            let b: f64 = rng.random_range(-3.0..3.0);
            let (ab, bb) = discretize(&[a], d, &[b]);
            // Taylor series of exp and of expm1(z)/z
            let z = a * d;
            let (mut term, mut e, mut g) = (1.0f64, 0.0f64, 0.0f64);
            if z.abs() < 1.0 {
                for k in 0..40 {
                    e += term;
                    g += term / (k as f64 + 1.0);
                    term *= z / (k as f64 + 1.0);
                }
            } else {
                e = z.exp();
                g = (e - 1.0) / z;
            }
            assert!((ab[0] - e).abs() <= 1e-6 * e.abs());
            let want = d * g * b;
            assert!((bb[0] - want).abs() <= 1e-6 * want.abs() + 1e-300, "{a} {d} {b}");
        }
    }

    #[test]
    fn zoh_grad_matches_finite_difference() {
        for &(a, d) in &[(-1.0f64, 0.3), (-5.0, 1e-5), (-0.5, 2.0), (-16.0, 0.01)] {
            let g = |a: f64, d: f64| zoh(a, d).1;
            let (ga, gd) = zoh_grad(a, d);
            let h = 1e-6 * a.abs();
            let fa = (g(a + h, d) - g(a - h, d)) / (2.0 * h);
            let hd = 1e-6 * d;
            let fd = (g(a, d + hd) - g(a, d - hd)) / (2.0 * hd);
            assert!((ga - fa).abs() <= 1e-6 * fa.abs().max(1e-12), "{a} {d}: {ga} vs {fa}");
            assert!((gd - fd).abs() <= 1e-6 * fd.abs(), "{a} {d}");
        }
    }

    #[test]
    fn single_step_has_no_history() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = SsmBlockParams::<f64>::init(&mut rng, 4, 3);
        let u = Array2::from_shape_fn((1, 4), |_| rng.random_range(-1.0..1.0));
        let (_, st) = selective_scan(&u, &p);
        let dynm = project_dynamics(u.row(0), &p);
        let a = p.a();
        for ch in 0..4 {
            let (_, bb) = discretize(a.row(ch).as_slice().unwrap(), dynm.delta[ch], dynm.b.as_slice().unwrap());
            for (i, b) in bb.iter().enumerate() {
                assert_eq!(st.h[[ch, i]], b * u[[0, ch]]);
            }
        }
    }
}
