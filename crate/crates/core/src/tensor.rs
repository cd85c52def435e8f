//! Numeric plumbing shared by the mapping network and the decoder.
//!
//! Models are generic over [`Scalar`] so that the same forward and backward
//! code runs in `f32` for training and in `f64` for finite-difference checks.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub trait Scalar:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self;
    fn to_f64_lossy(self) -> f64;
    fn to_f32_lossy(self) -> f32;
}

impl Scalar for f32 {
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
    fn to_f32_lossy(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    fn from_f64_lossy(v: f64) -> Self {
        v
    }
    fn to_f64_lossy(self) -> f64 {
        self
    }
    fn to_f32_lossy(self) -> f32 {
        self as f32
    }
}

#[inline]
pub fn c<T: Scalar>(v: f64) -> T {
    T::from_f64_lossy(v)
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `x`.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn silu<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad<T: Scalar>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

/// `y = x W^T + b` for row-major batches; `w` is `(out, in)`.
pub fn linear<T: Scalar>(x: ArrayView2<T>, w: ArrayView2<T>, b: Option<ArrayView1<T>>) -> Array2<T> {
    let mut y = x.dot(&w.t());
    if let Some(b) = b {
        y += &b;
    }
    y
}

/// Accumulates the gradients of [`linear`] and returns `dx`.
pub fn linear_backward<T: Scalar>(
    x: ArrayView2<T>,
    w: ArrayView2<T>,
    dy: ArrayView2<T>,
    dw: &mut Array2<T>,
    db: Option<&mut Array1<T>>,
) -> Array2<T> {
    dw.scaled_add(T::one(), &dy.t().dot(&x));
    if let Some(db) = db {
        *db += &dy.sum_axis(Axis(0));
    }
    dy.dot(&w)
}

pub fn randn<T: Scalar, R: Rng + ?Sized>(rng: &mut R, shape: (usize, usize), std: f64) -> Array2<T> {
    let normal = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_fn(shape, |_| c(normal.sample(rng)))
}

/// A named, flat view of one parameter tensor.
pub struct ParamView<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

pub struct ParamViewMut<'a, T> {
    pub name: String,
    pub data: &'a mut [T],
}

/// Enumerates every learnable tensor in a fixed order.
///
/// Gradient containers share the model type, so zipping `params()` of a
/// model with `params()` of its gradient lines tensors up by position.
pub trait ParamSet<T> {
    fn params(&self) -> Vec<ParamView<'_, T>>;
    fn params_mut(&mut self) -> Vec<ParamViewMut<'_, T>>;

    fn zero_grad(&mut self)
    where
        T: Scalar,
    {
        for p in self.params_mut() {
            p.data.fill(T::zero());
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }
}

pub(crate) fn view1<'a, T>(prefix: &str, name: &str, a: &'a Array1<T>) -> ParamView<'a, T> {
    ParamView {
        name: format!("{prefix}{name}"),
        shape: vec![a.len()],
        data: a.as_slice().expect("standard layout"),
    }
}

pub(crate) fn view2<'a, T>(prefix: &str, name: &str, a: &'a Array2<T>) -> ParamView<'a, T> {
    ParamView {
        name: format!("{prefix}{name}"),
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("standard layout"),
    }
}

pub(crate) fn view1_mut<'a, T>(prefix: &str, name: &str, a: &'a mut Array1<T>) -> ParamViewMut<'a, T> {
    ParamViewMut {
        name: format!("{prefix}{name}"),
        data: a.as_slice_mut().expect("standard layout"),
    }
}

pub(crate) fn view2_mut<'a, T>(prefix: &str, name: &str, a: &'a mut Array2<T>) -> ParamViewMut<'a, T> {
    ParamViewMut {
        name: format!("{prefix}{name}"),
        data: a.as_slice_mut().expect("standard layout"),
    }
}

/// Converts every tensor of a parameter set into another precision.
pub fn cast_params<S, D, A, B>(src: &A, dst: &mut B)
where
    S: Scalar,
    D: Scalar,
    A: ParamSet<S>,
    B: ParamSet<D>,
{
    for (s, d) in src.params().into_iter().zip(dst.params_mut()) {
        debug_assert_eq!(s.name, d.name);
        for (x, y) in s.data.iter().zip(d.data.iter_mut()) {
            *y = D::from_f64_lossy(x.to_f64_lossy());
        }
    }
}

/// Elementwise `dst += src` over matching parameter sets.
pub fn accumulate<T: Scalar, P: ParamSet<T>>(dst: &mut P, src: &P) {
    for (d, s) in dst.params_mut().into_iter().zip(src.params()) {
        for (a, b) in d.data.iter_mut().zip(s.data) {
            *a += *b;
        }
    }
}

pub fn all_finite<T: Scalar, P: ParamSet<T>>(p: &P) -> bool {
    p.params().iter().all(|v| v.data.iter().all(|x| x.is_finite()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softplus_matches_definition() {
        for x in [-30.0f64, -3.0, 0.0, 0.5, 7.0, 25.0] {
            let want = (1.0 + x.exp()).ln();
            assert!((softplus(x) - want).abs() < 1e-12, "{x}");
        }
        assert!((softplus(0.0f64) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert_eq!(sigmoid(0.0f32), 0.5);
    }

    #[test]
    fn linear_backward_matches_manual() {
        let x = array![[1.0f64, 2.0], [3.0, -1.0]];
        let w = array![[0.5f64, -1.0], [2.0, 1.0], [0.0, 1.0]];
        let b = array![0.1f64, 0.2, 0.3];
        let y = linear(x.view(), w.view(), Some(b.view()));
        assert_eq!(y, array![[-1.4, 4.2, 2.3], [2.6, 5.2, -0.7]]);
        let dy = Array2::ones((2, 3));
        let mut dw = Array2::zeros((3, 2));
        let mut db = Array1::zeros(3);
        let dx = linear_backward(x.view(), w.view(), dy.view(), &mut dw, Some(&mut db));
        assert_eq!(dw, array![[4.0, 1.0], [4.0, 1.0], [4.0, 1.0]]);
        assert_eq!(db, array![2.0, 2.0, 2.0]);
        assert_eq!(dx, array![[2.5, 1.0], [2.5, 1.0]]);
    }
}
