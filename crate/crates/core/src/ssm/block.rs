//! Pre-norm gated selective-SSM block:
//! `out = x + out_proj(scan(in_proj(n)) * silu(gate_proj(n)))`, `n = rmsnorm(x)`.

use ndarray::{Array1, Array2, Axis};

use super::params::SsmBlockParams;
use super::scan::{scan_backward, selective_scan_cached, ScanCache};
use crate::tensor::{c, linear, linear_backward, silu, silu_grad, Scalar};

const RMS_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    x: Array2<T>,
    inv_rms: Array1<T>,
    normed: Array2<T>,
    gate_pre: Array2<T>,
    scan_out: Array2<T>,
    mixed: Array2<T>,
    scan: ScanCache<T>,
}

fn rms_norm<T: Scalar>(x: &Array2<T>, scale: &Array1<T>) -> (Array2<T>, Array1<T>) {
    let d: T = c(x.ncols() as f64);
    let inv = x.map_axis(Axis(1), |row| {
        let ms = row.iter().map(|&v| v * v).sum::<T>() / d;
        T::one() / (ms + c(RMS_EPS)).sqrt()
    });
    let mut out = x.clone();
    for (mut row, &r) in out.rows_mut().into_iter().zip(inv.iter()) {
        row.zip_mut_with(scale, |v, &g| *v = *v * r * g);
    }
    (out, inv)
}

fn rms_norm_backward<T: Scalar>(
    x: &Array2<T>,
    inv: &Array1<T>,
    scale: &Array1<T>,
    dout: &Array2<T>,
    dscale: &mut Array1<T>,
) -> Array2<T> {
    let d: T = c(x.ncols() as f64);
    let mut dx = Array2::zeros(x.dim());
    for t in 0..x.nrows() {
        let r = inv[t];
        let mut dot = T::zero();
        for j in 0..x.ncols() {
            dscale[j] += dout[[t, j]] * x[[t, j]] * r;
            dot += dout[[t, j]] * scale[j] * x[[t, j]];
        }
        for j in 0..x.ncols() {
            let dxhat = dout[[t, j]] * scale[j];
            dx[[t, j]] = r * dxhat - r * r * r * x[[t, j]] * dot / d;
        }
    }
    dx
}

pub fn block_forward<T: Scalar>(x: &Array2<T>, p: &SsmBlockParams<T>) -> Array2<T> {
    block_forward_cached(x, p).0
}

pub fn block_forward_cached<T: Scalar>(x: &Array2<T>, p: &SsmBlockParams<T>) -> (Array2<T>, BlockCache<T>) {
    let (normed, inv_rms) = rms_norm(x, &p.norm_scale);
    let u = linear(normed.view(), p.in_proj.view(), None);
    let gate_pre = linear(normed.view(), p.gate_proj.view(), None);
    let (scan_out, scan) = selective_scan_cached(&u, p);
    let mixed = &scan_out * &gate_pre.mapv(silu);
    let out = x + &linear(mixed.view(), p.out_proj.view(), None);
    (
        out,
        BlockCache {
            x: x.clone(),
            inv_rms,
            normed,
            gate_pre,
            scan_out,
            mixed,
            scan,
        },
    )
}

/// Accumulates into `g` and returns the gradient w.r.t. the block input.
pub fn block_backward<T: Scalar>(
    cache: &BlockCache<T>,
    dout: &Array2<T>,
    p: &SsmBlockParams<T>,
    g: &mut SsmBlockParams<T>,
) -> Array2<T> {
    let dmixed = linear_backward(cache.mixed.view(), p.out_proj.view(), dout.view(), &mut g.out_proj, None);
    let dscan = &dmixed * &cache.gate_pre.mapv(silu);
    let dgate = &dmixed * &cache.scan_out * &cache.gate_pre.mapv(silu_grad);
    let du = scan_backward(&cache.scan, &dscan, p, g);
    let mut dnormed = linear_backward(cache.normed.view(), p.in_proj.view(), du.view(), &mut g.in_proj, None);
    dnormed += &linear_backward(cache.normed.view(), p.gate_proj.view(), dgate.view(), &mut g.gate_proj, None);
    let dx = rms_norm_backward(&cache.x, &cache.inv_rms, &p.norm_scale, &dnormed, &mut g.norm_scale);
    dout + &dx
}
