use ndarray::Array2;

use crate::error::{Error, Result};
use crate::tensor::{c, Scalar};

/// `log softmax` of one row, accumulated in `f64`.
pub fn log_softmax<T: Scalar>(row: impl IntoIterator<Item = T>) -> Vec<f64> {
    let v: Vec<f64> = row.into_iter().map(|x| x.to_f64_lossy()).collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + v.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    v.iter().map(|&x| x - lse).collect()
}

fn check(logits_rows: usize, targets: &[usize], mask: &[bool]) -> Result<usize> {
    if targets.len() != logits_rows || mask.len() != logits_rows {
        return Err(Error::DimensionMismatch {
            expected: logits_rows,
            actual: targets.len().min(mask.len()),
        });
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(n)
}

/// Mean of `-log softmax(logits)[target]` over masked positions.
pub fn cross_entropy_loss<T: Scalar>(logits: &Array2<T>, targets: &[usize], mask: &[bool]) -> Result<f64> {
    let n = check(logits.nrows(), targets, mask)?;
    Ok(masked_nll_sum(logits, targets, mask)? / n as f64)
}

fn masked_nll_sum<T: Scalar>(logits: &Array2<T>, targets: &[usize], mask: &[bool]) -> Result<f64> {
    let mut total = 0.0;
    for ((row, &t), &m) in logits.rows().into_iter().zip(targets).zip(mask) {
        if m {
            if t >= row.len() {
                return Err(Error::BadTokenId(t));
            }
            total -= log_softmax(row.iter().copied())[t];
        }
    }
    Ok(total)
}

/// Summed masked negative log-likelihood and its gradient scaled by `scale`.
///
/// With `scale = 1 / N` over all masked positions of a batch, per-sample
/// results add up to the gradient of the batch mean.
pub fn nll_with_grad<T: Scalar>(logits: &Array2<T>, targets: &[usize], mask: &[bool], scale: f64) -> Result<(f64, Array2<T>)> {
    check(logits.nrows(), targets, mask)?;
    let mut grad = Array2::zeros(logits.dim());
    let mut total = 0.0;
    for (r, ((row, &t), &m)) in logits.rows().into_iter().zip(targets).zip(mask).enumerate() {
        if !m {
            continue;
        }
        if t >= row.len() {
            return Err(Error::BadTokenId(t));
        }
        let lp = log_softmax(row.iter().copied());
        total -= lp[t];
        for (j, l) in lp.iter().enumerate() {
            let p = l.exp() - if j == t { 1.0 } else { 0.0 };
            grad[[r, j]] = c(p * scale);
        }
    }
    Ok((total, grad))
}
