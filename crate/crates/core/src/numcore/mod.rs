//! Dense tensors, the seeded RNG, and the small vector kernels everything
//! else is built on. All arithmetic is `f64`.

mod rng;
mod tensor;

pub use rng::RngState;
pub use tensor::Tensor;

use crate::{Error, Result};

/// Guard below which a vector is treated as having zero length.
pub const NORM_EPS: f64 = 1e-12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scales a rank-1 tensor to unit L2 norm.
pub fn l2_normalize(v: &Tensor) -> Result<Tensor> {
    if v.rank() != 1 {
        return Err(Error::shape("rank-1 tensor", v.shape()));
    }
    let n = norm(v.data());
    if n <= NORM_EPS {
        return Err(Error::ZeroNorm);
    }
    Ok(v.map(|x| x / n))
}

/// Softmax cross-entropy loss and its gradient with respect to `scores`.
///
/// Entries equal to `-inf` are masked rows: they get zero probability and
/// zero gradient. The label must point at a finite score.
pub fn softmax_cross_entropy(scores: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= scores.len() {
        return Err(Error::shape(format!("label < {}", scores.len()), label));
    }
    if !scores[label].is_finite() {
        return Err(Error::InactiveLabel(label));
    }
    let max = scores
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let log_sum = sum.ln();
    let loss = log_sum - (scores[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}
