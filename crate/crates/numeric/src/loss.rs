//! Row-wise softmax utilities and the softmax cross-entropy loss.

use crate::error::{NumericError, Result};
use crate::matrix::Matrix;
use crate::real::Real;

/// `ln sum exp(xs)` with the max shifted out.
pub fn logsumexp<T: Real>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return m;
    }
    let s: T = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

pub fn log_softmax_rows<T: Real>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let lse = logsumexp(row);
        row.iter_mut().for_each(|x| *x = *x - lse);
    }
    out
}

pub fn softmax_rows<T: Real>(logits: &Matrix<T>) -> Matrix<T> {
    log_softmax_rows(logits).map(|x| x.exp())
}

/// Mean over rows of `-log softmax(logits)[target]`, with `dlogits = (softmax - onehot) / rows`.
pub fn softmax_cross_entropy<T: Real>(logits: &Matrix<T>, targets: &[usize]) -> Result<(T, Matrix<T>)> {
    if logits.rows() == 0 {
        return Err(NumericError::Contract("empty batch".into()));
    }
    if targets.len() != logits.rows() {
        return Err(NumericError::Contract(format!(
            "{} targets for {} rows",
            targets.len(),
            logits.rows()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= logits.cols()) {
        return Err(NumericError::Contract(format!(
            "target {t} out of range for {} classes",
            logits.cols()
        )));
    }
    let n = T::from_usize(logits.rows()).expect("row count fits");
    let logp = log_softmax_rows(logits);
    let mut loss = T::zero();
    let mut grad = logp.map(|x| x.exp());
    for (r, &t) in targets.iter().enumerate() {
        loss = loss - logp.get(r, t);
        let g = grad.get(r, t);
        grad.set(r, t, g - T::one());
    }
    grad.scale_in_place(T::one() / n);
    Ok((loss / n, grad))
}

/// Divides every row by its L2 norm. Returns the normalized rows and the norms.
///
/// Norms are floored at `1e-12`, so an all-zero row stays zero.
pub fn l2_normalize_rows<T: Real>(x: &Matrix<T>) -> (Matrix<T>, Vec<T>) {
    let floor = T::from_f64_lossy(1e-12);
    let mut y = x.clone();
    let mut norms = Vec::with_capacity(x.rows());
    for r in 0..y.rows() {
        let row = y.row_mut(r);
        let n = row.iter().map(|&v| v * v).sum::<T>().sqrt().max(floor);
        row.iter_mut().for_each(|v| *v = *v / n);
        norms.push(n);
    }
    (y, norms)
}

/// Backward of [`l2_normalize_rows`]: `dx = (dy - y (y . dy)) / |x|`.
pub fn l2_normalize_backward<T: Real>(y: &Matrix<T>, norms: &[T], dy: &Matrix<T>) -> Result<Matrix<T>> {
    if y.shape() != dy.shape() || norms.len() != y.rows() {
        return Err(NumericError::Contract(format!(
            "normalize backward: y {:?}, dy {:?}, {} norms",
            y.shape(),
            dy.shape(),
            norms.len()
        )));
    }
    let mut dx = dy.clone();
    for r in 0..y.rows() {
        let yr = y.row(r);
        let dot: T = yr.iter().zip(dy.row(r)).map(|(&a, &b)| a * b).sum();
        let n = norms[r];
        for (d, &yv) in dx.row_mut(r).iter_mut().zip(yr) {
            *d = (*d - yv * dot) / n;
        }
    }
    Ok(dx)
}
