//! Closed-form ridge projection from embeddings to features.

use nalgebra::DMatrix;
use zsgan_numeric::Matrix;

use crate::error::{Error, Result};

use super::nn_classify;

/// `W = (E^T E + lambda I)^-1 E^T V`, `d_e x d_v`, no intercept.
pub fn ridge_fit(e: &Matrix<f64>, v: &Matrix<f64>, lambda: f64) -> Result<Matrix<f64>> {
    if e.rows() != v.rows() {
        return Err(Error::Contract(format!("{} embedding rows for {} feature rows", e.rows(), v.rows())));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("ridge weight must be finite and >= 0, got {lambda}")));
    }
    let em = DMatrix::from_row_slice(e.rows(), e.cols(), e.data());
    let vm = DMatrix::from_row_slice(v.rows(), v.cols(), v.data());
    let mut a = em.transpose() * &em;
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let rhs = em.transpose() * vm;
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Singular("ridge normal matrix is not positive definite".into()))?;
    let w = chol.solve(&rhs);
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular("ridge solution is not finite".into()));
    }
    let mut out = Matrix::zeros(w.nrows(), w.ncols());
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            out.set(i, j, w[(i, j)]);
        }
    }
    Ok(out)
}

/// Fitted ridge map with the unseen prototypes it produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeBaseline {
    pub weight: Matrix<f64>,
    pub prototypes: Matrix<f32>,
    /// Category id per prototype row.
    pub categories: Vec<usize>,
}

impl RidgeBaseline {
    pub fn classify(&self, test: &Matrix<f32>) -> Result<Vec<usize>> {
        nn_classify(test, &self.prototypes, &self.categories)
    }
}

/// Fits on seen rows (`features[i]` paired with `row_embeddings[i]`) and maps
/// each unseen embedding to a prototype.
pub fn ridge_baseline(
    features: &Matrix<f32>,
    row_embeddings: &Matrix<f32>,
    unseen_embeddings: &Matrix<f32>,
    unseen: &[usize],
    lambda: f64,
) -> Result<RidgeBaseline> {
    if features.rows() < row_embeddings.cols() {
        return Err(Error::Data(format!(
            "ridge needs at least {} seen rows, got {}",
            row_embeddings.cols(),
            features.rows()
        )));
    }
    if unseen.len() != unseen_embeddings.rows() {
        return Err(Error::Contract("one category id per unseen embedding required".into()));
    }
    let weight = ridge_fit(&row_embeddings.cast(), &features.cast(), lambda)?;
    let prototypes = unseen_embeddings.cast::<f64>().matmul(&weight)?.cast();
    Ok(RidgeBaseline {
        weight,
        prototypes,
        categories: unseen.to_vec(),
    })
}
