//! Affine layers `y = act(x W + b)` and their backward pass.
//!
//! `W` is `in x out` and `b` is `1 x out`, so a batch `x` of shape `n x in`
//! maps to `n x out`.

use crate::activation::Activation;
use crate::error::{NumericError, Result};
use crate::matrix::Matrix;
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::rng::RngStream;

/// Intermediates of one forward call.
#[derive(Debug, Clone)]
pub struct DenseCache<T> {
    input: Matrix<T>,
    pre: Matrix<T>,
    output: Matrix<T>,
    activation: Activation,
    /// Weights captured by the free-function forward.
    weight: Option<Matrix<T>>,
    /// `(store id, store version, weight id)` for layer-bound forwards.
    origin: Option<(u64, u64, ParamId)>,
}

impl<T: Real> DenseCache<T> {
    pub fn input(&self) -> &Matrix<T> {
        &self.input
    }

    pub fn output(&self) -> &Matrix<T> {
        &self.output
    }
}

fn affine<T: Real>(x: &Matrix<T>, w: &Matrix<T>, b: &Matrix<T>, activation: Activation) -> Result<(Matrix<T>, Matrix<T>)> {
    if x.cols() != w.rows() {
        return Err(NumericError::dim(
            "dense_forward",
            format!("input has {} columns, weight has {} rows", x.cols(), w.rows()),
        ));
    }
    if b.shape() != (1, w.cols()) {
        return Err(NumericError::dim(
            "dense_forward",
            format!("bias is {:?}, expected (1, {})", b.shape(), w.cols()),
        ));
    }
    let mut pre = x.matmul(w)?;
    let bias = b.data();
    for r in 0..pre.rows() {
        for (z, &bj) in pre.row_mut(r).iter_mut().zip(bias) {
            *z = *z + bj;
        }
    }
    let out = pre.map(|z| activation.apply(z));
    Ok((pre, out))
}

pub fn dense_forward<T: Real>(
    x: &Matrix<T>,
    w: &Matrix<T>,
    b: &Matrix<T>,
    activation: Activation,
) -> Result<(Matrix<T>, DenseCache<T>)> {
    let (pre, out) = affine(x, w, b, activation)?;
    let cache = DenseCache {
        input: x.clone(),
        pre,
        output: out.clone(),
        activation,
        weight: Some(w.clone()),
        origin: None,
    };
    Ok((out, cache))
}

/// Returns `(dx, dW, db)` for an upstream gradient `dy` on the layer output.
pub fn dense_backward<T: Real>(
    cache: &DenseCache<T>,
    dy: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
    let w = cache.weight.as_ref().ok_or_else(|| {
        NumericError::Contract("cache came from a layer-bound forward; use Dense::backward".into())
    })?;
    backward_with(cache, w, dy)
}

fn backward_with<T: Real>(
    cache: &DenseCache<T>,
    w: &Matrix<T>,
    dy: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
    if dy.shape() != cache.output.shape() {
        return Err(NumericError::Contract(format!(
            "upstream gradient {:?} does not match cached output {:?}",
            dy.shape(),
            cache.output.shape()
        )));
    }
    if w.shape() != (cache.input.cols(), cache.output.cols()) {
        return Err(NumericError::Contract(format!(
            "weight {:?} does not match cached layer {}->{}",
            w.shape(),
            cache.input.cols(),
            cache.output.cols()
        )));
    }
    let act = cache.activation;
    let mut dz = dy.clone();
    if act != Activation::Identity {
        for ((g, &z), &y) in dz
            .data_mut()
            .iter_mut()
            .zip(cache.pre.data())
            .zip(cache.output.data())
        {
            *g = *g * act.derivative(z, y);
        }
    }
    let dw = cache.input.t_matmul(&dz)?;
    let db = dz.sum_rows();
    let dx = dz.matmul_t(w)?;
    Ok((dx, dw, db))
}

/// A dense layer whose parameters live in a [`ParamStore`].
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    weight: ParamId,
    bias: ParamId,
    activation: Activation,
    in_dim: usize,
    out_dim: usize,
}

impl Dense {
    /// Registers `<name>.weight` and `<name>.bias`, with weights uniform in
    /// `±sqrt(6 / (in + out))` and zero biases.
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(NumericError::Config(format!(
                "layer `{name}` needs positive dims, got {in_dim}->{out_dim}"
            )));
        }
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = rng.uniform_matrix(in_dim, out_dim, -limit, limit);
        let weight = store.add(format!("{name}.weight"), w)?;
        let bias = store.add(format!("{name}.bias"), Matrix::zeros(1, out_dim))?;
        Ok(Self {
            weight,
            bias,
            activation,
            in_dim,
            out_dim,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight_id(&self) -> ParamId {
        self.weight
    }

    pub fn bias_id(&self) -> ParamId {
        self.bias
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, x: &Matrix<T>) -> Result<(Matrix<T>, DenseCache<T>)> {
        let (pre, out) = affine(x, store.value(self.weight), store.value(self.bias), self.activation)?;
        let cache = DenseCache {
            input: x.clone(),
            pre,
            output: out.clone(),
            activation: self.activation,
            weight: None,
            origin: Some((store.id(), store.version(), self.weight)),
        };
        Ok((out, cache))
    }

    /// Accumulates parameter gradients into `store` and returns `dx`.
    pub fn backward<T: Real>(
        &self,
        store: &mut ParamStore<T>,
        cache: &DenseCache<T>,
        dy: &Matrix<T>,
    ) -> Result<Matrix<T>> {
        match cache.origin {
            Some((id, version, w)) if id == store.id() && w == self.weight => {
                if version != store.version() {
                    return Err(NumericError::Contract(
                        "stale cache: parameters changed since forward".into(),
                    ));
                }
            }
            _ => {
                return Err(NumericError::Contract(
                    "cache was not produced by this layer".into(),
                ))
            }
        }
        let (dx, dw, db) = backward_with(cache, store.value(self.weight), dy)?;
        store.accumulate_grad(self.weight, &dw)?;
        store.accumulate_grad(self.bias, &db)?;
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_passes_input_through() {
        let x = Matrix::from_rows(&[[1.0f64, 2.0]]).unwrap();
        let (y, _) = dense_forward(&x, &Matrix::identity(2), &Matrix::zeros(1, 2), Activation::Identity).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn relu_clamps_negative() {
        let x = Matrix::from_rows(&[[-1.0f64, 2.0]]).unwrap();
        let (y, _) = dense_forward(&x, &Matrix::identity(2), &Matrix::zeros(1, 2), Activation::Relu).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0]);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let x = Matrix::from_rows(&[[0.0f64]]).unwrap();
        let (y, _) = dense_forward(&x, &Matrix::identity(1), &Matrix::zeros(1, 1), Activation::Sigmoid).unwrap();
        assert_eq!(y.data(), &[0.5]);
    }

    #[test]
    fn linear_weight_gradient_is_input_transpose_times_ones() {
        let x = Matrix::from_rows(&[[1.0f64, 2.0], [3.0, -1.0], [0.5, 0.0]]).unwrap();
        let w = Matrix::from_rows(&[[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]]).unwrap();
        let (y, cache) = dense_forward(&x, &w, &Matrix::zeros(1, 3), Activation::Identity).unwrap();
        let ones = Matrix::filled(y.rows(), y.cols(), 1.0);
        let (_, dw, db) = dense_backward(&cache, &ones).unwrap();
        assert_eq!(dw, x.t_matmul(&ones).unwrap());
        assert_eq!(db.data(), &[3.0, 3.0, 3.0]);
    }

    #[test]
    fn relu_blocks_gradient_at_negative_preactivation() {
        let x = Matrix::from_rows(&[[-1.0f64, 2.0]]).unwrap();
        let (_, cache) = dense_forward(&x, &Matrix::identity(2), &Matrix::zeros(1, 2), Activation::Relu).unwrap();
        let (dx, dw, _) = dense_backward(&cache, &Matrix::filled(1, 2, 1.0)).unwrap();
        assert_eq!(dx.get(0, 0), 0.0);
        assert_eq!(dw.get(0, 0), 0.0);
        assert_eq!(dw.get(1, 0), 0.0);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let x = Matrix::<f32>::zeros(1, 3);
        let err = dense_forward(&x, &Matrix::zeros(2, 2), &Matrix::zeros(1, 2), Activation::Identity).unwrap_err();
        assert!(matches!(err, NumericError::Dimension { .. }));
    }

    #[test]
    fn stale_cache_rejected() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = RngStream::new(0, 0);
        let layer = Dense::new(&mut store, "l", 2, 2, Activation::Tanh, &mut rng).unwrap();
        let x = Matrix::filled(1, 2, 0.3);
        let (y, cache) = layer.forward(&store, &x).unwrap();
        store.value_mut(layer.bias_id()).set(0, 0, 1.0);
        let err = layer.backward(&mut store, &cache, &y).unwrap_err();
        assert!(matches!(err, NumericError::Contract(_)));
    }

    #[test]
    fn mismatched_upstream_rejected() {
        let x = Matrix::<f64>::zeros(2, 2);
        let (_, cache) = dense_forward(&x, &Matrix::identity(2), &Matrix::zeros(1, 2), Activation::Identity).unwrap();
        assert!(dense_backward(&cache, &Matrix::zeros(3, 2)).is_err());
    }
}
