//! Named parameter tensors with matching gradient buffers.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{NumericError, Result};
use crate::matrix::Matrix;
use crate::real::Real;

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Matrix<T>,
    pub grad: Matrix<T>,
}

/// A set of uniquely named parameters.
///
/// The store carries an identity and a version that changes on every mutable
/// access to parameter values; layer caches record both so a backward pass
/// against modified parameters is rejected.
#[derive(Debug)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    id: u64,
    version: u64,
}

impl<T: Real> Clone for ParamStore<T> {
    fn clone(&self) -> Self {
        Self {
            params: self.params.clone(),
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            version: 0,
        }
    }
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            version: 0,
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix<T>) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(NumericError::Contract(format!(
                "duplicate parameter name `{name}`"
            )));
        }
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.params.push(Param { name, value, grad });
        self.version += 1;
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn param(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix<T> {
        self.version += 1;
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix<T> {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Matrix<T> {
        &mut self.params[id.0].grad
    }

    /// Mutable access to every parameter; bumps the version.
    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        self.version += 1;
        &mut self.params
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    pub fn accumulate_grad(&mut self, id: ParamId, g: &Matrix<T>) -> Result<()> {
        self.params[id.0].grad.add_assign(g)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    /// Flattened copy of all values, in insertion order.
    pub fn flat_values(&self) -> Vec<T> {
        self.params
            .iter()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<T> {
        self.params
            .iter()
            .flat_map(|p| p.grad.data().iter().copied())
            .collect()
    }

    /// Overwrites the value of a named parameter, checking its shape.
    pub fn load(&mut self, name: &str, value: Matrix<T>) -> Result<()> {
        let id = self
            .find(name)
            .ok_or_else(|| NumericError::Contract(format!("unknown parameter `{name}`")))?;
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(NumericError::dim(
                "load",
                format!(
                    "`{name}` is {:?}, value is {:?}",
                    p.value.shape(),
                    value.shape()
                ),
            ));
        }
        p.value = value;
        self.version += 1;
        Ok(())
    }
}

/// Anything that exposes one or more parameter stores for optimization or
/// gradient checking.
pub trait HasParams<T> {
    fn param_stores(&mut self) -> Vec<&mut ParamStore<T>>;
}

impl<T: Real> HasParams<T> for ParamStore<T> {
    fn param_stores(&mut self) -> Vec<&mut ParamStore<T>> {
        vec![self]
    }
}
