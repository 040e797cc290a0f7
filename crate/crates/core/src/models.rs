//! Generator `G(z, e) -> v`, inference net `R(v) -> e` and discriminator `D`
//! with a shared trunk and three heads.
//!
//! All nets are plain MLPs over row batches. Forward calls return caches;
//! backward calls accumulate parameter gradients into the net's own store.

use serde::{Deserialize, Serialize};
use zsgan_numeric::{
    l2_normalize_backward, l2_normalize_rows, sigmoid, softmax_rows, Activation, Dense, DenseCache, HasParams,
    Matrix, ParamStore, Real, RngStream,
};

use crate::error::{Error, Result};

/// Layer widths of the three nets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub z_dim: usize,
    pub d_e: usize,
    pub d_v: usize,
    /// Width of the Q and category heads.
    pub num_seen: usize,
    pub g_hidden: usize,
    pub r_hidden: usize,
    pub d_hidden1: usize,
    pub d_hidden2: usize,
}

fn check_cols<T: Real>(what: &str, m: &Matrix<T>, cols: usize) -> Result<()> {
    if m.cols() != cols {
        return Err(Error::Contract(format!("{what} has {} columns, expected {cols}", m.cols())));
    }
    Ok(())
}

fn check_rows<T: Real>(what: &str, m: &Matrix<T>, rows: usize) -> Result<()> {
    if m.rows() != rows {
        return Err(Error::Contract(format!("{what} has {} rows, expected {rows}", m.rows())));
    }
    Ok(())
}

/// `q` standard-normal noise rows for one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGroup<T> {
    draws: Matrix<T>,
}

impl<T: Real> NoiseGroup<T> {
    pub fn draw(q: usize, z_dim: usize, rng: &mut RngStream) -> Self {
        Self {
            draws: rng.normal_matrix(q, z_dim),
        }
    }

    pub fn from_matrix(draws: Matrix<T>) -> Self {
        Self { draws }
    }

    pub fn q(&self) -> usize {
        self.draws.rows()
    }

    pub fn draws(&self) -> &Matrix<T> {
        &self.draws
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorNet<T: Real> {
    store: ParamStore<T>,
    hidden: Dense,
    out: Dense,
    z_dim: usize,
    d_e: usize,
}

#[derive(Debug, Clone)]
pub struct GeneratorCache<T> {
    hidden: DenseCache<T>,
    out: DenseCache<T>,
}

impl<T: Real> GeneratorNet<T> {
    pub fn new(z_dim: usize, d_e: usize, hidden: usize, d_v: usize, rng: &mut RngStream) -> Result<Self> {
        let mut store = ParamStore::new();
        let h = Dense::new(&mut store, "g.hidden", z_dim + d_e, hidden, Activation::Relu, rng)?;
        let out = Dense::new(&mut store, "g.out", hidden, d_v, Activation::Identity, rng)?;
        Ok(Self {
            store,
            hidden: h,
            out,
            z_dim,
            d_e,
        })
    }

    pub fn d_v(&self) -> usize {
        self.out.out_dim()
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    /// Row `i` of the output is `G(z_i, e_i)`.
    pub fn forward(&self, z: &Matrix<T>, e: &Matrix<T>) -> Result<(Matrix<T>, GeneratorCache<T>)> {
        check_cols("noise", z, self.z_dim)?;
        check_cols("embedding", e, self.d_e)?;
        check_rows("embedding", e, z.rows())?;
        let (h, hidden) = self.hidden.forward(&self.store, &z.hcat(e)?)?;
        let (v, out) = self.out.forward(&self.store, &h)?;
        Ok((v, GeneratorCache { hidden, out }))
    }

    /// One synthetic row per noise draw, all conditioned on `e`.
    pub fn generate(&self, noise: &NoiseGroup<T>, e: &[T]) -> Result<Matrix<T>> {
        if e.len() != self.d_e {
            return Err(Error::Contract(format!("embedding has {} values, expected {}", e.len(), self.d_e)));
        }
        let cond = Matrix::row_vector(e).repeat_rows(noise.q());
        Ok(self.forward(noise.draws(), &cond)?.0)
    }

    pub fn backward(&mut self, cache: &GeneratorCache<T>, dv: &Matrix<T>) -> Result<()> {
        let dh = self.out.backward(&mut self.store, &cache.out, dv)?;
        self.hidden.backward(&mut self.store, &cache.hidden, &dh)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct InferenceNet<T: Real> {
    store: ParamStore<T>,
    hidden: Dense,
    out: Dense,
}

#[derive(Debug, Clone)]
pub struct InferenceCache<T> {
    hidden: DenseCache<T>,
    out: DenseCache<T>,
    y: Matrix<T>,
    norms: Vec<T>,
}

impl<T: Real> InferenceNet<T> {
    pub fn new(d_v: usize, hidden: usize, d_e: usize, rng: &mut RngStream) -> Result<Self> {
        let mut store = ParamStore::new();
        let h = Dense::new(&mut store, "r.hidden", d_v, hidden, Activation::Relu, rng)?;
        let out = Dense::new(&mut store, "r.out", hidden, d_e, Activation::Identity, rng)?;
        Ok(Self { store, hidden: h, out })
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    /// Unit-norm inferred embeddings, one per input row.
    pub fn forward(&self, v: &Matrix<T>) -> Result<(Matrix<T>, InferenceCache<T>)> {
        check_cols("feature", v, self.hidden.in_dim())?;
        let (h, hidden) = self.hidden.forward(&self.store, v)?;
        let (raw, out) = self.out.forward(&self.store, &h)?;
        let (y, norms) = l2_normalize_rows(&raw);
        Ok((
            y.clone(),
            InferenceCache {
                hidden,
                out,
                y,
                norms,
            },
        ))
    }

    pub fn infer(&self, v: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.forward(v)?.0)
    }

    /// Returns the gradient with respect to the input features.
    pub fn backward(&mut self, cache: &InferenceCache<T>, de: &Matrix<T>) -> Result<Matrix<T>> {
        let draw = l2_normalize_backward(&cache.y, &cache.norms, de)?;
        let dh = self.out.backward(&mut self.store, &cache.out, &draw)?;
        Ok(self.hidden.backward(&mut self.store, &cache.hidden, &dh)?)
    }
}

#[derive(Debug, Clone)]
pub struct DiscriminatorNet<T: Real> {
    store: ParamStore<T>,
    h1: Dense,
    h2: Dense,
    score: Dense,
    q_head: Dense,
    cat_head: Dense,
    d_v: usize,
    d_e: usize,
}

#[derive(Debug, Clone)]
struct TrunkCache<T> {
    h1: DenseCache<T>,
    h2: DenseCache<T>,
}

#[derive(Debug, Clone)]
pub struct ScoreCache<T> {
    trunk: TrunkCache<T>,
    head: DenseCache<T>,
}

#[derive(Debug, Clone)]
pub struct HeadsCache<T> {
    trunk: TrunkCache<T>,
    q: DenseCache<T>,
    cat: DenseCache<T>,
}

impl<T: Real> DiscriminatorNet<T> {
    pub fn new(d_v: usize, d_e: usize, hidden1: usize, hidden2: usize, num_seen: usize, rng: &mut RngStream) -> Result<Self> {
        let mut store = ParamStore::new();
        let h1 = Dense::new(&mut store, "d.trunk1", d_v + d_e, hidden1, Activation::Relu, rng)?;
        let h2 = Dense::new(&mut store, "d.trunk2", hidden1, hidden2, Activation::Relu, rng)?;
        let score = Dense::new(&mut store, "d.score", hidden2, 1, Activation::Identity, rng)?;
        let q_head = Dense::new(&mut store, "d.q", hidden2, num_seen, Activation::Identity, rng)?;
        let cat_head = Dense::new(&mut store, "d.cat", hidden2, num_seen, Activation::Identity, rng)?;
        Ok(Self {
            store,
            h1,
            h2,
            score,
            q_head,
            cat_head,
            d_v,
            d_e,
        })
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn num_seen(&self) -> usize {
        self.q_head.out_dim()
    }

    fn trunk(&self, x: &Matrix<T>) -> Result<(Matrix<T>, TrunkCache<T>)> {
        let (a, h1) = self.h1.forward(&self.store, x)?;
        let (b, h2) = self.h2.forward(&self.store, &a)?;
        Ok((b, TrunkCache { h1, h2 }))
    }

    fn trunk_backward(&mut self, cache: &TrunkCache<T>, dh: &Matrix<T>) -> Result<Matrix<T>> {
        let da = self.h2.backward(&mut self.store, &cache.h2, dh)?;
        Ok(self.h1.backward(&mut self.store, &cache.h1, &da)?)
    }

    /// Pre-sigmoid real/fake logits, `n x 1`.
    pub fn score_logits(&self, v: &Matrix<T>, e: &Matrix<T>) -> Result<(Matrix<T>, ScoreCache<T>)> {
        check_cols("feature", v, self.d_v)?;
        check_cols("embedding", e, self.d_e)?;
        check_rows("embedding", e, v.rows())?;
        let (h, trunk) = self.trunk(&v.hcat(e)?)?;
        let (logit, head) = self.score.forward(&self.store, &h)?;
        Ok((logit, ScoreCache { trunk, head }))
    }

    /// Gradients with respect to the feature and embedding inputs.
    pub fn score_backward(&mut self, cache: &ScoreCache<T>, dlogit: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        let dh = self.score.backward(&mut self.store, &cache.head, dlogit)?;
        let dx = self.trunk_backward(&cache.trunk, &dh)?;
        Ok(dx.hsplit(self.d_v)?)
    }

    /// Per-row probability that `(v_i, e_i)` is a real matched pair.
    pub fn discriminate(&self, v: &Matrix<T>, e: &Matrix<T>) -> Result<Vec<T>> {
        let (logit, _) = self.score_logits(v, e)?;
        Ok(logit.data().iter().map(|&a| sigmoid(a)).collect())
    }

    /// Q-head and category-head logits. Both read the trunk of `[v | 0]`, so
    /// they depend on the feature alone.
    pub fn head_logits(&self, v: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>, HeadsCache<T>)> {
        check_cols("feature", v, self.d_v)?;
        let (h, trunk) = self.trunk(&v.hcat(&Matrix::zeros(v.rows(), self.d_e))?)?;
        let (ql, q) = self.q_head.forward(&self.store, &h)?;
        let (cl, cat) = self.cat_head.forward(&self.store, &h)?;
        Ok((ql, cl, HeadsCache { trunk, q, cat }))
    }

    /// Gradient with respect to `v`; a `None` head contributes nothing.
    pub fn heads_backward(
        &mut self,
        cache: &HeadsCache<T>,
        dq: Option<&Matrix<T>>,
        dcat: Option<&Matrix<T>>,
    ) -> Result<Matrix<T>> {
        let n = cache.q.input().rows();
        let mut dh = Matrix::zeros(n, self.q_head.in_dim());
        if let Some(dq) = dq {
            dh.add_assign(&self.q_head.backward(&mut self.store, &cache.q, dq)?)?;
        }
        if let Some(dc) = dcat {
            dh.add_assign(&self.cat_head.backward(&mut self.store, &cache.cat, dc)?)?;
        }
        let dx = self.trunk_backward(&cache.trunk, &dh)?;
        Ok(dx.hsplit(self.d_v)?.0)
    }

    pub fn q_posterior(&self, v: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(softmax_rows(&self.head_logits(v)?.0))
    }

    pub fn cat_posterior(&self, v: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(softmax_rows(&self.head_logits(v)?.1))
    }
}

const G_INIT_STREAM: u64 = 10;
const R_INIT_STREAM: u64 = 11;
const D_INIT_STREAM: u64 = 12;

/// The generator, inference net and discriminator trained together.
#[derive(Debug, Clone)]
pub struct ModelTriplet<T: Real> {
    pub g: GeneratorNet<T>,
    pub r: InferenceNet<T>,
    pub d: DiscriminatorNet<T>,
    pub dims: ModelDims,
}

impl<T: Real> ModelTriplet<T> {
    /// Initializes all three nets from `seed`. `f32` and `f64` triplets built
    /// from the same seed agree up to rounding.
    pub fn new(dims: ModelDims, seed: u64) -> Result<Self> {
        if dims.num_seen == 0 {
            return Err(Error::Config("models need at least one seen category".into()));
        }
        let g = GeneratorNet::new(
            dims.z_dim,
            dims.d_e,
            dims.g_hidden,
            dims.d_v,
            &mut RngStream::new(seed, G_INIT_STREAM),
        )?;
        let r = InferenceNet::new(dims.d_v, dims.r_hidden, dims.d_e, &mut RngStream::new(seed, R_INIT_STREAM))?;
        let d = DiscriminatorNet::new(
            dims.d_v,
            dims.d_e,
            dims.d_hidden1,
            dims.d_hidden2,
            dims.num_seen,
            &mut RngStream::new(seed, D_INIT_STREAM),
        )?;
        Ok(Self { g, r, d, dims })
    }

    pub fn stores(&self) -> [&ParamStore<T>; 3] {
        [&self.g.store, &self.r.store, &self.d.store]
    }

    /// Every parameter as `(name, value)`, generator first.
    pub fn named_tensors(&self) -> Vec<(String, Matrix<f32>)> {
        self.stores()
            .iter()
            .flat_map(|s| s.iter().map(|p| (p.name.clone(), p.value.cast())))
            .collect()
    }

    /// Loads values by name; every parameter must be present with its shape.
    pub fn load_tensors(&mut self, tensors: &[(String, Matrix<f32>)]) -> Result<()> {
        for store in self.param_stores() {
            let names: Vec<String> = store.iter().map(|p| p.name.clone()).collect();
            for name in names {
                let (_, m) = tensors
                    .iter()
                    .find(|(n, _)| *n == name)
                    .ok_or_else(|| Error::Data(format!("checkpoint lacks parameter `{name}`")))?;
                store.load(&name, m.cast())?;
            }
        }
        Ok(())
    }
}

impl<T: Real> HasParams<T> for ModelTriplet<T> {
    fn param_stores(&mut self) -> Vec<&mut ParamStore<T>> {
        vec![&mut self.g.store, &mut self.r.store, &mut self.d.store]
    }
}
