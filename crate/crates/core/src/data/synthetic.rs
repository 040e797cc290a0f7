//! Synthetic benchmarks with a known embedding-to-feature map.
//!
//! Category embeddings are uniform on the unit sphere; every feature row of
//! category `c` is `M(g(c)) + noise_scale * xi` with `xi ~ N(0, I)`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use zsgan_numeric::{Matrix, RngStream};

use crate::container::{read_tensors, write_tensors, Meta};
use crate::data::{Dataset, EmbeddingTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub num_categories: usize,
    pub samples_per_category: usize,
    pub d_v: usize,
    pub d_e: usize,
    pub map_kind: MapKind,
    pub noise_scale: f64,
    /// Hidden width of the `mlp` ground-truth map.
    pub mlp_hidden: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_categories: 10,
            samples_per_category: 100,
            d_v: 32,
            d_e: 8,
            map_kind: MapKind::Linear,
            noise_scale: 0.1,
            mlp_hidden: 64,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_v == 0 || self.d_e == 0 {
            return Err(Error::Config(format!(
                "d_v and d_e must be positive, got d_v={} d_e={}",
                self.d_v, self.d_e
            )));
        }
        if self.num_categories == 0 || self.samples_per_category == 0 {
            return Err(Error::Config("need at least one category and one sample".into()));
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return Err(Error::Config(format!("noise_scale must be >= 0, got {}", self.noise_scale)));
        }
        if self.map_kind == MapKind::Mlp && self.mlp_hidden == 0 {
            return Err(Error::Config("mlp_hidden must be positive".into()));
        }
        Ok(())
    }
}

/// Ground-truth semantic-to-visual map, evaluated in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruthMap {
    /// `v = e W`, `W` is `d_e x d_v`.
    Linear { weight: Matrix<f64> },
    /// `v = tanh(e W1 + b1) W2`.
    Mlp {
        w1: Matrix<f64>,
        b1: Matrix<f64>,
        w2: Matrix<f64>,
    },
}

impl GroundTruthMap {
    pub fn apply(&self, e: &Matrix<f64>) -> Result<Matrix<f64>> {
        match self {
            GroundTruthMap::Linear { weight } => Ok(e.matmul(weight)?),
            GroundTruthMap::Mlp { w1, b1, w2 } => {
                let mut h = e.matmul(w1)?;
                for r in 0..h.rows() {
                    for (x, &b) in h.row_mut(r).iter_mut().zip(b1.data()) {
                        *x = (*x + b).tanh();
                    }
                }
                Ok(h.matmul(w2)?)
            }
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let (kind, tensors): (&str, Vec<(&str, Matrix<f32>)>) = match self {
            GroundTruthMap::Linear { weight } => ("linear", vec![("weight", weight.cast())]),
            GroundTruthMap::Mlp { w1, b1, w2 } => (
                "mlp",
                vec![("w1", w1.cast()), ("b1", b1.cast()), ("w2", w2.cast())],
            ),
        };
        let mut meta = Meta::new("ground_truth");
        meta.push("map_kind", kind)?;
        let named: Vec<(String, &Matrix<f32>)> = tensors.iter().map(|(n, m)| (n.to_string(), m)).collect();
        write_tensors(dir, "ground_truth", meta, &named)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (meta, tensors) = read_tensors(dir, "ground_truth")?;
        let path = dir.join("ground_truth.meta");
        meta.expect_kind("ground_truth", &path)?;
        let get = |name: &str| -> Result<Matrix<f64>> {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, m)| m.cast())
                .ok_or_else(|| Error::format(&path, 0, format!("missing tensor `{name}`")))
        };
        match meta.require("map_kind", &path)? {
            "linear" => Ok(GroundTruthMap::Linear { weight: get("weight")? }),
            "mlp" => Ok(GroundTruthMap::Mlp {
                w1: get("w1")?,
                b1: get("b1")?,
                w2: get("w2")?,
            }),
            other => Err(Error::format(&path, 0, format!("unknown map kind `{other}`"))),
        }
    }
}

const EMBEDDING_STREAM: u64 = 0;
const MAP_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, EmbeddingTable, GroundTruthMap)> {
    spec.validate()?;
    let c = spec.num_categories;

    let mut rng = RngStream::new(spec.seed, EMBEDDING_STREAM);
    let mut emb: Matrix<f64> = rng.normal_matrix(c, spec.d_e);
    for r in 0..c {
        let row = emb.row_mut(r);
        let mut n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        while n == 0.0 {
            // measure-zero event; redraw rather than divide by zero
            row.iter_mut().for_each(|x| *x = rng.normal());
            n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        row.iter_mut().for_each(|x| *x /= n);
    }

    let mut rng = RngStream::new(spec.seed, MAP_STREAM);
    let map = match spec.map_kind {
        MapKind::Linear => GroundTruthMap::Linear {
            weight: rng.normal_matrix(spec.d_e, spec.d_v),
        },
        MapKind::Mlp => {
            let h = spec.mlp_hidden;
            let w1: Matrix<f64> = rng.normal_matrix(spec.d_e, h);
            let b1: Matrix<f64> = rng.normal_matrix(1, h).map(|x| 0.1 * x);
            let scale = (2.0 / h as f64).sqrt();
            let w2: Matrix<f64> = rng.normal_matrix(h, spec.d_v).map(|x| scale * x);
            GroundTruthMap::Mlp { w1, b1, w2 }
        }
    };
    let centers = map.apply(&emb)?;

    let mut rng = RngStream::new(spec.seed, NOISE_STREAM);
    let n = c * spec.samples_per_category;
    let mut features = Matrix::<f32>::zeros(n, spec.d_v);
    let mut labels = Vec::with_capacity(n);
    for cat in 0..c {
        for s in 0..spec.samples_per_category {
            let row = features.row_mut(cat * spec.samples_per_category + s);
            for (x, &m) in row.iter_mut().zip(centers.row(cat)) {
                let noise = if spec.noise_scale > 0.0 {
                    spec.noise_scale * rng.normal()
                } else {
                    0.0
                };
                *x = (m + noise) as f32;
            }
            labels.push(cat);
        }
    }

    let names: Vec<String> = (0..c).map(|i| format!("class_{i:03}")).collect();
    let dataset = Dataset::new(features, labels, names.clone())?;
    let table = EmbeddingTable::new(emb.cast(), names, false)?;
    // f32 rounding can push a norm past 1e-6 in principle; renormalize in f32
    let table = crate::data::normalize_embeddings(&table)?;
    Ok((dataset, table, map))
}
