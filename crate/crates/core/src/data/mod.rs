//! Datasets, semantic embedding tables and their on-disk format.

mod split;
mod synthetic;
mod wordvec;

use std::fs;
use std::path::Path;

use zsgan_numeric::{Matrix, Real};

use crate::container::{read_f32, read_u32, write_f32, write_u32, Meta};
use crate::error::{Error, Result};

pub use split::{make_split, make_splits, Split, SplitSpec};
pub use synthetic::{generate_synthetic, GroundTruthMap, MapKind, SyntheticSpec};
pub use wordvec::{load_word_vectors, parse_word_vectors};

pub const DATASET_META: &str = "dataset.meta";
pub const FEATURES_FILE: &str = "features.f32";
pub const LABELS_FILE: &str = "labels.u32";
pub const EMBEDDINGS_META: &str = "embeddings.meta";
pub const EMBEDDINGS_FILE: &str = "embeddings.f32";

/// Labelled visual feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix<f32>,
    labels: Vec<usize>,
    category_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix<f32>, labels: Vec<usize>, category_names: Vec<String>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::Data(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= category_names.len()) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {} categories",
                category_names.len()
            )));
        }
        if !features.is_finite() {
            return Err(Error::Data("features contain non-finite values".into()));
        }
        Ok(Self {
            features,
            labels,
            category_names,
        })
    }

    pub fn features(&self) -> &Matrix<f32> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn category_names(&self) -> &[String] {
        &self.category_names
    }

    pub fn num_categories(&self) -> usize {
        self.category_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn d_v(&self) -> usize {
        self.features.cols()
    }

    /// Row indices whose label is in `categories`.
    pub fn rows_in(&self, categories: &[usize]) -> Vec<usize> {
        let mut member = vec![false; self.num_categories()];
        for &c in categories {
            if c < member.len() {
                member[c] = true;
            }
        }
        (0..self.len()).filter(|&i| member[self.labels[i]]).collect()
    }

    /// Rows per category.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_categories()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn with_features(&self, features: Matrix<f32>) -> Result<Self> {
        Self::new(features, self.labels.clone(), self.category_names.clone())
    }
}

/// One semantic embedding per category, rows aligned with category names.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    embeddings: Matrix<f32>,
    category_names: Vec<String>,
    normalized: bool,
}

impl EmbeddingTable {
    pub fn new(embeddings: Matrix<f32>, category_names: Vec<String>, normalized: bool) -> Result<Self> {
        if embeddings.rows() != category_names.len() {
            return Err(Error::Data(format!(
                "{} embedding rows for {} categories",
                embeddings.rows(),
                category_names.len()
            )));
        }
        if !embeddings.is_finite() {
            return Err(Error::Data("embeddings contain non-finite values".into()));
        }
        if normalized {
            for (i, r) in embeddings.row_iter().enumerate() {
                let n = r.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
                if (n - 1.0).abs() > 1e-6 {
                    return Err(Error::Data(format!(
                        "embedding of `{}` has norm {n}, flagged as normalized",
                        category_names[i]
                    )));
                }
            }
        }
        Ok(Self {
            embeddings,
            category_names,
            normalized,
        })
    }

    pub fn embeddings(&self) -> &Matrix<f32> {
        &self.embeddings
    }

    pub fn category_names(&self) -> &[String] {
        &self.category_names
    }

    pub fn d_e(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.rows() == 0
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn get(&self, category: usize) -> &[f32] {
        self.embeddings.row(category)
    }

    /// Embedding rows of `categories` in the given order, converted to `T`.
    pub fn rows_for<T: Real>(&self, categories: &[usize]) -> Matrix<T> {
        self.embeddings.select_rows(categories).cast()
    }
}

/// Rescales every row to unit L2 norm.
pub fn normalize_embeddings(table: &EmbeddingTable) -> Result<EmbeddingTable> {
    let mut m = table.embeddings.clone();
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        let n = row.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::Data(format!(
                "embedding of `{}` is all zeros",
                table.category_names[r]
            )));
        }
        row.iter_mut().for_each(|x| *x = ((*x as f64) / n) as f32);
    }
    // f32 rounding can leave a norm a few ulps away from 1; the table invariant allows 1e-6
    EmbeddingTable::new(m, table.category_names.clone(), true)
}

fn push_categories(meta: &mut Meta, names: &[String]) -> Result<()> {
    meta.push("num_categories", names.len())?;
    for (i, n) in names.iter().enumerate() {
        meta.push(format!("category.{i}"), n)?;
    }
    Ok(())
}

fn read_categories(meta: &Meta, path: &Path) -> Result<Vec<String>> {
    let c: usize = meta.require_parse("num_categories", path)?;
    (0..c)
        .map(|i| meta.require(&format!("category.{i}"), path).map(str::to_string))
        .collect()
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut meta = Meta::new("dataset");
    meta.push("n", ds.len())?;
    meta.push("d_v", ds.d_v())?;
    push_categories(&mut meta, &ds.category_names)?;
    meta.write(&dir.join(DATASET_META))?;
    write_f32(&dir.join(FEATURES_FILE), ds.features.data())?;
    let labels: Vec<u32> = ds.labels.iter().map(|&l| l as u32).collect();
    write_u32(&dir.join(LABELS_FILE), &labels)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join(DATASET_META);
    let meta = Meta::read(&meta_path)?;
    meta.expect_kind("dataset", &meta_path)?;
    let n: usize = meta.require_parse("n", &meta_path)?;
    let d_v: usize = meta.require_parse("d_v", &meta_path)?;
    let names = read_categories(&meta, &meta_path)?;
    let features = read_f32(&dir.join(FEATURES_FILE), n * d_v)?;
    let labels_path = dir.join(LABELS_FILE);
    let raw = read_u32(&labels_path, n)?;
    if let Some(i) = raw.iter().position(|&l| l as usize >= names.len()) {
        return Err(Error::format(
            &labels_path,
            (i * 4) as u64,
            format!("label {} out of range for {} categories", raw[i], names.len()),
        ));
    }
    let labels = raw.into_iter().map(|l| l as usize).collect();
    Dataset::new(Matrix::from_vec(n, d_v, features)?, labels, names)
}

pub fn save_embeddings(table: &EmbeddingTable, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut meta = Meta::new("embeddings");
    meta.push("d_e", table.d_e())?;
    meta.push("normalized", table.normalized)?;
    push_categories(&mut meta, &table.category_names)?;
    meta.write(&dir.join(EMBEDDINGS_META))?;
    write_f32(&dir.join(EMBEDDINGS_FILE), table.embeddings.data())
}

pub fn load_embeddings(dir: &Path) -> Result<EmbeddingTable> {
    let meta_path = dir.join(EMBEDDINGS_META);
    let meta = Meta::read(&meta_path)?;
    meta.expect_kind("embeddings", &meta_path)?;
    let d_e: usize = meta.require_parse("d_e", &meta_path)?;
    let normalized: bool = meta.require_parse("normalized", &meta_path)?;
    let names = read_categories(&meta, &meta_path)?;
    let data = read_f32(&dir.join(EMBEDDINGS_FILE), names.len() * d_e)?;
    EmbeddingTable::new(Matrix::from_vec(names.len(), d_e, data)?, names, normalized)
}

/// Per-dimension standardization fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &Matrix<f32>, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("cannot standardize with zero rows".into()));
        }
        let d = features.cols();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &r in rows {
            for (m, &x) in mean.iter_mut().zip(features.row(r)) {
                *m += x as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &r in rows {
            for ((v, &x), m) in var.iter_mut().zip(features.row(r)).zip(&mean) {
                *v += (x as f64 - m).powi(2);
            }
        }
        // constant dimensions are centred but not scaled
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-6 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, features: &Matrix<f32>) -> Matrix<f32> {
        let mut out = features.clone();
        for r in 0..out.rows() {
            for ((x, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *x = ((*x as f64 - m) / s) as f32;
            }
        }
        out
    }
}
