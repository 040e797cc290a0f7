//! Zero-shot classification over synthesized features and its diagnostics.

mod protocol;
mod ridge;
mod svm;

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use zsgan_numeric::{Matrix, Real, RngStream};

use crate::data::EmbeddingTable;
use crate::error::{Error, Result};
use crate::models::{GeneratorNet, NoiseGroup};

pub use protocol::{
    aggregate, evaluate_generator, evaluate_ridge, mean_std, run_protocol, run_splits, split_train_seed, summary_table, train_on_split,
    write_reports, EvalReport, Method, ProtocolConfig, ProtocolRun, SplitData, SplitOutcome, SplitResult, NO_ABLATION,
    REPORTS_FILE, SPLITS_FILE, SUMMARY_FILE,
};
pub use ridge::{ridge_baseline, ridge_fit, RidgeBaseline};
pub use svm::{svm_predict, svm_train, Kernel, SvmConfig, SvmModel};

/// Synthetic feature rows standing in for unseen-category training data.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedBank {
    pub features: Matrix<f32>,
    /// Global category id per row.
    pub labels: Vec<usize>,
    pub seed: u64,
}

const BANK_STREAM: u64 = 30;

/// `k` rows per category, each from fresh noise.
pub fn synthesize_bank<T: Real>(
    g: &GeneratorNet<T>,
    table: &EmbeddingTable,
    categories: &[usize],
    k: usize,
    seed: u64,
) -> Result<SynthesizedBank> {
    if k == 0 {
        return Err(Error::Config("bank needs at least one row per category".into()));
    }
    if categories.is_empty() {
        return Err(Error::Config("bank needs at least one category".into()));
    }
    let mut rng = RngStream::new(seed, BANK_STREAM);
    let mut features = Matrix::zeros(0, g.d_v());
    let mut labels = Vec::with_capacity(k * categories.len());
    for &c in categories {
        if c >= table.len() {
            return Err(Error::Contract(format!("category {c} has no embedding")));
        }
        let noise = NoiseGroup::<T>::draw(k, g.z_dim(), &mut rng);
        let e: Vec<T> = table.get(c).iter().map(|&x| T::from_f64_lossy(x as f64)).collect();
        let rows = g.generate(&noise, &e)?;
        features = features.vcat(&rows.cast())?;
        labels.extend(std::iter::repeat(c).take(k));
    }
    if !features.is_finite() {
        return Err(Error::Numeric(zsgan_numeric::NumericError::NonFinite(
            "synthesized bank contains non-finite values".into(),
        )));
    }
    Ok(SynthesizedBank { features, labels, seed })
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}

/// Category of the Euclidean-nearest reference row; among equidistant rows
/// the lowest category id wins.
pub fn nn_classify(test: &Matrix<f32>, reference: &Matrix<f32>, labels: &[usize]) -> Result<Vec<usize>> {
    if reference.rows() == 0 {
        return Err(Error::Contract("nearest-neighbour search over an empty bank".into()));
    }
    if labels.len() != reference.rows() {
        return Err(Error::Contract("one label per bank row required".into()));
    }
    if test.cols() != reference.cols() {
        return Err(Error::Contract(format!(
            "test rows have {} dims, bank rows {}",
            test.cols(),
            reference.cols()
        )));
    }
    Ok(test
        .row_iter()
        .map(|x| {
            let mut best = (f64::INFINITY, usize::MAX);
            for (r, &l) in reference.row_iter().zip(labels) {
                let d = sq_dist(x, r);
                if d < best.0 || (d == best.0 && l < best.1) {
                    best = (d, l);
                }
            }
            best.1
        })
        .collect())
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / predicted.len() as f64
}

/// How often each reference row is among the `k` nearest neighbours of a
/// test row. Ties go to the lower row index.
pub fn k_occurrence(reference: &Matrix<f32>, test: &Matrix<f32>, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if reference.rows() < k {
        return Err(Error::Contract(format!(
            "{} reference rows cannot supply {k} neighbours",
            reference.rows()
        )));
    }
    if test.cols() != reference.cols() {
        return Err(Error::Contract("test and reference dims differ".into()));
    }
    let mut counts = vec![0usize; reference.rows()];
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(reference.rows());
    for x in test.row_iter() {
        dists.clear();
        dists.extend(reference.row_iter().enumerate().map(|(j, r)| (sq_dist(x, r), j)));
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in &dists[..k] {
            counts[j] += 1;
        }
    }
    Ok(counts)
}

/// Population skewness; zero when all values are equal.
pub fn skewness(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if m2 <= 0.0 {
        return 0.0;
    }
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Skewness of the k-occurrence distribution of `reference` rows over `test`.
pub fn hubness_skewness(reference: &Matrix<f32>, test: &Matrix<f32>, k: usize) -> Result<f64> {
    let counts: Vec<f64> = k_occurrence(reference, test, k)?.into_iter().map(|c| c as f64).collect();
    Ok(skewness(&counts))
}

/// Projection onto the two leading principal components. Each component's
/// sign is fixed so its largest-magnitude loading is positive.
pub fn pca_2d(features: &Matrix<f32>) -> Result<Matrix<f64>> {
    let (n, d) = features.shape();
    if n == 0 || d == 0 {
        return Err(Error::Contract("PCA needs at least one row and column".into()));
    }
    let x = DMatrix::from_fn(n, d, |i, j| features.get(i, j) as f64);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut out = Matrix::zeros(n, 2);
    for (col, &k) in order.iter().take(2).enumerate() {
        let mut v = eig.eigenvectors.column(k).clone_owned();
        let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            v = -v;
        }
        let proj = &centered * v;
        for i in 0..n {
            out.set(i, col, proj[i]);
        }
    }
    Ok(out)
}

/// Writes `x y category` rows.
pub fn write_2d(path: &Path, coords: &Matrix<f64>, labels: &[usize]) -> Result<()> {
    if coords.rows() != labels.len() || coords.cols() != 2 {
        return Err(Error::Contract("one label per 2-D point required".into()));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for (r, l) in coords.row_iter().zip(labels) {
        writeln!(f, "{} {} {}", r[0], r[1], l).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
