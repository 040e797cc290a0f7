//! One-vs-rest soft-margin SVMs with a polynomial kernel, solved by SMO with
//! second-order working-set selection.

use serde::{Deserialize, Serialize};
use zsgan_numeric::Matrix;

use crate::error::{Error, Result};

/// `K(x, y) = (gamma <x, y> + coef0) ^ degree`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub degree: i32,
    pub gamma: f64,
    pub coef0: f64,
}

impl Kernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        (self.gamma * dot + self.coef0).powi(self.degree)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    /// Slack penalty.
    pub c: f64,
    pub degree: i32,
    /// `None` uses `1 / d`.
    pub gamma: Option<f64>,
    pub coef0: f64,
    /// KKT tolerance.
    pub tol: f64,
    /// `None` uses `max(10^6, 100 n)`.
    pub max_iter: Option<usize>,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 5.0,
            degree: 3,
            gamma: None,
            coef0: 1.0,
            tol: 1e-3,
            max_iter: None,
        }
    }
}

/// One binary machine over the shared training rows.
#[derive(Debug, Clone, PartialEq)]
struct Binary {
    /// `alpha_i * y_i` per training row.
    coef: Vec<f64>,
    rho: f64,
    alpha: Vec<f64>,
    y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    kernel: Kernel,
    c: f64,
    rows: Vec<Vec<f64>>,
    classes: Vec<usize>,
    machines: Vec<Binary>,
    /// Largest KKT violation over all machines, measured on the decision function.
    pub kkt_residual: f64,
}

const TAU: f64 = 1e-12;
const PRECOMPUTE_LIMIT: usize = 25_000_000;

enum Gram<'a> {
    Full(Vec<f64>, usize),
    Lazy(&'a [Vec<f64>], Kernel),
}

impl Gram<'_> {
    fn row(&self, i: usize, buf: &mut Vec<f64>) {
        match self {
            Gram::Full(k, n) => {
                buf.clear();
                buf.extend_from_slice(&k[i * n..(i + 1) * n]);
            }
            Gram::Lazy(x, kern) => {
                buf.clear();
                buf.extend(x.iter().map(|r| kern.eval(&x[i], r)));
            }
        }
    }

    fn diag(&self, n: usize) -> Vec<f64> {
        match self {
            Gram::Full(k, _) => (0..n).map(|i| k[i * n + i]).collect(),
            Gram::Lazy(x, kern) => x.iter().map(|r| kern.eval(r, r)).collect(),
        }
    }
}

fn solve_binary(gram: &Gram, diag: &[f64], y: &[f64], c: f64, eps: f64, max_iter: usize) -> Result<Binary> {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut ki = Vec::with_capacity(n);
    let mut kj = Vec::with_capacity(n);
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut iter = 0;
    loop {
        // i maximizes -y_t G_t over the "up" set
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if y[t] > 0.0 {
                if !upper(alpha[t]) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i = t;
                }
            } else if !lower(alpha[t]) && grad[t] >= gmax {
                gmax = grad[t];
                i = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        if i != usize::MAX {
            gram.row(i, &mut ki);
            let mut best = f64::INFINITY;
            for t in 0..n {
                let (in_low, g) = if y[t] > 0.0 { (!lower(alpha[t]), grad[t]) } else { (!upper(alpha[t]), -grad[t]) };
                if !in_low {
                    continue;
                }
                gmax2 = gmax2.max(g);
                let diff = gmax + g;
                if diff > 0.0 {
                    let quad = diag[i] + diag[t] - 2.0 * ki[t];
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax + gmax2 < eps {
            break;
        }
        if iter >= max_iter {
            return Err(Error::NoConvergence(format!(
                "SMO hit {max_iter} iterations with KKT gap {}",
                gmax + gmax2
            )));
        }
        iter += 1;

        gram.row(j, &mut kj);
        let qij = y[i] * y[j] * ki[j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = {
                let q = diag[i] + diag[j] + 2.0 * qij;
                if q > 0.0 {
                    q
                } else {
                    TAU
                }
            };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = {
                let q = diag[i] + diag[j] - 2.0 * qij;
                if q > 0.0 {
                    q
                } else {
                    TAU
                }
            };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }

    // offset: mean over free vectors, else midpoint of the feasible interval
    let (mut ub, mut lb, mut sum, mut free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum += yg;
            free += 1;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
    Ok(Binary {
        coef: alpha.iter().zip(y).map(|(a, yy)| a * yy).collect(),
        rho,
        alpha,
        y: y.to_vec(),
    })
}

impl SvmModel {
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn penalty(&self) -> f64 {
        self.c
    }

    /// `(alpha, y, rho)` of the one-vs-rest machine for `classes()[m]`;
    /// `y` is +1 for that class and -1 otherwise.
    pub fn dual_solution(&self, m: usize) -> Option<(&[f64], &[f64], f64)> {
        self.machines.get(m).map(|b| (b.alpha.as_slice(), b.y.as_slice(), b.rho))
    }

    fn decision_row(&self, x: &[f64]) -> Vec<f64> {
        let k: Vec<f64> = self.rows.iter().map(|r| self.kernel.eval(r, x)).collect();
        self.machines
            .iter()
            .map(|m| m.coef.iter().zip(&k).map(|(c, kv)| c * kv).sum::<f64>() - m.rho)
            .collect()
    }

    /// `n x classes` one-vs-rest decision values.
    pub fn decision_values(&self, features: &Matrix<f32>) -> Result<Matrix<f64>> {
        let d = self.rows.first().map_or(0, Vec::len);
        if features.cols() != d {
            return Err(Error::Contract(format!("features have {} dims, model expects {d}", features.cols())));
        }
        let mut out = Matrix::zeros(features.rows(), self.classes.len());
        for (i, r) in features.row_iter().enumerate() {
            let x: Vec<f64> = r.iter().map(|&v| v as f64).collect();
            out.row_mut(i).copy_from_slice(&self.decision_row(&x));
        }
        Ok(out)
    }

    /// Box and equality constraints of every dual solution.
    pub fn dual_feasible(&self, tol: f64) -> bool {
        self.machines.iter().all(|m| {
            m.alpha.iter().all(|&a| a >= -tol && a <= self.c + tol)
                && m.alpha.iter().zip(&m.y).map(|(a, y)| a * y).sum::<f64>().abs() <= tol
        })
    }

    /// Largest violation of the KKT conditions, measured on decision values
    /// of the training rows.
    fn measure_kkt(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut k = Vec::with_capacity(self.rows.len());
        for (i, xi) in self.rows.iter().enumerate() {
            k.clear();
            k.extend(self.rows.iter().map(|r| self.kernel.eval(xi, r)));
            for m in &self.machines {
                let f: f64 = m.coef.iter().zip(&k).map(|(c, kv)| c * kv).sum::<f64>() - m.rho;
                let margin = m.y[i] * f - 1.0;
                let a = m.alpha[i];
                let v = if a <= 0.0 {
                    (-margin).max(0.0)
                } else if a >= self.c {
                    margin.max(0.0)
                } else {
                    margin.abs()
                };
                worst = worst.max(v);
            }
        }
        worst
    }
}

pub fn svm_train(features: &Matrix<f32>, labels: &[usize], cfg: &SvmConfig) -> Result<SvmModel> {
    if !(cfg.c > 0.0) || !cfg.c.is_finite() {
        return Err(Error::Config(format!("SVM slack penalty must be positive, got {}", cfg.c)));
    }
    if !(cfg.tol > 0.0) || cfg.degree < 1 {
        return Err(Error::Config("SVM needs tol > 0 and degree >= 1".into()));
    }
    if labels.len() != features.rows() {
        return Err(Error::Contract("one label per SVM training row required".into()));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Contract(format!(
            "SVM needs at least 2 categories, got {}",
            classes.len()
        )));
    }
    let n = features.rows();
    let d = features.cols();
    let kernel = Kernel {
        degree: cfg.degree,
        gamma: cfg.gamma.unwrap_or(1.0 / d.max(1) as f64),
        coef0: cfg.coef0,
    };
    let rows: Vec<Vec<f64>> = features.row_iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    let gram = if n * n <= PRECOMPUTE_LIMIT {
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = kernel.eval(&rows[i], &rows[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        Gram::Full(k, n)
    } else {
        Gram::Lazy(&rows, kernel)
    };
    let diag = gram.diag(n);
    let max_iter = cfg.max_iter.unwrap_or_else(|| (100 * n).max(1_000_000));
    let mut machines = Vec::with_capacity(classes.len());
    for &c in &classes {
        let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        machines.push(solve_binary(&gram, &diag, &y, cfg.c, cfg.tol, max_iter)?);
    }
    drop(gram);
    let mut model = SvmModel {
        kernel,
        c: cfg.c,
        rows,
        classes,
        machines,
        kkt_residual: 0.0,
    };
    model.kkt_residual = model.measure_kkt();
    // the stopping rule bounds the violation by tol; allow rounding slack only
    if model.kkt_residual > cfg.tol * (1.0 + 1e-6) + 1e-9 {
        return Err(Error::NoConvergence(format!(
            "KKT residual {} exceeds tolerance {}",
            model.kkt_residual, cfg.tol
        )));
    }
    Ok(model)
}

/// Highest decision value among `restrict_to`; ties go to the lower id.
pub fn svm_predict(model: &SvmModel, features: &Matrix<f32>, restrict_to: &[usize]) -> Result<Vec<usize>> {
    let cols: Vec<usize> = restrict_to
        .iter()
        .map(|c| {
            model
                .classes
                .binary_search(c)
                .map_err(|_| Error::Contract(format!("category {c} was not in the SVM training set")))
        })
        .collect::<Result<_>>()?;
    if cols.is_empty() {
        return Err(Error::Contract("prediction needs at least one candidate category".into()));
    }
    let dv = model.decision_values(features)?;
    Ok(dv
        .row_iter()
        .map(|r| {
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for (&col, &c) in cols.iter().zip(restrict_to) {
                if r[col] > best.0 || (r[col] == best.0 && c < best.1) {
                    best = (r[col], c);
                }
            }
            best.1
        })
        .collect())
}
