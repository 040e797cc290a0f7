//! Repeated seen/unseen splits: train per split, classify unseen test rows,
//! aggregate mean and population standard deviation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use zsgan_numeric::{Matrix, Real};

use super::{accuracy, hubness_skewness, nn_classify, ridge_baseline, svm_predict, svm_train, synthesize_bank, SvmConfig};
use crate::config::{Ablation, TrainConfig};
use crate::data::{make_split, Dataset, EmbeddingTable, Split, SplitSpec, Standardizer};
use crate::error::{Error, Result};
use crate::models::GeneratorNet;
use crate::trainer::{train, TrainState, TrainingSet};

/// Ablation tag of methods that do not train a generator.
pub const NO_ABLATION: &str = "n/a";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Nearest neighbour over the synthesized bank.
    Nn,
    /// Polynomial-kernel SVM fit on the synthesized bank.
    Svm,
    /// Ridge projection of embeddings to prototypes.
    Ridge,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Nn, Method::Svm, Method::Ridge];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Nn => "nn",
            Method::Svm => "svm",
            Method::Ridge => "ridge",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|m| m.tag() == lower)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }

    fn uses_generator(self) -> bool {
        self != Method::Ridge
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub num_splits: usize,
    pub seen_fraction: f64,
    pub split_seed: u64,
    pub methods: Vec<Method>,
    pub ablations: Vec<Ablation>,
    /// Bank rows per unseen category; `None` uses the average unseen test-class size.
    pub bank_per_category: Option<usize>,
    /// Adds the real seen rows to the SVM training set. Prediction stays
    /// restricted to unseen categories.
    pub include_seen_in_svm: bool,
    pub hubness_k: usize,
    pub ridge_lambda: f64,
    pub svm: SvmConfig,
    /// Per-dimension standardization fitted on the seen rows of each split.
    pub standardize: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            num_splits: 50,
            seen_fraction: 0.5,
            split_seed: 0,
            methods: vec![Method::Nn, Method::Svm],
            ablations: vec![Ablation::Full],
            bank_per_category: None,
            include_seen_in_svm: false,
            hubness_k: 5,
            ridge_lambda: 1.0,
            svm: SvmConfig::default(),
            standardize: true,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_splits == 0 {
            return Err(Error::Config("num_splits must be at least 1".into()));
        }
        if !(self.seen_fraction > 0.0 && self.seen_fraction < 1.0) {
            return Err(Error::Config(format!(
                "seen_fraction must be in (0, 1), got {}",
                self.seen_fraction
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no evaluation methods selected".into()));
        }
        if self.methods.iter().any(|m| m.uses_generator()) && self.ablations.is_empty() {
            return Err(Error::Config("generator-based methods need at least one ablation".into()));
        }
        if self.bank_per_category == Some(0) {
            return Err(Error::Config("bank_per_category must be at least 1".into()));
        }
        if self.hubness_k == 0 {
            return Err(Error::Config("hubness_k must be at least 1".into()));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(Error::Config("ridge_lambda must be >= 0".into()));
        }
        Ok(())
    }

    pub fn split(&self, num_categories: usize, index: usize) -> Result<Split> {
        make_split(
            num_categories,
            &SplitSpec {
                seed: self.split_seed,
                seen_fraction: self.seen_fraction,
                split_index: index,
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitOutcome {
    Ok {
        accuracy: f64,
        hubness_skewness: Option<f64>,
    },
    Failed {
        error: String,
    },
}

/// One (split, method, ablation) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: usize,
    pub method: Method,
    pub ablation: String,
    pub outcome: SplitOutcome,
}

/// Aggregate over splits for one (method, ablation) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub ablation: String,
    /// Split index and accuracy of each successful split.
    pub accuracies: Vec<(usize, f64)>,
    pub mean: f64,
    pub std: f64,
    pub std_convention: String,
    /// Mean hubness skewness over splits that measured it.
    pub hubness_skewness: Option<f64>,
    pub errors: Vec<(usize, String)>,
    pub complete: bool,
}

/// Features of one split, standardized on its seen rows when requested.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub split: Split,
    pub dataset: Dataset,
    pub test_rows: Vec<usize>,
}

impl SplitData {
    pub fn prepare(ds: &Dataset, split: Split, standardize: bool) -> Result<Self> {
        let dataset = if standardize {
            let st = Standardizer::fit(ds.features(), &ds.rows_in(&split.seen))?;
            ds.with_features(st.apply(ds.features()))?
        } else {
            ds.clone()
        };
        let test_rows = dataset.rows_in(&split.unseen);
        if test_rows.is_empty() {
            return Err(Error::Data(format!("split {} has no unseen test rows", split.index)));
        }
        Ok(Self {
            split,
            dataset,
            test_rows,
        })
    }

    pub fn test_features(&self) -> Matrix<f32> {
        self.dataset.features().select_rows(&self.test_rows)
    }

    pub fn test_labels(&self) -> Vec<usize> {
        self.test_rows.iter().map(|&r| self.dataset.labels()[r]).collect()
    }

    /// Average unseen test rows per category, at least 1.
    pub fn default_bank_size(&self) -> usize {
        let avg = self.test_rows.len() as f64 / self.split.unseen.len() as f64;
        (avg.round() as usize).max(1)
    }
}

fn ok(accuracy: f64, hubness_skewness: Option<f64>) -> SplitOutcome {
    SplitOutcome::Ok {
        accuracy,
        hubness_skewness,
    }
}

fn outcome(r: Result<SplitOutcome>) -> SplitOutcome {
    r.unwrap_or_else(|e| SplitOutcome::Failed { error: e.to_string() })
}

/// Scores a trained generator on the split's unseen test rows with every
/// generator-based method in `methods`.
pub fn evaluate_generator<T: Real>(
    g: &GeneratorNet<T>,
    data: &SplitData,
    table: &EmbeddingTable,
    pcfg: &ProtocolConfig,
    methods: &[Method],
    bank_seed: u64,
) -> Result<Vec<(Method, SplitOutcome)>> {
    let k = pcfg.bank_per_category.unwrap_or_else(|| data.default_bank_size());
    let bank = synthesize_bank(g, table, &data.split.unseen, k, bank_seed)?;
    let test = data.test_features();
    let truth = data.test_labels();
    let hub = if bank.features.rows() >= pcfg.hubness_k {
        Some(hubness_skewness(&bank.features, &test, pcfg.hubness_k)?)
    } else {
        None
    };
    let mut out = Vec::new();
    for &m in methods.iter().filter(|m| m.uses_generator()) {
        let r = match m {
            Method::Nn => nn_classify(&test, &bank.features, &bank.labels).map(|p| ok(accuracy(&p, &truth), hub)),
            Method::Svm => {
                let (x, y) = if pcfg.include_seen_in_svm {
                    let seen_rows = data.dataset.rows_in(&data.split.seen);
                    let x = bank.features.vcat(&data.dataset.features().select_rows(&seen_rows))?;
                    let mut y = bank.labels.clone();
                    y.extend(seen_rows.iter().map(|&r| data.dataset.labels()[r]));
                    (x, y)
                } else {
                    (bank.features.clone(), bank.labels.clone())
                };
                svm_train(&x, &y, &pcfg.svm)
                    .and_then(|model| svm_predict(&model, &test, &data.split.unseen))
                    .map(|p| ok(accuracy(&p, &truth), hub))
            }
            Method::Ridge => unreachable!(),
        };
        out.push((m, outcome(r)));
    }
    Ok(out)
}

/// Ridge-projection baseline on one split.
pub fn evaluate_ridge(data: &SplitData, table: &EmbeddingTable, pcfg: &ProtocolConfig) -> SplitOutcome {
    outcome(ridge_cell(data, table, pcfg))
}

fn ridge_cell(data: &SplitData, table: &EmbeddingTable, pcfg: &ProtocolConfig) -> Result<SplitOutcome> {
    let seen_rows = data.dataset.rows_in(&data.split.seen);
    let labels: Vec<usize> = seen_rows.iter().map(|&r| data.dataset.labels()[r]).collect();
    let base = ridge_baseline(
        &data.dataset.features().select_rows(&seen_rows),
        &table.rows_for(&labels),
        &table.rows_for(&data.split.unseen),
        &data.split.unseen,
        pcfg.ridge_lambda,
    )?;
    let test = data.test_features();
    let pred = base.classify(&test)?;
    let hub = if base.prototypes.rows() >= pcfg.hubness_k {
        Some(hubness_skewness(&base.prototypes, &test, pcfg.hubness_k)?)
    } else {
        None
    };
    Ok(ok(accuracy(&pred, &data.test_labels()), hub))
}

/// Trains one generator on the split's seen categories.
pub fn train_on_split(data: &SplitData, table: &EmbeddingTable, cfg: TrainConfig) -> Result<TrainState<f32>> {
    let set = TrainingSet::<f32>::from_split(&data.dataset, table, &data.split.seen)?;
    let mut state = TrainState::for_set(cfg, &set)?;
    train(&mut state, &set, |_| Ok(()))?;
    Ok(state)
}

/// Training seed of a split: distinct per split, shared by every ablation
/// so the grid compares like with like.
pub fn split_train_seed(base: u64, split: usize) -> u64 {
    base.wrapping_add(split as u64)
}

fn cells(pcfg: &ProtocolConfig) -> Vec<(Method, String)> {
    let mut out = Vec::new();
    for a in &pcfg.ablations {
        for &m in pcfg.methods.iter().filter(|m| m.uses_generator()) {
            out.push((m, a.tag().to_string()));
        }
    }
    if pcfg.methods.contains(&Method::Ridge) {
        out.push((Method::Ridge, NO_ABLATION.to_string()));
    }
    out
}

fn failed_cells(split: usize, cells: &[(Method, String)], err: &Error) -> Vec<SplitResult> {
    cells
        .iter()
        .map(|(m, a)| SplitResult {
            split,
            method: *m,
            ablation: a.clone(),
            outcome: SplitOutcome::Failed { error: err.to_string() },
        })
        .collect()
}

fn run_one_split(
    ds: &Dataset,
    table: &EmbeddingTable,
    train_cfg: &TrainConfig,
    pcfg: &ProtocolConfig,
    index: usize,
) -> Vec<SplitResult> {
    let all = cells(pcfg);
    let data = match pcfg
        .split(ds.num_categories(), index)
        .and_then(|s| SplitData::prepare(ds, s, pcfg.standardize))
    {
        Ok(d) => d,
        Err(e) => return failed_cells(index, &all, &e),
    };
    let mut out = Vec::new();
    let seed = split_train_seed(train_cfg.seed, index);
    let gen_methods: Vec<Method> = pcfg.methods.iter().copied().filter(|m| m.uses_generator()).collect();
    if !gen_methods.is_empty() {
        for a in &pcfg.ablations {
            let mut cfg = a.apply(train_cfg);
            cfg.seed = seed;
            let scored = train_on_split(&data, table, cfg)
                .and_then(|state| evaluate_generator(&state.models.g, &data, table, pcfg, &gen_methods, seed));
            match scored {
                Ok(v) => out.extend(v.into_iter().map(|(m, o)| SplitResult {
                    split: index,
                    method: m,
                    ablation: a.tag().to_string(),
                    outcome: o,
                })),
                Err(e) => out.extend(gen_methods.iter().map(|&m| SplitResult {
                    split: index,
                    method: m,
                    ablation: a.tag().to_string(),
                    outcome: SplitOutcome::Failed { error: e.to_string() },
                })),
            }
        }
    }
    if pcfg.methods.contains(&Method::Ridge) {
        out.push(SplitResult {
            split: index,
            method: Method::Ridge,
            ablation: NO_ABLATION.to_string(),
            outcome: evaluate_ridge(&data, table, pcfg),
        });
    }
    out
}

/// Runs `eval` on every split index in parallel; results come back in
/// split order.
pub fn run_splits<F>(num_splits: usize, eval: F) -> Vec<SplitResult>
where
    F: Fn(usize) -> Vec<SplitResult> + Sync + Send,
{
    let per: Vec<Vec<SplitResult>> = (0..num_splits).into_par_iter().map(&eval).collect();
    per.into_iter().flatten().collect()
}

/// Groups cells by (method, ablation) in first-seen order.
pub fn aggregate(results: &[SplitResult], num_splits: usize) -> Vec<EvalReport> {
    let mut keys: Vec<(Method, String)> = Vec::new();
    for r in results {
        if !keys.iter().any(|(m, a)| *m == r.method && *a == r.ablation) {
            keys.push((r.method, r.ablation.clone()));
        }
    }
    keys.into_iter()
        .map(|(method, ablation)| {
            let mut accuracies = Vec::new();
            let mut hubs = Vec::new();
            let mut errors = Vec::new();
            for r in results.iter().filter(|r| r.method == method && r.ablation == ablation) {
                match &r.outcome {
                    SplitOutcome::Ok {
                        accuracy,
                        hubness_skewness,
                    } => {
                        accuracies.push((r.split, *accuracy));
                        hubs.extend(hubness_skewness);
                    }
                    SplitOutcome::Failed { error } => errors.push((r.split, error.clone())),
                }
            }
            let vals: Vec<f64> = accuracies.iter().map(|&(_, a)| a).collect();
            let (mean, std) = mean_std(&vals);
            EvalReport {
                method,
                ablation,
                complete: errors.is_empty() && accuracies.len() == num_splits,
                accuracies,
                mean,
                std,
                std_convention: "population".into(),
                hubness_skewness: (!hubs.is_empty()).then(|| mean_std(&hubs).0),
                errors,
            }
        })
        .collect()
}

/// Mean and population standard deviation; NaN for an empty slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-split cells and their aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRun {
    pub results: Vec<SplitResult>,
    pub reports: Vec<EvalReport>,
}

pub fn run_protocol(
    ds: &Dataset,
    table: &EmbeddingTable,
    train_cfg: &TrainConfig,
    pcfg: &ProtocolConfig,
) -> Result<ProtocolRun> {
    pcfg.validate()?;
    train_cfg.validate()?;
    if table.len() != ds.num_categories() {
        return Err(Error::Data(format!(
            "{} embeddings for {} categories",
            table.len(),
            ds.num_categories()
        )));
    }
    let results = run_splits(pcfg.num_splits, |i| run_one_split(ds, table, train_cfg, pcfg, i));
    let reports = aggregate(&results, pcfg.num_splits);
    Ok(ProtocolRun { results, reports })
}

pub const SPLITS_FILE: &str = "splits.jsonl";
pub const REPORTS_FILE: &str = "reports.jsonl";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Writes per-split cells, aggregate reports and the summary table.
pub fn write_reports(dir: &Path, run: &ProtocolRun) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let jsonl = |items: Vec<String>| items.into_iter().map(|s| s + "\n").collect::<String>();
    let splits = jsonl(run.results.iter().map(|r| serde_json::to_string(r).expect("serializable")).collect());
    let reports = jsonl(run.reports.iter().map(|r| serde_json::to_string(r).expect("serializable")).collect());
    for (name, text) in [
        (SPLITS_FILE, splits),
        (REPORTS_FILE, reports),
        (SUMMARY_FILE, summary_table(&run.reports)),
    ] {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// Accuracy in percent as `mean ± std`, one row per report.
pub fn summary_table(reports: &[EvalReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<8} {:<14} {:>16} {:>7} {:>10}", "method", "ablation", "accuracy (%)", "splits", "hub-skew");
    for r in reports {
        let hub = r.hubness_skewness.map_or("-".to_string(), |h| format!("{h:.3}"));
        let n = r.accuracies.len();
        let total = n + r.errors.len();
        let _ = writeln!(
            s,
            "{:<8} {:<14} {:>16} {:>7} {:>10}",
            r.method.tag(),
            r.ablation,
            format!("{:.1} ± {:.1}", 100.0 * r.mean, 100.0 * r.std),
            format!("{n}/{total}"),
            hub
        );
    }
    s
}
