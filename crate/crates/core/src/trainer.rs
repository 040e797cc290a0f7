//! Alternating discriminator / generator training.
//!
//! One step scores three input sets with `D`: real features with matched
//! embeddings, real features with mismatched embeddings, and `q` synthetic
//! features per condition. Scores within a condition are averaged before the
//! log, then the per-condition terms are averaged over the batch. `D` is
//! updated first; the generator and inference net are then updated against
//! the new `D`.

use serde::{Deserialize, Serialize};
use zsgan_numeric::{adam_step, sigmoid, AdamState, Matrix, Real, RngStream};

use crate::config::TrainConfig;
use crate::data::{Dataset, EmbeddingTable};
use crate::error::{Error, Result};
use crate::losses::{
    category_nll_logits, correlation_loss_logits, filter_outliers, inference_loss_grad, neg_log_mean_one_minus_sigmoid,
    neg_log_mean_sigmoid, ScoreTriple, PROB_FLOOR,
};
use crate::models::{ModelDims, ModelTriplet};

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, HISTORY_FILE};

/// Seen-category training data. Labels are local indices into `seen`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet<T> {
    features: Matrix<T>,
    labels: Vec<usize>,
    embeddings: Matrix<T>,
    seen: Vec<usize>,
}

impl<T: Real> TrainingSet<T> {
    pub fn new(features: Matrix<T>, labels: Vec<usize>, embeddings: Matrix<T>, seen: Vec<usize>) -> Result<Self> {
        if seen.is_empty() {
            return Err(Error::Config("training needs at least one seen category".into()));
        }
        if embeddings.rows() != seen.len() {
            return Err(Error::Data(format!(
                "{} embedding rows for {} seen categories",
                embeddings.rows(),
                seen.len()
            )));
        }
        if labels.len() != features.rows() || labels.iter().any(|&l| l >= seen.len()) {
            return Err(Error::Data("training labels must index the seen categories".into()));
        }
        if features.rows() == 0 {
            return Err(Error::Config("no training rows for the seen categories".into()));
        }
        Ok(Self {
            features,
            labels,
            embeddings,
            seen,
        })
    }

    /// Copies only the rows and embeddings of `seen` categories.
    pub fn from_split(ds: &Dataset, table: &EmbeddingTable, seen: &[usize]) -> Result<Self> {
        if table.len() != ds.num_categories() {
            return Err(Error::Data(format!(
                "{} embeddings for {} categories",
                table.len(),
                ds.num_categories()
            )));
        }
        if let Some(&c) = seen.iter().find(|&&c| c >= ds.num_categories()) {
            return Err(Error::Config(format!("seen category {c} does not exist")));
        }
        let mut local = vec![usize::MAX; ds.num_categories()];
        for (i, &c) in seen.iter().enumerate() {
            local[c] = i;
        }
        let rows = ds.rows_in(seen);
        let labels = rows.iter().map(|&r| local[ds.labels()[r]]).collect();
        Self::new(
            ds.features().select_rows(&rows).cast(),
            labels,
            table.rows_for(seen),
            seen.to_vec(),
        )
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn embeddings(&self) -> &Matrix<T> {
        &self.embeddings
    }

    /// Global ids of the seen categories, in local-index order.
    pub fn seen(&self) -> &[usize] {
        &self.seen
    }

    pub fn num_seen(&self) -> usize {
        self.seen.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// `k` distinct categories from `seen` other than `matched`, uniformly
/// without replacement.
pub fn sample_mismatched(matched: usize, seen: &[usize], k: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if !seen.contains(&matched) {
        return Err(Error::Contract(format!("matched category {matched} is not seen")));
    }
    if seen.len() < 2 || k == 0 || k > seen.len() - 1 {
        return Err(Error::Config(format!(
            "cannot draw {k} mismatched categories from {} seen",
            seen.len()
        )));
    }
    let pool: Vec<usize> = seen.iter().copied().filter(|&c| c != matched).collect();
    Ok(rng.choose_distinct(&pool, k))
}

/// A minibatch of real rows with their matched and mismatched categories
/// (local seen indices).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub features: Matrix<T>,
    pub matched: Vec<usize>,
    /// `k` mismatched categories per row, all rows the same `k`.
    pub mismatched: Vec<Vec<usize>>,
}

impl<T: Real> Batch<T> {
    pub fn sample(set: &TrainingSet<T>, rows: &[usize], k: usize, rng: &mut RngStream) -> Result<Self> {
        let all: Vec<usize> = (0..set.num_seen()).collect();
        let matched: Vec<usize> = rows.iter().map(|&r| set.labels[r]).collect();
        let mismatched = matched
            .iter()
            .map(|&m| sample_mismatched(m, &all, k, rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            features: set.features.select_rows(rows),
            matched,
            mismatched,
        })
    }

    pub fn len(&self) -> usize {
        self.matched.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matched.is_empty()
    }

    fn k(&self) -> usize {
        self.mismatched.first().map_or(0, Vec::len)
    }

    fn validate(&self, num_seen: usize) -> Result<()> {
        let k = self.k();
        if self.is_empty() || self.features.rows() != self.len() || self.mismatched.len() != self.len() {
            return Err(Error::Contract("batch rows, matched and mismatched lists disagree".into()));
        }
        for (i, (&m, mis)) in self.matched.iter().zip(&self.mismatched).enumerate() {
            if m >= num_seen || mis.len() != k || k == 0 || mis.iter().any(|&c| c >= num_seen || c == m) {
                return Err(Error::Contract(format!("batch row {i} has invalid category indices")));
            }
        }
        Ok(())
    }
}

fn repeat_each(xs: &[usize], times: usize) -> Vec<usize> {
    xs.iter().flat_map(|&x| std::iter::repeat(x).take(times)).collect()
}

fn scaled<T: Real>(m: &Matrix<T>, s: T) -> Matrix<T> {
    m.map(|x| x * s)
}

fn column<T: Real>(values: Vec<T>) -> Matrix<T> {
    let n = values.len();
    Matrix::from_vec(n, 1, values).expect("column length matches")
}

fn mean_sigmoid<T: Real>(logits: &Matrix<T>) -> f64 {
    let n = logits.data().len() as f64;
    let s = logits.data().iter().map(|&a| sigmoid(a.to_f64_lossy())).sum::<f64>() / n;
    s.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

fn t<T: Real>(x: f64) -> T {
    T::from_f64_lossy(x)
}

/// Value and terms of the discriminator objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DTerms<T> {
    pub total: T,
    pub adv: T,
    pub l_co: T,
    pub l_cat: T,
    pub scores: ScoreTriple,
}

/// Value and terms of the generator / inference-net objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GTerms<T> {
    pub total: T,
    pub adv: T,
    pub l_in: T,
    pub l_co: T,
    pub l_cat: T,
    pub l_fea: T,
    pub kept_fraction: f64,
    pub degenerate: usize,
}

fn check_noise<T: Real>(models: &ModelTriplet<T>, batch: &Batch<T>, noise: &Matrix<T>, q: usize) -> Result<()> {
    if noise.rows() != batch.len() * q || noise.cols() != models.dims.z_dim {
        return Err(Error::Contract(format!(
            "noise is {:?}, expected ({}, {})",
            noise.shape(),
            batch.len() * q,
            models.dims.z_dim
        )));
    }
    Ok(())
}

/// Discriminator objective; accumulates gradients into `D` only. Synthetic
/// features are treated as constants.
pub fn d_objective<T: Real>(
    models: &mut ModelTriplet<T>,
    cfg: &TrainConfig,
    embeddings: &Matrix<T>,
    batch: &Batch<T>,
    noise: &Matrix<T>,
) -> Result<DTerms<T>> {
    let q = cfg.noise_set_size;
    let k = batch.k();
    batch.validate(embeddings.rows())?;
    check_noise(models, batch, noise, q)?;
    let half = t::<T>(0.5);
    let d = &mut models.d;

    let e_mat = embeddings.select_rows(&batch.matched);
    let (a_r, c_r) = d.score_logits(&batch.features, &e_mat)?;
    let (l_r, g_r) = neg_log_mean_sigmoid(a_r.data(), 1)?;
    d.score_backward(&c_r, &column(g_r))?;

    let mis_flat: Vec<usize> = batch.mismatched.iter().flatten().copied().collect();
    let v_rep = batch.features.repeat_rows(k);
    let (a_w, c_w) = d.score_logits(&v_rep, &embeddings.select_rows(&mis_flat))?;
    let (l_w, g_w) = neg_log_mean_one_minus_sigmoid(a_w.data(), k)?;
    d.score_backward(&c_w, &scaled(&column(g_w), half))?;

    let fake_cats = repeat_each(&batch.matched, q);
    let e_rep = embeddings.select_rows(&fake_cats);
    let (v_fake, _) = models.g.forward(noise, &e_rep)?;
    let d = &mut models.d;
    let (a_f, c_f) = d.score_logits(&v_fake, &e_rep)?;
    let (l_f, g_f) = neg_log_mean_one_minus_sigmoid(a_f.data(), q)?;
    d.score_backward(&c_f, &scaled(&column(g_f), half))?;

    let adv = l_r + half * (l_w + l_f);
    let mut l_co = T::zero();
    let mut l_cat = T::zero();
    let (lambda2, lambda_cat) = (t::<T>(cfg.lambda2), t::<T>(cfg.lambda_cat));
    if cfg.lambda2 > 0.0 || cfg.lambda_cat > 0.0 {
        let (ql, cl, hc) = d.head_logits(&v_fake)?;
        let mis_rep = fake_mismatch(batch, q);
        let (co, g_co) = correlation_loss_logits(&ql, &fake_cats, &mis_rep)?;
        let (cat_f, g_cf) = category_nll_logits(&cl, &fake_cats)?;
        d.heads_backward(&hc, Some(&scaled(&g_co, lambda2)), Some(&scaled(&g_cf, lambda_cat)))?;
        let (_, cl_r, hc_r) = d.head_logits(&batch.features)?;
        let (cat_r, g_cr) = category_nll_logits(&cl_r, &batch.matched)?;
        d.heads_backward(&hc_r, None, Some(&scaled(&g_cr, lambda_cat)))?;
        l_co = co;
        l_cat = cat_r + cat_f;
    }
    let scores = ScoreTriple::new(mean_sigmoid(&a_r), mean_sigmoid(&a_w), mean_sigmoid(&a_f))?;
    Ok(DTerms {
        total: adv + lambda2 * l_co + lambda_cat * l_cat,
        adv,
        l_co,
        l_cat,
        scores,
    })
}

/// Mismatched category for synthetic row `i` of each condition: the
/// condition's `i mod k`-th mismatched draw.
fn fake_mismatch<T: Real>(batch: &Batch<T>, q: usize) -> Vec<usize> {
    let k = batch.k();
    batch
        .mismatched
        .iter()
        .flat_map(|mis| (0..q).map(move |i| mis[i % k]))
        .collect()
}

/// Generator / inference-net objective; accumulates gradients into `G`, `R`
/// and `D` (the caller discards `D`'s). `kept` freezes the outlier-filter
/// selection per condition; `None` recomputes it.
pub fn g_objective<T: Real>(
    models: &mut ModelTriplet<T>,
    cfg: &TrainConfig,
    embeddings: &Matrix<T>,
    batch: &Batch<T>,
    noise: &Matrix<T>,
    kept: Option<&[Vec<usize>]>,
) -> Result<GTerms<T>> {
    let q = cfg.noise_set_size;
    batch.validate(embeddings.rows())?;
    check_noise(models, batch, noise, q)?;
    let b = batch.len();
    let bt = T::from_usize(b).expect("batch size fits");
    let (lambda1, lambda2, lambda_cat) = (t::<T>(cfg.lambda1), t::<T>(cfg.lambda2), t::<T>(cfg.lambda_cat));

    let fake_cats = repeat_each(&batch.matched, q);
    let e_rep = embeddings.select_rows(&fake_cats);
    let (v_fake, g_cache) = models.g.forward(noise, &e_rep)?;

    let (a_f, c_f) = models.d.score_logits(&v_fake, &e_rep)?;
    let (adv, g_f) = neg_log_mean_sigmoid(a_f.data(), q)?;
    let (mut dv, _) = models.d.score_backward(&c_f, &column(g_f))?;

    // semantic inference on the synthetic rows
    let (r_fake, r_cache) = models.r.forward(&v_fake)?;
    let mut l_in = T::zero();
    let mut dr = Matrix::zeros(r_fake.rows(), r_fake.cols());
    let mut kept_total = 0usize;
    let mut degenerate = 0usize;
    for (c, &cat) in batch.matched.iter().enumerate() {
        let rows: Vec<usize> = (c * q..(c + 1) * q).collect();
        let group = r_fake.select_rows(&rows);
        let e_c = embeddings.row(cat);
        let own;
        let keep: &[usize] = match kept {
            Some(k) => k.get(c).ok_or_else(|| Error::Contract("kept sets must cover every condition".into()))?,
            None => {
                let f = filter_outliers(e_c, &group, cfg.mu)?;
                degenerate += f.degenerate.len();
                own = f.kept;
                &own
            }
        };
        kept_total += keep.len();
        let (v, g) = inference_loss_grad(e_c, &group, keep)?;
        l_in = l_in + v;
        for (i, &r) in rows.iter().enumerate() {
            for (dst, &src) in dr.row_mut(r).iter_mut().zip(g.row(i)) {
                *dst = src * lambda1 / bt;
            }
        }
    }
    l_in = l_in / bt;

    // feature-level game: R's inferred embedding of a real row should pass as matched
    let mut l_fea = T::zero();
    if cfg.lambda1 > 0.0 {
        dv.add_assign(&models.r.backward(&r_cache, &dr)?)?;
        let (e_real, rc_real) = models.r.forward(&batch.features)?;
        let (a_ri, c_ri) = models.d.score_logits(&batch.features, &e_real)?;
        let (fea, g_ri) = neg_log_mean_sigmoid(a_ri.data(), 1)?;
        let (_, de) = models.d.score_backward(&c_ri, &scaled(&column(g_ri), lambda1))?;
        models.r.backward(&rc_real, &de)?;
        l_fea = fea;
    }

    let mut l_co = T::zero();
    let mut l_cat = T::zero();
    if cfg.lambda2 > 0.0 || cfg.lambda_cat > 0.0 {
        let (ql, cl, hc) = models.d.head_logits(&v_fake)?;
        let (co, g_co) = correlation_loss_logits(&ql, &fake_cats, &fake_mismatch(batch, q))?;
        let (cat, g_cat) = category_nll_logits(&cl, &fake_cats)?;
        dv.add_assign(&models.d.heads_backward(
            &hc,
            Some(&scaled(&g_co, lambda2)),
            Some(&scaled(&g_cat, lambda_cat)),
        )?)?;
        l_co = co;
        l_cat = cat;
    }
    models.g.backward(&g_cache, &dv)?;

    Ok(GTerms {
        total: adv + lambda1 * (l_in + l_fea) + lambda2 * l_co + lambda_cat * l_cat,
        adv,
        l_in,
        l_co,
        l_cat,
        l_fea,
        kept_fraction: kept_total as f64 / (b * q) as f64,
        degenerate,
    })
}

/// Everything measured during one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub score_r: f64,
    pub score_w: f64,
    pub score_f: f64,
    pub d_loss: f64,
    pub d_adv: f64,
    pub d_l_co: f64,
    pub d_l_cat: f64,
    pub g_loss: f64,
    pub g_adv: f64,
    pub l_in: f64,
    pub g_l_co: f64,
    pub g_l_cat: f64,
    pub l_fea: f64,
    pub kept_fraction: f64,
}

impl StepReport {
    fn terms(&self) -> [(&'static str, f64); 12] {
        [
            ("d_loss", self.d_loss),
            ("d_adv", self.d_adv),
            ("d_l_co", self.d_l_co),
            ("d_l_cat", self.d_l_cat),
            ("g_loss", self.g_loss),
            ("g_adv", self.g_adv),
            ("l_in", self.l_in),
            ("g_l_co", self.g_l_co),
            ("g_l_cat", self.g_l_cat),
            ("l_fea", self.l_fea),
            ("score_r", self.score_r),
            ("score_f", self.score_f),
        ]
    }
}

/// Per-epoch means of the step reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub steps: usize,
    pub score_r: f64,
    pub score_w: f64,
    pub score_f: f64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub l_in: f64,
    pub g_l_co: f64,
    pub d_l_cat: f64,
    pub g_l_cat: f64,
    pub l_fea: f64,
    pub kept_fraction: f64,
}

impl EpochRecord {
    fn from_steps(epoch: usize, lr: f64, steps: &[StepReport]) -> Self {
        let n = steps.len().max(1) as f64;
        let mean = |f: fn(&StepReport) -> f64| steps.iter().map(f).sum::<f64>() / n;
        Self {
            epoch,
            lr,
            steps: steps.len(),
            score_r: mean(|s| s.score_r),
            score_w: mean(|s| s.score_w),
            score_f: mean(|s| s.score_f),
            d_loss: mean(|s| s.d_loss),
            g_loss: mean(|s| s.g_loss),
            l_in: mean(|s| s.l_in),
            g_l_co: mean(|s| s.g_l_co),
            d_l_cat: mean(|s| s.d_l_cat),
            g_l_cat: mean(|s| s.g_l_cat),
            l_fea: mean(|s| s.l_fea),
            kept_fraction: mean(|s| s.kept_fraction),
        }
    }
}

const TRAIN_STREAM: u64 = 20;

/// Models, optimizer moments, counters and the sampling stream.
#[derive(Debug, Clone)]
pub struct TrainState<T: Real> {
    pub models: ModelTriplet<T>,
    pub adam_g: AdamState<T>,
    pub adam_r: AdamState<T>,
    pub adam_d: AdamState<T>,
    pub epoch: usize,
    pub step: u64,
    pub rng: RngStream,
    pub cfg: TrainConfig,
    pub history: Vec<EpochRecord>,
}

impl<T: Real> TrainState<T> {
    pub fn new(cfg: TrainConfig, dims: ModelDims) -> Result<Self> {
        cfg.validate()?;
        let models = ModelTriplet::new(dims, cfg.seed)?;
        Ok(Self::from_models(cfg, models))
    }

    pub fn for_set(cfg: TrainConfig, set: &TrainingSet<T>) -> Result<Self> {
        let dims = cfg.model_dims(set.features.cols(), set.embeddings.cols(), set.num_seen());
        Self::new(cfg, dims)
    }

    fn from_models(cfg: TrainConfig, models: ModelTriplet<T>) -> Self {
        let adam = cfg.adam();
        Self {
            adam_g: AdamState::new(models.g.store(), adam),
            adam_r: AdamState::new(models.r.store(), adam),
            adam_d: AdamState::new(models.d.store(), adam),
            models,
            epoch: 0,
            step: 0,
            rng: RngStream::new(cfg.seed, TRAIN_STREAM),
            cfg,
            history: Vec::new(),
        }
    }

    fn zero_grads(&mut self) {
        self.models.g.store_mut().zero_grads();
        self.models.r.store_mut().zero_grads();
        self.models.d.store_mut().zero_grads();
    }

    fn ensure_finite(&self, what: &str) -> Result<()> {
        for s in self.models.stores() {
            if !s.is_finite() {
                return Err(Error::Diverged {
                    step: self.step,
                    detail: format!("non-finite parameters after the {what} update"),
                });
            }
        }
        Ok(())
    }
}

/// Discriminator half of a step: one Adam update of `D` only.
pub fn d_update<T: Real>(
    state: &mut TrainState<T>,
    embeddings: &Matrix<T>,
    batch: &Batch<T>,
    noise: &Matrix<T>,
    lr: f64,
) -> Result<DTerms<T>> {
    state.zero_grads();
    let cfg = state.cfg.clone();
    let terms = d_objective(&mut state.models, &cfg, embeddings, batch, noise)?;
    if !terms.total.is_finite() {
        return Err(Error::Diverged {
            step: state.step,
            detail: format!(
                "discriminator loss {} (adv {}, l_co {}, l_cat {})",
                terms.total, terms.adv, terms.l_co, terms.l_cat
            ),
        });
    }
    adam_step(state.models.d.store_mut(), &mut state.adam_d, lr)?;
    state.ensure_finite("discriminator")?;
    Ok(terms)
}

/// Generator half of a step: one Adam update of `G` and `R`; `D` is untouched.
pub fn g_update<T: Real>(
    state: &mut TrainState<T>,
    embeddings: &Matrix<T>,
    batch: &Batch<T>,
    noise: &Matrix<T>,
    lr: f64,
) -> Result<GTerms<T>> {
    state.zero_grads();
    let cfg = state.cfg.clone();
    let terms = g_objective(&mut state.models, &cfg, embeddings, batch, noise, None)?;
    if !terms.total.is_finite() {
        return Err(Error::Diverged {
            step: state.step,
            detail: format!(
                "generator loss {} (adv {}, l_in {}, l_co {}, l_cat {}, l_fea {})",
                terms.total, terms.adv, terms.l_in, terms.l_co, terms.l_cat, terms.l_fea
            ),
        });
    }
    state.models.d.store_mut().zero_grads();
    adam_step(state.models.g.store_mut(), &mut state.adam_g, lr)?;
    adam_step(state.models.r.store_mut(), &mut state.adam_r, lr)?;
    state.ensure_finite("generator")?;
    Ok(terms)
}

/// One full step with explicit noise (`batch.len() * q` rows).
pub fn train_step_with_noise<T: Real>(
    state: &mut TrainState<T>,
    embeddings: &Matrix<T>,
    batch: &Batch<T>,
    noise: &Matrix<T>,
    lr: f64,
) -> Result<StepReport> {
    let d = d_update(state, embeddings, batch, noise, lr)?;
    let g = g_update(state, embeddings, batch, noise, lr)?;
    let f = |x: T| x.to_f64_lossy();
    let report = StepReport {
        step: state.step,
        epoch: state.epoch,
        lr,
        score_r: d.scores.score_r,
        score_w: d.scores.score_w,
        score_f: d.scores.score_f,
        d_loss: f(d.total),
        d_adv: f(d.adv),
        d_l_co: f(d.l_co),
        d_l_cat: f(d.l_cat),
        g_loss: f(g.total),
        g_adv: f(g.adv),
        l_in: f(g.l_in),
        g_l_co: f(g.l_co),
        g_l_cat: f(g.l_cat),
        l_fea: f(g.l_fea),
        kept_fraction: g.kept_fraction,
    };
    if let Some((name, v)) = report.terms().into_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Diverged {
            step: state.step,
            detail: format!("{name} = {v}; report {report:?}"),
        });
    }
    state.step += 1;
    Ok(report)
}

/// One full step; noise comes from the state's stream.
pub fn train_step<T: Real>(state: &mut TrainState<T>, set: &TrainingSet<T>, batch: &Batch<T>, lr: f64) -> Result<StepReport> {
    let noise = state
        .rng
        .normal_matrix(batch.len() * state.cfg.noise_set_size, state.cfg.z_dim);
    train_step_with_noise(state, &set.embeddings, batch, &noise, lr)
}

/// Mismatched draws per real row, capped by the number of other seen categories.
pub fn effective_mismatch(cfg: &TrainConfig, num_seen: usize) -> Result<usize> {
    if num_seen < 2 {
        return Err(Error::Config(format!(
            "matching-aware training needs at least 2 seen categories, got {num_seen}"
        )));
    }
    Ok(cfg.mismatch_set_size.min(num_seen - 1))
}

/// Runs epochs from `state.epoch` up to `cfg.epochs`, appending one
/// [`EpochRecord`] per epoch. `on_epoch` runs after every completed epoch,
/// e.g. to checkpoint or stream telemetry.
pub fn train<T: Real>(
    state: &mut TrainState<T>,
    set: &TrainingSet<T>,
    mut on_epoch: impl FnMut(&TrainState<T>) -> Result<()>,
) -> Result<()> {
    let k = effective_mismatch(&state.cfg, set.num_seen())?;
    if set.embeddings.cols() != state.models.dims.d_e || set.features.cols() != state.models.dims.d_v {
        return Err(Error::Contract("training set dims differ from the models".into()));
    }
    let schedule = state.cfg.schedule();
    let cap = state.cfg.max_steps.unwrap_or(u64::MAX);
    while state.epoch < state.cfg.epochs && state.step < cap {
        let lr = schedule.at(state.epoch);
        let mut order: Vec<usize> = (0..set.len()).collect();
        state.rng.shuffle(&mut order);
        let mut reports = Vec::new();
        for rows in order.chunks(state.cfg.batch_size) {
            if state.step >= cap {
                break;
            }
            let batch = Batch::sample(set, rows, k, &mut state.rng)?;
            reports.push(train_step(state, set, &batch, lr)?);
        }
        state.history.push(EpochRecord::from_steps(state.epoch, lr, &reports));
        state.epoch += 1;
        on_epoch(state)?;
    }
    Ok(())
}

/// `true` when the epoch just completed should be checkpointed.
pub fn checkpoint_due(cfg: &TrainConfig, epoch_done: usize) -> bool {
    cfg.checkpoint_every > 0 && epoch_done % cfg.checkpoint_every == 0
}
