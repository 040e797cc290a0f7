//! Training objectives: the adaptive outlier filter and inference loss, the
//! variational mutual-information bound and correlation loss, category
//! likelihood, and the adversarial terms.
//!
//! Scalar reference forms work on probabilities in `f64`. The `*_logits`
//! forms are what training differentiates; they share the same clamping.

use zsgan_numeric::{logsumexp, sigmoid, softplus, Matrix, Real};

use crate::config::TrainConfig;
use crate::error::{Error, Result};

/// Probability floor applied before every log.
pub const PROB_FLOOR: f64 = 1e-7;

pub fn log_floor() -> f64 {
    PROB_FLOOR.ln()
}

fn clamp_score(s: f64) -> f64 {
    s.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Result of filtering one noise group's inferred embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierFilterResult {
    pub cosines: Vec<f64>,
    /// `max - min` of the cosines.
    pub delta: f64,
    /// Keep threshold `max - mu * delta`.
    pub eta: f64,
    pub kept: Vec<usize>,
    pub discarded: Vec<usize>,
    /// Rows that were all zeros; their cosine is taken as -1.
    pub degenerate: Vec<usize>,
}

fn norm(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn filter_outliers<T: Real>(e_c: &[T], r_set: &Matrix<T>, mu: f64) -> Result<OutlierFilterResult> {
    if r_set.rows() < 2 {
        return Err(Error::Contract(format!(
            "outlier filter needs at least 2 inferred vectors, got {}",
            r_set.rows()
        )));
    }
    if r_set.cols() != e_c.len() {
        return Err(Error::Contract(format!(
            "inferred vectors have {} dims, embedding has {}",
            r_set.cols(),
            e_c.len()
        )));
    }
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Config(format!("mu must be finite and >= 0, got {mu}")));
    }
    let e: Vec<f64> = e_c.iter().map(|x| x.to_f64_lossy()).collect();
    let ne = norm(&e);
    if ne == 0.0 {
        return Err(Error::Contract("class embedding is all zeros".into()));
    }
    let mut cosines = Vec::with_capacity(r_set.rows());
    let mut degenerate = Vec::new();
    for (i, row) in r_set.row_iter().enumerate() {
        let r: Vec<f64> = row.iter().map(|x| x.to_f64_lossy()).collect();
        let nr = norm(&r);
        if nr == 0.0 {
            degenerate.push(i);
            cosines.push(-1.0);
        } else {
            let dot: f64 = e.iter().zip(&r).map(|(a, b)| a * b).sum();
            cosines.push(dot / (ne * nr));
        }
    }
    let max = cosines.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = cosines.iter().copied().fold(f64::INFINITY, f64::min);
    let delta = max - min;
    let eta = max - mu * delta;
    let (kept, discarded) = (0..cosines.len()).partition(|&i| cosines[i] >= eta);
    Ok(OutlierFilterResult {
        cosines,
        delta,
        eta,
        kept,
        discarded,
        degenerate,
    })
}

/// Negative sum of the kept cosines.
pub fn inference_loss<T: Real>(e_c: &[T], r_set: &Matrix<T>, mu: f64) -> Result<f64> {
    let f = filter_outliers(e_c, r_set, mu)?;
    Ok(-f.kept.iter().map(|&i| f.cosines[i]).sum::<f64>())
}

/// `-sum_{i in kept} cos(e_c, r_i)` and its gradient with respect to every
/// row of `r_set`; discarded and all-zero rows get zero gradient.
pub fn inference_loss_grad<T: Real>(e_c: &[T], r_set: &Matrix<T>, kept: &[usize]) -> Result<(T, Matrix<T>)> {
    if r_set.cols() != e_c.len() {
        return Err(Error::Contract("inferred vector and embedding dims differ".into()));
    }
    let ne = e_c.iter().map(|&x| x * x).sum::<T>().sqrt();
    if ne == T::zero() {
        return Err(Error::Contract("class embedding is all zeros".into()));
    }
    let mut loss = T::zero();
    let mut grad = Matrix::zeros(r_set.rows(), r_set.cols());
    for &i in kept {
        let r = r_set.row(i);
        let nr = r.iter().map(|&x| x * x).sum::<T>().sqrt();
        if nr == T::zero() {
            loss = loss + T::one();
            continue;
        }
        let dot = e_c.iter().zip(r).map(|(&a, &b)| a * b).sum::<T>();
        let cos = dot / (ne * nr);
        loss = loss - cos;
        // d cos / d r = e / (|e||r|) - cos * r / |r|^2
        for ((g, &ej), &rj) in grad.row_mut(i).iter_mut().zip(e_c).zip(r) {
            *g = *g - (ej / (ne * nr) - cos * rj / (nr * nr));
        }
    }
    Ok((loss, grad))
}

fn check_targets(cols: usize, targets: &[usize], what: &str) -> Result<()> {
    if let Some(&t) = targets.iter().find(|&&t| t >= cols) {
        return Err(Error::Contract(format!("{what} index {t} out of range for {cols} categories")));
    }
    Ok(())
}

fn check_distribution_rows(p: &Matrix<f64>) -> Result<()> {
    for (i, r) in p.row_iter().enumerate() {
        let s: f64 = r.iter().sum();
        if r.iter().any(|&x| !(x >= 0.0)) || (s - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!("row {i} is not a probability distribution")));
        }
    }
    Ok(())
}

/// `E[log Q(target | x)] + H` over rows with the given weights (summing to 1).
pub fn variational_mi_lb_weighted(
    q_post: &Matrix<f64>,
    targets: &[usize],
    weights: &[f64],
    prior_entropy: f64,
) -> Result<f64> {
    if targets.len() != q_post.rows() || weights.len() != q_post.rows() {
        return Err(Error::Contract("one target and weight per posterior row required".into()));
    }
    check_targets(q_post.cols(), targets, "target")?;
    check_distribution_rows(q_post)?;
    let floor = log_floor();
    let e: f64 = targets
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(i, (&t, &w))| w * q_post.get(i, t).ln().max(floor))
        .sum();
    Ok(e + prior_entropy)
}

/// Mean clamped log-probability of each row's target plus `prior_entropy`.
pub fn variational_mi_lb(q_post: &Matrix<f64>, targets: &[usize], prior_entropy: f64) -> Result<f64> {
    if q_post.rows() == 0 {
        return Err(Error::Contract("empty posterior batch".into()));
    }
    let w = vec![1.0 / q_post.rows() as f64; q_post.rows()];
    variational_mi_lb_weighted(q_post, targets, &w, prior_entropy)
}

fn check_pairs(matched: &[usize], mismatched: &[usize], rows: usize) -> Result<()> {
    if matched.len() != rows || mismatched.len() != rows {
        return Err(Error::Contract("one matched and one mismatched index per row required".into()));
    }
    if let Some(i) = (0..rows).find(|&i| matched[i] == mismatched[i]) {
        return Err(Error::Contract(format!(
            "row {i}: mismatched index equals matched index {}",
            matched[i]
        )));
    }
    Ok(())
}

/// `-LB(matched) + LB(mismatched)`; the prior entropy cancels.
pub fn correlation_loss(
    q_post_on_fake: &Matrix<f64>,
    matched: &[usize],
    mismatched: &[usize],
    prior_entropy: f64,
) -> Result<f64> {
    check_pairs(matched, mismatched, q_post_on_fake.rows())?;
    let mat = variational_mi_lb(q_post_on_fake, matched, prior_entropy)?;
    let mis = variational_mi_lb(q_post_on_fake, mismatched, prior_entropy)?;
    Ok(mis - mat)
}

/// Negative mean clamped log-likelihood over real rows plus the same over
/// synthetic rows. An empty side contributes zero.
pub fn category_loss(
    cat_post_real: &Matrix<f64>,
    cat_post_fake: &Matrix<f64>,
    labels_real: &[usize],
    labels_fake: &[usize],
) -> Result<f64> {
    let nll = |p: &Matrix<f64>, labels: &[usize]| -> Result<f64> {
        if labels.len() != p.rows() {
            return Err(Error::Contract("one label per posterior row required".into()));
        }
        if labels.is_empty() {
            return Ok(0.0);
        }
        Ok(-variational_mi_lb(p, labels, 0.0)?)
    };
    Ok(nll(cat_post_real, labels_real)? + nll(cat_post_fake, labels_fake)?)
}

/// Clamped `log softmax(logits)[target]` per row, with its gradient rows.
fn clamped_log_probs<T: Real>(logits: &Matrix<T>, targets: &[usize]) -> Result<(Vec<T>, Matrix<T>)> {
    if targets.len() != logits.rows() {
        return Err(Error::Contract("one target per logit row required".into()));
    }
    check_targets(logits.cols(), targets, "target")?;
    let floor = T::from_f64_lossy(log_floor());
    let mut lps = Vec::with_capacity(targets.len());
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for (i, &t) in targets.iter().enumerate() {
        let row = logits.row(i);
        let lse = logsumexp(row);
        let lp = row[t] - lse;
        if lp < floor {
            lps.push(floor);
            continue;
        }
        lps.push(lp);
        for (j, (g, &z)) in grad.row_mut(i).iter_mut().zip(row).enumerate() {
            let p = (z - lse).exp();
            *g = if j == t { T::one() - p } else { -p };
        }
    }
    Ok((lps, grad))
}

/// Mean `-log Q(target)` from logits, and its gradient.
pub fn category_nll_logits<T: Real>(logits: &Matrix<T>, labels: &[usize]) -> Result<(T, Matrix<T>)> {
    if labels.is_empty() {
        return Ok((T::zero(), Matrix::zeros(0, logits.cols())));
    }
    let (lps, mut g) = clamped_log_probs(logits, labels)?;
    let n = T::from_usize(labels.len()).expect("row count fits");
    g.scale_in_place(-T::one() / n);
    Ok((-lps.into_iter().sum::<T>() / n, g))
}

/// `mean log Q(mismatched) - mean log Q(matched)` from logits, and its gradient.
pub fn correlation_loss_logits<T: Real>(
    logits: &Matrix<T>,
    matched: &[usize],
    mismatched: &[usize],
) -> Result<(T, Matrix<T>)> {
    check_pairs(matched, mismatched, logits.rows())?;
    if logits.rows() == 0 {
        return Err(Error::Contract("empty posterior batch".into()));
    }
    let n = T::from_usize(logits.rows()).expect("row count fits");
    let (lp_mat, g_mat) = clamped_log_probs(logits, matched)?;
    let (lp_mis, mut g) = clamped_log_probs(logits, mismatched)?;
    let value = (lp_mis.into_iter().sum::<T>() - lp_mat.into_iter().sum::<T>()) / n;
    for (a, &b) in g.data_mut().iter_mut().zip(g_mat.data()) {
        *a = (*a - b) / n;
    }
    Ok((value, g))
}

/// Discriminator confidences averaged over their input sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreTriple {
    /// Real feature with matched embedding.
    pub score_r: f64,
    /// Real feature with mismatched embeddings.
    pub score_w: f64,
    /// Synthetic feature with matched embedding.
    pub score_f: f64,
}

impl ScoreTriple {
    pub fn new(score_r: f64, score_w: f64, score_f: f64) -> Result<Self> {
        for s in [score_r, score_w, score_f] {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::Contract(format!("score {s} outside (0, 1)")));
            }
        }
        Ok(Self {
            score_r,
            score_w,
            score_f,
        })
    }
}

/// `-log S_r - [log(1 - S_w) + log(1 - S_f)] / 2 + lambda2 * l_co + lambda_cat * l_cat`.
pub fn d_loss(scores: &ScoreTriple, l_co: f64, l_cat: f64, cfg: &TrainConfig) -> f64 {
    let r = clamp_score(scores.score_r);
    let w = clamp_score(scores.score_w);
    let f = clamp_score(scores.score_f);
    -r.ln() - 0.5 * ((1.0 - w).ln() + (1.0 - f).ln()) + cfg.lambda2 * l_co + cfg.lambda_cat * l_cat
}

/// `-log S_f + lambda1 * l_in + lambda2 * l_co + lambda_cat * l_cat_fake`.
pub fn g_loss(score_f: f64, l_in: f64, l_co: f64, l_cat_fake: f64, cfg: &TrainConfig) -> f64 {
    -clamp_score(score_f).ln() + cfg.lambda1 * l_in + cfg.lambda2 * l_co + cfg.lambda_cat * l_cat_fake
}

/// Feature-level game: `D` sees real features with inferred embeddings as
/// real and synthetic features with true embeddings as fake.
/// Returns `(d_part, g_part)`.
pub fn adversarial_feature_loss(score_real_inferred: f64, score_fake: f64) -> (f64, f64) {
    let ri = clamp_score(score_real_inferred);
    let f = clamp_score(score_fake);
    (-(ri.ln() + (1.0 - f).ln()), -f.ln())
}

fn group_count<T: Real>(logits: &[T], group: usize) -> Result<T> {
    if group == 0 || logits.is_empty() || logits.len() % group != 0 {
        return Err(Error::Contract(format!(
            "{} logits do not form groups of {group}",
            logits.len()
        )));
    }
    Ok(T::from_usize(logits.len() / group).expect("group count fits"))
}

/// Mean over consecutive groups of `-log(mean_j sigmoid(a_j))`, with gradient.
pub fn neg_log_mean_sigmoid<T: Real>(logits: &[T], group: usize) -> Result<(T, Vec<T>)> {
    let n = group_count(logits, group)?;
    let ln_g = T::from_usize(group).expect("group fits").ln();
    let mut value = T::zero();
    let mut grad = vec![T::zero(); logits.len()];
    for (a, g) in logits.chunks(group).zip(grad.chunks_mut(group)) {
        let ls: Vec<T> = a.iter().map(|&x| -softplus(-x)).collect();
        let lse = logsumexp(&ls);
        value = value - (lse - ln_g);
        for ((gj, &lj), &aj) in g.iter_mut().zip(&ls).zip(a) {
            *gj = -(lj - lse).exp() * sigmoid(-aj) / n;
        }
    }
    Ok((value / n, grad))
}

/// Mean over consecutive groups of `-log(mean_j (1 - sigmoid(a_j)))`, with gradient.
pub fn neg_log_mean_one_minus_sigmoid<T: Real>(logits: &[T], group: usize) -> Result<(T, Vec<T>)> {
    let neg: Vec<T> = logits.iter().map(|&x| -x).collect();
    let (v, g) = neg_log_mean_sigmoid(&neg, group)?;
    Ok((v, g.into_iter().map(|x| -x).collect()))
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

fn check_joint(joint: &Matrix<f64>) -> Result<()> {
    if joint.data().is_empty() {
        return Err(Error::Contract("empty joint table".into()));
    }
    if joint.data().iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::Contract("joint table has negative or non-finite entries".into()));
    }
    let s: f64 = joint.data().iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!("joint table sums to {s}, not 1")));
    }
    Ok(())
}

/// Marginals `(p(x), p(y))` of a table with `x` along rows.
pub fn marginals(joint: &Matrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let px = joint.row_iter().map(|r| r.iter().sum()).collect();
    let py = (0..joint.cols()).map(|j| (0..joint.rows()).map(|i| joint.get(i, j)).sum()).collect();
    (px, py)
}

/// `I(X;Y) = sum p(x,y) log(p(x,y) / (p(x) p(y)))`, rows indexing `x`.
pub fn exact_discrete_mi(joint: &Matrix<f64>) -> Result<f64> {
    check_joint(joint)?;
    let (px, py) = marginals(joint);
    let mut mi = 0.0;
    for i in 0..joint.rows() {
        for j in 0..joint.cols() {
            let p = joint.get(i, j);
            if p > 0.0 {
                mi += p * (p / (px[i] * py[j])).ln();
            }
        }
    }
    Ok(mi)
}

/// `H(X) - H(X|Y)`.
pub fn mi_via_x_entropy(joint: &Matrix<f64>) -> Result<f64> {
    check_joint(joint)?;
    let (px, py) = marginals(joint);
    let mut h_x_given_y = 0.0;
    for (j, &pyj) in py.iter().enumerate() {
        if pyj > 0.0 {
            let cond: Vec<f64> = (0..joint.rows()).map(|i| joint.get(i, j) / pyj).collect();
            h_x_given_y += pyj * entropy(&cond);
        }
    }
    Ok(entropy(&px) - h_x_given_y)
}

/// `H(Y) - H(Y|X)`.
pub fn mi_via_y_entropy(joint: &Matrix<f64>) -> Result<f64> {
    mi_via_x_entropy(&joint.transpose())
}
