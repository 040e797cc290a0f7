// Reference computations written independently of the library, shared by the
// core integration tests and the acceptance target.
#![allow(dead_code)]

use zsgan_core::data::{generate_synthetic, GroundTruthMap, SyntheticSpec};
use zsgan_core::eval::{accuracy, ridge_baseline, SvmModel};
use zsgan_core::losses::{
    exact_discrete_mi, filter_outliers, mi_via_x_entropy, mi_via_y_entropy, variational_mi_lb, variational_mi_lb_weighted,
};
use zsgan_numeric::{Matrix, RngStream};

// ---- outlier filter ----

pub struct FilterInstance {
    pub e: Vec<f64>,
    pub r: Matrix<f64>,
    pub mu: f64,
}

/// d_e in [2, 16], |R| in [2, 30], mu in [0, 2]. Some instances carry
/// duplicated rows, rows parallel to `e`, or boundary values of mu.
pub fn filter_instance(seed: u64) -> FilterInstance {
    let mut rng = RngStream::new(seed, 11);
    let d = 2 + rng.below(15);
    let n = 2 + rng.below(29);
    let e: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let mut r: Matrix<f64> = rng.normal_matrix(n, d);
    match rng.below(6) {
        0 => {
            let src = r.row(0).to_vec();
            r.row_mut(n - 1).copy_from_slice(&src);
        }
        1 => {
            let s = rng.uniform_range(0.1, 3.0);
            let row: Vec<f64> = e.iter().map(|x| x * s).collect();
            r.row_mut(rng.below(n)).copy_from_slice(&row);
        }
        _ => {}
    }
    let mu = match rng.below(8) {
        0 => 0.0,
        1 => 1.0,
        2 => 2.0,
        _ => rng.uniform_range(0.0, 2.0),
    };
    FilterInstance { e, r, mu }
}

pub struct BruteFilter {
    pub cosines: Vec<f64>,
    pub delta: f64,
    pub eta: f64,
    pub kept: Vec<usize>,
    pub discarded: Vec<usize>,
}

/// Cosines to `e`, range, threshold `max - mu * range`, keep at or above it.
pub fn brute_force_filter(e: &[f64], r: &Matrix<f64>, mu: f64) -> BruteFilter {
    let mut ee = 0.0;
    for x in e {
        ee += x * x;
    }
    let mut cosines = Vec::new();
    for i in 0..r.rows() {
        let (mut dot, mut rr) = (0.0, 0.0);
        for j in 0..e.len() {
            dot += e[j] * r.get(i, j);
        }
        for j in 0..e.len() {
            rr += r.get(i, j) * r.get(i, j);
        }
        cosines.push(dot / (ee.sqrt() * rr.sqrt()));
    }
    let mut max = cosines[0];
    let mut min = cosines[0];
    for &c in &cosines[1..] {
        if c > max {
            max = c;
        }
        if c < min {
            min = c;
        }
    }
    let delta = max - min;
    let eta = max - mu * delta;
    let mut kept = Vec::new();
    let mut discarded = Vec::new();
    for (i, &c) in cosines.iter().enumerate() {
        if c >= eta {
            kept.push(i);
        } else {
            discarded.push(i);
        }
    }
    BruteFilter {
        cosines,
        delta,
        eta,
        kept,
        discarded,
    }
}

/// Runs the library filter against the brute force on `n` instances and
/// returns a description of every disagreement.
pub fn filter_disagreements(n: u64) -> Vec<String> {
    let mut out = Vec::new();
    for seed in 0..n {
        let inst = filter_instance(seed);
        let want = brute_force_filter(&inst.e, &inst.r, inst.mu);
        let got = match filter_outliers(&inst.e, &inst.r, inst.mu) {
            Ok(g) => g,
            Err(err) => {
                out.push(format!("instance {seed}: {err}"));
                continue;
            }
        };
        let same_bits = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        if !same_bits(&got.cosines, &want.cosines) {
            out.push(format!("instance {seed}: cosines differ"));
        }
        if got.delta.to_bits() != want.delta.to_bits() || got.eta.to_bits() != want.eta.to_bits() {
            out.push(format!("instance {seed}: delta/eta {} {} vs {} {}", got.delta, got.eta, want.delta, want.eta));
        }
        if got.kept != want.kept || got.discarded != want.discarded {
            out.push(format!("instance {seed}: kept {:?} vs {:?}", got.kept, want.kept));
        }
        if !got.degenerate.is_empty() {
            out.push(format!("instance {seed}: unexpected degenerate rows"));
        }
    }
    out
}

// ---- mutual information ----

/// Integer cell counts of a random table of at most 5 x 5, rows indexing `x`.
/// About a third of the cells are empty.
pub fn count_table(seed: u64) -> Vec<Vec<u32>> {
    let mut rng = RngStream::new(seed, 12);
    let nx = 1 + rng.below(5);
    let ny = 1 + rng.below(5);
    loop {
        let t: Vec<Vec<u32>> = (0..nx)
            .map(|_| {
                (0..ny)
                    .map(|_| if rng.uniform() < 0.33 { 0 } else { 1 + rng.below(9) as u32 })
                    .collect()
            })
            .collect();
        if t.iter().flatten().any(|&c| c > 0) {
            return t;
        }
    }
}

fn plogp_sum(ps: impl Iterator<Item = f64>) -> f64 {
    ps.filter(|&p| p > 0.0).map(|p| p * p.ln()).sum()
}

pub struct MiSummary {
    pub tables: usize,
    /// Largest `LB - MI` over all random posteriors; must stay <= 1e-9.
    pub worst_bound_excess: f64,
    /// Largest `|LB - MI|` with the true posterior.
    pub worst_equality_gap: f64,
    /// Largest disagreement among the MI forms and the direct sum.
    pub worst_dual_gap: f64,
    pub errors: Vec<String>,
}

impl MiSummary {
    pub fn passed(&self) -> bool {
        self.errors.is_empty()
            && self.worst_bound_excess <= 1e-9
            && self.worst_equality_gap <= 1e-9
            && self.worst_dual_gap <= 1e-12
    }
}

/// Bound, tightness and dual-form agreement over `n` random tables. Each
/// table is checked with several random posteriors `Q(x | y)` and the true
/// one, through both the sample-mean and weighted forms of the bound.
pub fn mi_checks(n: u64) -> MiSummary {
    let mut s = MiSummary {
        tables: 0,
        worst_bound_excess: f64::NEG_INFINITY,
        worst_equality_gap: 0.0,
        worst_dual_gap: 0.0,
        errors: Vec::new(),
    };
    for seed in 0..n {
        let counts = count_table(seed);
        let (nx, ny) = (counts.len(), counts[0].len());
        let total: u32 = counts.iter().flatten().sum();
        let p: Vec<Vec<f64>> = counts
            .iter()
            .map(|r| r.iter().map(|&c| c as f64 / total as f64).collect())
            .collect();
        let px: Vec<f64> = p.iter().map(|r| r.iter().sum()).collect();
        let py: Vec<f64> = (0..ny).map(|j| p.iter().map(|r| r[j]).sum()).collect();
        let h_x = -plogp_sum(px.iter().copied());
        let direct = plogp_sum(p.iter().flatten().copied()) - plogp_sum(px.iter().copied()) - plogp_sum(py.iter().copied());

        let joint = Matrix::from_rows(&p).expect("rectangular table");
        let forms = [exact_discrete_mi(&joint), mi_via_x_entropy(&joint), mi_via_y_entropy(&joint)];
        let mut vals = Vec::new();
        for f in forms {
            match f {
                Ok(v) => vals.push(v),
                Err(err) => s.errors.push(format!("table {seed}: {err}")),
            }
        }
        if vals.len() < 3 {
            continue;
        }
        let mi = vals[0];
        for v in &vals {
            s.worst_dual_gap = s.worst_dual_gap.max((v - mi).abs()).max((v - direct).abs());
        }

        let mut rng = RngStream::new(seed, 13);
        let mut posteriors: Vec<Vec<Vec<f64>>> = (0..5)
            .map(|_| {
                (0..ny)
                    .map(|_| {
                        let w: Vec<f64> = (0..nx).map(|_| rng.uniform_range(0.01, 1.0)).collect();
                        let z: f64 = w.iter().sum();
                        w.into_iter().map(|x| x / z).collect()
                    })
                    .collect()
            })
            .collect();
        let truth: Vec<Vec<f64>> = (0..ny)
            .map(|j| {
                if py[j] > 0.0 {
                    (0..nx).map(|i| counts[i][j] as f64 / (0..nx).map(|k| counts[k][j] as f64).sum::<f64>()).collect()
                } else {
                    vec![1.0 / nx as f64; nx]
                }
            })
            .collect();
        posteriors.push(truth);

        for (qi, q) in posteriors.iter().enumerate() {
            let is_truth = qi + 1 == posteriors.len();
            // one sample row per observation
            let mut rows = Vec::new();
            let mut targets = Vec::new();
            // one weighted row per non-empty cell
            let mut wrows = Vec::new();
            let mut wtargets = Vec::new();
            let mut weights = Vec::new();
            for i in 0..nx {
                for j in 0..ny {
                    for _ in 0..counts[i][j] {
                        rows.push(q[j].clone());
                        targets.push(i);
                    }
                    if counts[i][j] > 0 {
                        wrows.push(q[j].clone());
                        wtargets.push(i);
                        weights.push(p[i][j]);
                    }
                }
            }
            let sample = variational_mi_lb(&Matrix::from_rows(&rows).unwrap(), &targets, h_x);
            let weighted = variational_mi_lb_weighted(&Matrix::from_rows(&wrows).unwrap(), &wtargets, &weights, h_x);
            for lb in [sample, weighted] {
                match lb {
                    Ok(lb) => {
                        s.worst_bound_excess = s.worst_bound_excess.max(lb - mi);
                        if is_truth {
                            s.worst_equality_gap = s.worst_equality_gap.max((lb - mi).abs());
                        }
                    }
                    Err(err) => s.errors.push(format!("table {seed}: {err}")),
                }
            }
        }
        s.tables += 1;
    }
    s
}

// ---- SVM ----

pub struct SvmAudit {
    pub box_violation: f64,
    pub equality_violation: f64,
    /// Largest KKT violation measured on decision values of the training rows.
    pub kkt: f64,
    /// Largest gap between the recomputed and reported decision values.
    pub decision_gap: f64,
    pub degree: i32,
}

/// Recomputes every one-vs-rest decision function from the dual solution and
/// checks the box, equality and complementary-slackness conditions.
pub fn audit_svm(model: &SvmModel, x: &Matrix<f32>, labels: &[usize]) -> SvmAudit {
    let k = model.kernel();
    let c = model.penalty();
    let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    let kern = |a: &[f64], b: &[f64]| {
        let mut dot = 0.0;
        for (u, v) in a.iter().zip(b) {
            dot += u * v;
        }
        let base = k.gamma * dot + k.coef0;
        let mut out = 1.0;
        for _ in 0..k.degree {
            out *= base;
        }
        out
    };
    let reported = model.decision_values(x).expect("decision values");
    let mut a = SvmAudit {
        box_violation: 0.0,
        equality_violation: 0.0,
        kkt: 0.0,
        decision_gap: 0.0,
        degree: k.degree,
    };
    for (m, &class) in model.classes().iter().enumerate() {
        let (alpha, y, rho) = model.dual_solution(m).expect("one machine per class");
        for (i, &l) in labels.iter().enumerate() {
            let want = if l == class { 1.0 } else { -1.0 };
            if y[i] != want {
                a.box_violation = f64::INFINITY;
            }
        }
        let mut sum_ay = 0.0;
        for i in 0..alpha.len() {
            a.box_violation = a.box_violation.max(-alpha[i]).max(alpha[i] - c);
            sum_ay += alpha[i] * y[i];
        }
        a.equality_violation = a.equality_violation.max(sum_ay.abs());
        for i in 0..rows.len() {
            let mut f = -rho;
            for j in 0..rows.len() {
                f += alpha[j] * y[j] * kern(&rows[j], &rows[i]);
            }
            a.decision_gap = a.decision_gap.max((f - reported.get(i, m)).abs());
            let margin = y[i] * f;
            let v = if alpha[i] <= 1e-12 * c {
                (1.0 - margin).max(0.0)
            } else if alpha[i] >= c * (1.0 - 1e-12) {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            };
            a.kkt = a.kkt.max(v);
        }
    }
    a
}

/// Three well separated Gaussian blobs labelled 1, 3 and 5.
pub fn svm_blobs() -> (Matrix<f32>, Vec<usize>) {
    let mut rng = RngStream::new(1, 0);
    let centers = [[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, ctr) in centers.iter().enumerate() {
        for _ in 0..15 {
            rows.push(vec![(ctr[0] + 0.5 * rng.normal()) as f32, (ctr[1] + 0.5 * rng.normal()) as f32]);
            labels.push(c * 2 + 1);
        }
    }
    (Matrix::from_rows(&rows).unwrap(), labels)
}

/// Jittered XOR corners; label 1 where the coordinates differ in sign.
pub fn svm_xor() -> (Matrix<f32>, Vec<usize>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut rng = RngStream::new(2, 0);
    for _ in 0..10 {
        for (sx, sy) in [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
            rows.push(vec![(sx + 0.1 * rng.normal()) as f32, (sy + 0.1 * rng.normal()) as f32]);
            labels.push(usize::from(sx * sy < 0.0));
        }
    }
    (Matrix::from_rows(&rows).unwrap(), labels)
}

// ---- ridge ----

/// Fits the ridge baseline on the seen half of a noiseless linear benchmark.
pub fn ridge_recovery() -> (f64, f64) {
    let spec = SyntheticSpec {
        num_categories: 20,
        samples_per_category: 10,
        noise_scale: 0.0,
        seed: 4,
        ..Default::default()
    };
    let (ds, table, map) = generate_synthetic(&spec).unwrap();
    let GroundTruthMap::Linear { weight } = &map else { unreachable!() };
    let seen: Vec<usize> = (0..10).collect();
    let unseen: Vec<usize> = (10..20).collect();
    let rows = ds.rows_in(&seen);
    let feats = ds.features().select_rows(&rows);
    let row_emb = table.embeddings().select_rows(&rows.iter().map(|&r| ds.labels()[r]).collect::<Vec<_>>());
    let fit = ridge_baseline(&feats, &row_emb, &table.rows_for(&unseen), &unseen, 1e-9).unwrap();
    let err = fit
        .weight
        .data()
        .iter()
        .zip(weight.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let test = ds.rows_in(&unseen);
    let pred = fit.classify(&ds.features().select_rows(&test)).unwrap();
    let truth: Vec<usize> = test.iter().map(|&r| ds.labels()[r]).collect();
    (err, accuracy(&pred, &truth))
}
