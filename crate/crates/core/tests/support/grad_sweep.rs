//! Finite-difference sweep over every differentiable component on random
//! small shapes.
//!
//! Reference differences are always taken in f64. An f32 check compares the
//! f32 analytic gradient against them at bit-identical parameters, since f32
//! differences themselves are dominated by rounding. A point where central
//! differences at `h` and `h / 10` disagree sits within `h` of a ReLU kink;
//! such a point is redrawn rather than compared.

use zsgan_core::losses::{category_nll_logits, correlation_loss_logits, filter_outliers, inference_loss_grad};
use zsgan_core::models::{ModelDims, ModelTriplet};
use zsgan_core::trainer::{d_objective, g_objective, Batch};
use zsgan_core::TrainConfig;
use zsgan_numeric::{
    analytic_gradient, central_differences, compare_gradients, GradCheckConfig, HasParams, Matrix, NumericError,
    ParamId, ParamStore, Real, RngStream,
};

const MAX_REDRAWS: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn config(self) -> GradCheckConfig {
        match self {
            Precision::F32 => GradCheckConfig::f32_default(),
            Precision::F64 => GradCheckConfig::f64_default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Generator,
    InferenceNet,
    ScoreHead,
    Heads,
    DObjective,
    GObjective,
    InferenceLoss,
    CorrelationLoss,
    CategoryLoss,
}

impl Kind {
    pub const ALL: [Kind; 9] = [
        Kind::Generator,
        Kind::InferenceNet,
        Kind::ScoreHead,
        Kind::Heads,
        Kind::DObjective,
        Kind::GObjective,
        Kind::InferenceLoss,
        Kind::CorrelationLoss,
        Kind::CategoryLoss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Generator => "generator",
            Kind::InferenceNet => "inference net",
            Kind::ScoreHead => "score head",
            Kind::Heads => "q and category heads",
            Kind::DObjective => "discriminator objective",
            Kind::GObjective => "generator objective",
            Kind::InferenceLoss => "inference loss",
            Kind::CorrelationLoss => "correlation loss",
            Kind::CategoryLoss => "category loss",
        }
    }

    /// Which of G, R, D the check perturbs.
    fn nets(self) -> [bool; 3] {
        match self {
            Kind::Generator => [true, false, false],
            Kind::InferenceNet => [false, true, false],
            Kind::ScoreHead | Kind::Heads | Kind::DObjective => [false, false, true],
            Kind::GObjective => [true, true, false],
            _ => [false, false, false],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Shape {
    pub dims: ModelDims,
    pub batch: usize,
    pub q: usize,
    pub k: usize,
    pub mu: f64,
    pub lambdas: [f64; 3],
}

pub fn shape(seed: u64) -> Shape {
    let mut rng = RngStream::new(seed, 1);
    let mut pick = |lo: usize, hi: usize| lo + rng.below(hi - lo + 1);
    let num_seen = pick(2, 4);
    let dims = ModelDims {
        z_dim: pick(1, 4),
        d_e: pick(2, 5),
        d_v: pick(2, 6),
        num_seen,
        g_hidden: pick(2, 6),
        r_hidden: pick(2, 6),
        d_hidden1: pick(2, 6),
        d_hidden2: pick(2, 5),
    };
    let batch = pick(1, 3);
    let q = pick(2, 4);
    let k = pick(1, num_seen - 1);
    let mut rng = RngStream::new(seed, 2);
    let mu = rng.uniform_range(0.0, 1.5);
    let lambdas = [rng.uniform_range(0.2, 2.0), rng.uniform_range(0.2, 2.0), rng.uniform_range(0.2, 2.0)];
    Shape {
        dims,
        batch,
        q,
        k,
        mu,
        lambdas,
    }
}

/// Random data for one shape, already rounded to f32 so both precisions see
/// the same values.
struct Ctx {
    seed: u64,
    s: Shape,
    cfg: TrainConfig,
    z: Matrix<f64>,
    e: Matrix<f64>,
    v: Matrix<f64>,
    w_g: Matrix<f64>,
    w_r: Matrix<f64>,
    w_s: Matrix<f64>,
    w_q: Matrix<f64>,
    w_c: Matrix<f64>,
    emb: Matrix<f64>,
    batch: Batch<f64>,
    noise: Matrix<f64>,
    e_c: Matrix<f64>,
    r_set: Matrix<f64>,
    logits: Matrix<f64>,
    matched: Vec<usize>,
    mismatched: Vec<usize>,
}

fn draw(rng: &mut RngStream, rows: usize, cols: usize) -> Matrix<f64> {
    rng.normal_matrix::<f32>(rows, cols).cast()
}

impl Ctx {
    fn new(seed: u64) -> Self {
        let s = shape(seed);
        let d = s.dims;
        let n = s.batch * s.q;
        let mut rng = RngStream::new(seed, 3);
        let cfg = TrainConfig {
            lambda1: s.lambdas[0],
            lambda2: s.lambdas[1],
            lambda_cat: s.lambdas[2],
            mu: s.mu,
            noise_set_size: s.q,
            z_dim: d.z_dim,
            mismatch_set_size: s.k,
            ..TrainConfig::default()
        };
        let matched_b: Vec<usize> = (0..s.batch).map(|_| rng.below(d.num_seen)).collect();
        let mismatched_b = matched_b
            .iter()
            .map(|&m| {
                let others: Vec<usize> = (0..d.num_seen).filter(|&c| c != m).collect();
                rng.choose_distinct(&others, s.k)
            })
            .collect();
        let batch = Batch {
            features: draw(&mut rng, s.batch, d.d_v),
            matched: matched_b,
            mismatched: mismatched_b,
        };
        let matched: Vec<usize> = (0..n).map(|_| rng.below(d.num_seen)).collect();
        let mismatched = matched
            .iter()
            .map(|&m| (m + 1 + rng.below(d.num_seen - 1)) % d.num_seen)
            .collect();
        Self {
            seed,
            cfg,
            z: draw(&mut rng, n, d.z_dim),
            e: draw(&mut rng, n, d.d_e),
            v: draw(&mut rng, n, d.d_v),
            w_g: draw(&mut rng, n, d.d_v),
            w_r: draw(&mut rng, n, d.d_e),
            w_s: draw(&mut rng, n, 1),
            w_q: draw(&mut rng, n, d.num_seen),
            w_c: draw(&mut rng, n, d.num_seen),
            emb: draw(&mut rng, d.num_seen, d.d_e),
            batch,
            noise: draw(&mut rng, n, d.z_dim),
            e_c: draw(&mut rng, 1, d.d_e),
            r_set: draw(&mut rng, s.q, d.d_e),
            logits: draw(&mut rng, n, d.num_seen),
            matched,
            mismatched,
            s,
        }
    }

    /// Initial weights with random biases; zero biases put dead rows of tiny
    /// layers exactly on a kink. Each attempt draws new biases.
    fn tensors(&self, attempt: u64) -> Vec<(String, Matrix<f32>)> {
        let mut m = ModelTriplet::<f64>::new(self.s.dims, self.seed).unwrap();
        let mut rng = RngStream::new(self.seed, 100 + attempt);
        for store in m.param_stores() {
            for p in store.params_mut() {
                if p.name.ends_with("bias") {
                    p.value = rng.normal_matrix::<f64>(p.value.rows(), p.value.cols()).map(|b| 0.5 * b);
                }
            }
        }
        m.named_tensors()
    }

    /// Outlier-filter selection per condition at the starting point, frozen
    /// for the check.
    fn kept_sets(&self, tensors: &[(String, Matrix<f32>)]) -> Vec<Vec<usize>> {
        let mut m = ModelTriplet::<f64>::new(self.s.dims, self.seed).unwrap();
        m.load_tensors(tensors).unwrap();
        let q = self.s.q;
        self.batch
            .matched
            .iter()
            .enumerate()
            .map(|(c, &cat)| {
                let z = self.noise.select_rows(&(c * q..(c + 1) * q).collect::<Vec<_>>());
                let e = Matrix::row_vector(self.emb.row(cat)).repeat_rows(q);
                let (v, _) = m.g.forward(&z, &e).unwrap();
                let r = m.r.infer(&v).unwrap();
                filter_outliers(self.emb.row(cat), &r, self.cfg.mu).unwrap().kept
            })
            .collect()
    }
}

/// Selected parameter stores plus a store of differentiated inputs.
struct Probe<T: Real> {
    kind: Kind,
    m: ModelTriplet<T>,
    x: ParamStore<T>,
    ids: Vec<ParamId>,
    consts: Vec<Matrix<T>>,
    batch: Batch<T>,
    kept: Vec<Vec<usize>>,
}

impl<T: Real> HasParams<T> for Probe<T> {
    fn param_stores(&mut self) -> Vec<&mut ParamStore<T>> {
        let [g, r, d] = self.kind.nets();
        let mut out = Vec::new();
        if g {
            out.push(self.m.g.store_mut());
        }
        if r {
            out.push(self.m.r.store_mut());
        }
        if d {
            out.push(self.m.d.store_mut());
        }
        out.push(&mut self.x);
        out
    }
}

fn build<T: Real>(ctx: &Ctx, kind: Kind, tensors: &[(String, Matrix<f32>)], kept: &[Vec<usize>]) -> Probe<T> {
    let mut m = ModelTriplet::<T>::new(ctx.s.dims, ctx.seed).unwrap();
    m.load_tensors(tensors).unwrap();
    let (inputs, consts): (Vec<&Matrix<f64>>, Vec<&Matrix<f64>>) = match kind {
        Kind::Generator => (vec![], vec![&ctx.z, &ctx.e, &ctx.w_g]),
        Kind::InferenceNet => (vec![&ctx.v], vec![&ctx.w_r]),
        Kind::ScoreHead => (vec![&ctx.v, &ctx.e], vec![&ctx.w_s]),
        Kind::Heads => (vec![&ctx.v], vec![&ctx.w_q, &ctx.w_c]),
        Kind::DObjective | Kind::GObjective => (vec![], vec![&ctx.emb, &ctx.noise]),
        Kind::InferenceLoss => (vec![&ctx.r_set], vec![&ctx.e_c]),
        Kind::CorrelationLoss | Kind::CategoryLoss => (vec![&ctx.logits], vec![]),
    };
    let mut x = ParamStore::new();
    let ids = inputs
        .iter()
        .enumerate()
        .map(|(i, m)| x.add(format!("input{i}"), m.cast()).unwrap())
        .collect();
    let batch = Batch {
        features: ctx.batch.features.cast(),
        matched: ctx.batch.matched.clone(),
        mismatched: ctx.batch.mismatched.clone(),
    };
    Probe {
        kind,
        m,
        x,
        ids,
        consts: consts.into_iter().map(|c| c.cast()).collect(),
        batch,
        kept: kept.to_vec(),
    }
}

fn numeric(e: zsgan_core::Error) -> NumericError {
    NumericError::Contract(e.to_string())
}

fn dot<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> T {
    a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).sum()
}

fn eval<T: Real>(ctx: &Ctx, p: &mut Probe<T>) -> zsgan_numeric::Result<T> {
    let input = |p: &Probe<T>, i: usize| p.x.value(p.ids[i]).clone();
    match p.kind {
        Kind::Generator => {
            let (y, cache) = p.m.g.forward(&p.consts[0], &p.consts[1]).map_err(numeric)?;
            p.m.g.backward(&cache, &p.consts[2]).map_err(numeric)?;
            Ok(dot(&y, &p.consts[2]))
        }
        Kind::InferenceNet => {
            let (y, cache) = p.m.r.forward(&input(p, 0)).map_err(numeric)?;
            let dv = p.m.r.backward(&cache, &p.consts[0]).map_err(numeric)?;
            p.x.accumulate_grad(p.ids[0], &dv)?;
            Ok(dot(&y, &p.consts[0]))
        }
        Kind::ScoreHead => {
            let (y, cache) = p.m.d.score_logits(&input(p, 0), &input(p, 1)).map_err(numeric)?;
            let (dv, de) = p.m.d.score_backward(&cache, &p.consts[0]).map_err(numeric)?;
            p.x.accumulate_grad(p.ids[0], &dv)?;
            p.x.accumulate_grad(p.ids[1], &de)?;
            Ok(dot(&y, &p.consts[0]))
        }
        Kind::Heads => {
            let (ql, cl, cache) = p.m.d.head_logits(&input(p, 0)).map_err(numeric)?;
            let dv = p
                .m
                .d
                .heads_backward(&cache, Some(&p.consts[0]), Some(&p.consts[1]))
                .map_err(numeric)?;
            p.x.accumulate_grad(p.ids[0], &dv)?;
            Ok(dot(&ql, &p.consts[0]) + dot(&cl, &p.consts[1]))
        }
        Kind::DObjective => {
            let t = d_objective(&mut p.m, &ctx.cfg, &p.consts[0], &p.batch, &p.consts[1]).map_err(numeric)?;
            Ok(t.total)
        }
        Kind::GObjective => {
            let kept = p.kept.clone();
            let t = g_objective(&mut p.m, &ctx.cfg, &p.consts[0], &p.batch, &p.consts[1], Some(&kept)).map_err(numeric)?;
            Ok(t.total)
        }
        Kind::InferenceLoss => {
            let kept = filter_outliers(ctx.e_c.row(0), &ctx.r_set, ctx.s.mu).unwrap().kept;
            let (l, g) = inference_loss_grad(p.consts[0].row(0), p.x.value(p.ids[0]), &kept).map_err(numeric)?;
            p.x.accumulate_grad(p.ids[0], &g)?;
            Ok(l)
        }
        Kind::CorrelationLoss => {
            let (l, g) =
                correlation_loss_logits(p.x.value(p.ids[0]), &ctx.matched, &ctx.mismatched).map_err(numeric)?;
            p.x.accumulate_grad(p.ids[0], &g)?;
            Ok(l)
        }
        Kind::CategoryLoss => {
            let (l, g) = category_nll_logits(p.x.value(p.ids[0]), &ctx.matched).map_err(numeric)?;
            p.x.accumulate_grad(p.ids[0], &g)?;
            Ok(l)
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub max_rel_err: f64,
    pub passed: bool,
    pub redraws: u64,
    pub scalars: usize,
}

/// Checks one component on one shape, redrawing biases while a kink lies
/// within the finite-difference step.
pub fn check(seed: u64, kind: Kind, precision: Precision) -> CheckOutcome {
    let ctx = Ctx::new(seed);
    let h = GradCheckConfig::f64_default().h;
    for attempt in 0..MAX_REDRAWS {
        let tensors = ctx.tensors(attempt);
        let kept = if kind == Kind::GObjective { ctx.kept_sets(&tensors) } else { vec![] };
        let mut p64 = build::<f64>(&ctx, kind, &tensors, &kept);
        let fd = central_differences(&mut p64, |p: &mut Probe<f64>| eval(&ctx, p), h).unwrap();
        let fine = central_differences(&mut p64, |p: &mut Probe<f64>| eval(&ctx, p), h / 10.0).unwrap();
        if !compare_gradients(&fd, &fine, GradCheckConfig::f64_default()).unwrap().passed() {
            continue;
        }
        let analytic = match precision {
            Precision::F64 => analytic_gradient(&mut p64, |p: &mut Probe<f64>| eval(&ctx, p)).unwrap(),
            Precision::F32 => {
                let mut p32 = build::<f32>(&ctx, kind, &tensors, &kept);
                analytic_gradient(&mut p32, |p: &mut Probe<f32>| eval(&ctx, p)).unwrap()
            }
        };
        let report = compare_gradients(&analytic, &fd, precision.config()).unwrap();
        return CheckOutcome {
            max_rel_err: report.max_rel_err,
            passed: report.passed(),
            redraws: attempt,
            scalars: report.checked,
        };
    }
    CheckOutcome {
        max_rel_err: f64::INFINITY,
        passed: false,
        redraws: MAX_REDRAWS,
        scalars: 0,
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepSummary {
    pub shapes: u64,
    pub checks: usize,
    pub scalars: usize,
    pub redraws: u64,
    pub worst: f64,
    pub failures: Vec<String>,
}

impl SweepSummary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn sweep(shapes: u64, kinds: &[Kind], precision: Precision) -> SweepSummary {
    let mut out = SweepSummary {
        shapes,
        ..Default::default()
    };
    for seed in 0..shapes {
        for &kind in kinds {
            let c = check(seed, kind, precision);
            out.checks += 1;
            out.scalars += c.scalars;
            out.redraws += c.redraws;
            out.worst = out.worst.max(c.max_rel_err);
            if !c.passed {
                out.failures
                    .push(format!("shape {seed} {}: relative error {:.3e}", kind.name(), c.max_rel_err));
            }
        }
    }
    out
}
