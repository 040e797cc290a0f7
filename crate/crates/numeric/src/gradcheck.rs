//! Central finite-difference gradient checking.

use crate::error::{NumericError, Result};
use crate::params::HasParams;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Perturbation applied to each coordinate.
    pub h: f64,
    /// Maximum accepted relative error.
    pub tol: f64,
    /// Denominator floor: `|a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
}

impl GradCheckConfig {
    pub fn f64_default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-6,
            floor: 1e-3,
        }
    }

    pub fn f32_default() -> Self {
        Self {
            h: 1e-2,
            tol: 1e-3,
            floor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// `(store, scalar index within store)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

fn evaluate<T, S, F>(state: &mut S, eval: &mut F) -> Result<f64>
where
    T: Real,
    S: HasParams<T>,
    F: FnMut(&mut S) -> Result<T>,
{
    for st in state.param_stores() {
        st.zero_grads();
    }
    let v = eval(state)?.to_f64_lossy();
    if !v.is_finite() {
        return Err(NumericError::NonFinite(format!("objective evaluated to {v}")));
    }
    Ok(v)
}

/// Runs `eval` once on zeroed gradients and returns the accumulated
/// gradient of every store, flattened.
pub fn analytic_gradient<T, S, F>(state: &mut S, mut eval: F) -> Result<Vec<Vec<f64>>>
where
    T: Real,
    S: HasParams<T>,
    F: FnMut(&mut S) -> Result<T>,
{
    evaluate(state, &mut eval)?;
    Ok(state
        .param_stores()
        .iter()
        .map(|s| s.flat_grads().iter().map(|g| g.to_f64_lossy()).collect())
        .collect())
}

/// Central differences `(f(x + h) - f(x - h)) / 2h` for every scalar
/// parameter, laid out like [`analytic_gradient`]. Parameters are restored.
pub fn central_differences<T, S, F>(state: &mut S, mut eval: F, h: f64) -> Result<Vec<Vec<f64>>>
where
    T: Real,
    S: HasParams<T>,
    F: FnMut(&mut S) -> Result<T>,
{
    if !(h > 0.0) {
        return Err(NumericError::Config(format!("step must be positive, got {h}")));
    }
    let sizes: Vec<usize> = state.param_stores().iter().map(|s| s.num_scalars()).collect();
    let h = T::from_f64_lossy(h);
    let mut out = Vec::with_capacity(sizes.len());
    for (si, &len) in sizes.iter().enumerate() {
        let mut grads = Vec::with_capacity(len);
        for flat in 0..len {
            let orig = nudge(state, si, flat, None);
            nudge(state, si, flat, Some(orig + h));
            let fp = evaluate(state, &mut eval);
            nudge(state, si, flat, Some(orig - h));
            let fm = evaluate(state, &mut eval);
            nudge(state, si, flat, Some(orig));
            // the effective step is what survived rounding in T
            let step = ((orig + h) - (orig - h)).to_f64_lossy();
            grads.push((fp? - fm?) / step);
        }
        out.push(grads);
    }
    Ok(out)
}

/// Coordinate-wise comparison of two gradients laid out per store.
pub fn compare_gradients(analytic: &[Vec<f64>], numeric: &[Vec<f64>], cfg: GradCheckConfig) -> Result<GradCheckReport> {
    if analytic.len() != numeric.len() || analytic.iter().zip(numeric).any(|(a, n)| a.len() != n.len()) {
        return Err(NumericError::dim("compare_gradients", "gradient layouts differ"));
    }
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst: None,
        checked: 0,
        tol: cfg.tol,
    };
    for (si, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        for (flat, (&a, &n)) in a.iter().zip(n).enumerate() {
            let rel = relative_error(a, n, cfg.floor);
            report.checked += 1;
            report.max_abs_err = report.max_abs_err.max((a - n).abs());
            if rel > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(rel);
                report.worst = Some((si, flat));
            }
        }
    }
    Ok(report)
}

/// Compares analytic gradients with central differences for every scalar parameter.
///
/// `eval` must return the loss and accumulate its analytic gradient into the
/// parameter stores; gradients are zeroed before every call. The parameters
/// are left unchanged and hold the analytic gradient on return.
pub fn grad_check<T, S, F>(state: &mut S, mut eval: F, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    T: Real,
    S: HasParams<T>,
    F: FnMut(&mut S) -> Result<T>,
{
    if !(cfg.h > 0.0) {
        return Err(NumericError::Config(format!("step must be positive, got {}", cfg.h)));
    }
    let analytic = analytic_gradient(state, &mut eval)?;
    let numeric = central_differences(state, &mut eval, cfg.h)?;
    let report = compare_gradients(&analytic, &numeric, cfg)?;
    // leave the analytic gradient in place
    evaluate(state, &mut eval)?;
    Ok(report)
}

/// Reads (and optionally overwrites) scalar `flat` of store `si`.
fn nudge<T: Real, S: HasParams<T>>(state: &mut S, si: usize, flat: usize, set: Option<T>) -> T {
    let mut stores = state.param_stores();
    let store = &mut stores[si];
    let mut offset = flat;
    for p in store.params_mut() {
        let len = p.value.data().len();
        if offset < len {
            let old = p.value.data()[offset];
            if let Some(v) = set {
                p.value.data_mut()[offset] = v;
            }
            return old;
        }
        offset -= len;
    }
    unreachable!("flat index within store")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::params::ParamStore;

    #[test]
    fn quadratic_at_three() {
        let mut s = ParamStore::<f64>::new();
        let id = s.add("x", Matrix::filled(1, 1, 3.0)).unwrap();
        let report = grad_check(
            &mut s,
            |s: &mut ParamStore<f64>| {
                let x = s.value(id).get(0, 0);
                s.grad_mut(id).set(0, 0, 2.0 * x);
                Ok(x * x)
            },
            GradCheckConfig::f64_default(),
        )
        .unwrap();
        assert!(report.max_rel_err <= 1e-8, "{report:?}");
        assert_eq!(s.grad(id).get(0, 0), 6.0);
    }

    #[test]
    fn linear_function_error_is_tiny() {
        let mut s = ParamStore::<f64>::new();
        let id = s.add("x", Matrix::from_rows(&[[0.3, -1.2, 4.0]]).unwrap()).unwrap();
        let coef = [2.0, -0.5, 1.5];
        let report = grad_check(
            &mut s,
            |s: &mut ParamStore<f64>| {
                let x = s.value(id).clone();
                let mut f = 0.0;
                for (j, c) in coef.iter().enumerate() {
                    f += c * x.get(0, j);
                    s.grad_mut(id).set(0, j, *c);
                }
                Ok(f)
            },
            GradCheckConfig::f64_default(),
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-9, "{report:?}");
    }

    #[test]
    fn non_finite_objective_is_error() {
        let mut s = ParamStore::<f64>::new();
        s.add("x", Matrix::filled(1, 1, 0.0)).unwrap();
        let err = grad_check(&mut s, |_s: &mut ParamStore<f64>| Ok(f64::NAN), GradCheckConfig::f64_default());
        assert!(matches!(err, Err(NumericError::NonFinite(_))));
    }
}
