//! Levenberg-Marquardt for weighted scalar curve fits.
//!
//! Minimizes `sum_i ((y_i - f(x_i; p)) / sigma_i)^2` over the free parameters.
//! The damped normal equations `(J^T J + lambda diag(J^T J)) d = -J^T r` are
//! solved after Jacobi scaling, so the step is invariant to parameter units.
//! `lambda` starts at 1e-3 and moves by x10 on a rejected step and /10 on an
//! accepted one.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 500;
pub const RSS_REL_TOL: f64 = 1e-10;
pub const GRADIENT_TOL: f64 = 1e-8;
pub const INITIAL_DAMPING: f64 = 1e-3;
/// Reciprocal condition number below which the covariance is treated as singular.
const COVARIANCE_RCOND: f64 = 1e-13;

/// Residual RSS relative to `sum (y/sigma)^2` below which a fit is treated as exact.
const ZERO_RESIDUAL: f64 = 1e-20;
const MAX_DAMPING: f64 = 1e16;

/// A smooth scalar model `y = f(x; p)`.
pub trait Model {
    fn param_names(&self) -> Vec<String>;

    fn eval(&self, x: f64, p: &[f64]) -> f64;

    /// `df/dp` at `x`. Defaults to central differences.
    fn gradient(&self, x: f64, p: &[f64], grad: &mut [f64]) {
        let mut q = p.to_vec();
        for j in 0..p.len() {
            let h = 1e-6 * p[j].abs().max(1e-8);
            q[j] = p[j] + h;
            let up = self.eval(x, &q);
            q[j] = p[j] - h;
            let down = self.eval(x, &q);
            q[j] = p[j];
            grad[j] = (up - down) / (2.0 * h);
        }
    }
}

/// Closure-backed model with numerical derivatives.
pub struct FnModel<F> {
    names: Vec<String>,
    f: F,
}

impl<F: Fn(f64, &[f64]) -> f64> FnModel<F> {
    pub fn new(names: &[&str], f: F) -> Self {
        Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            f,
        }
    }
}

impl<F: Fn(f64, &[f64]) -> f64> Model for FnModel<F> {
    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        (self.f)(x, p)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitData<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    /// Per-point standard deviations; unit weights when absent.
    pub sigma: Option<&'a [f64]>,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Inclusive `(lower, upper)` per parameter; `None` leaves all free.
    pub bounds: Option<Vec<(f64, f64)>>,
    /// `true` freezes the parameter at its initial value.
    pub fixed: Option<Vec<bool>>,
    pub max_iter: usize,
    /// Treat `sigma` as absolute: do not rescale the covariance by the
    /// reduced chi-square.
    pub absolute_sigma: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            bounds: None,
            fixed: None,
            max_iter: MAX_ITERATIONS,
            absolute_sigma: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ZeroResidual,
    SmallRssChange,
    SmallGradient,
    NoFreeParameters,
    MaxIterations,
    /// Damping exceeded its ceiling without finding a downhill step.
    Stalled,
    /// Post-fit check failed (e.g. no identifiable peak).
    Rejected,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub model: String,
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub stderr: Vec<f64>,
    pub fixed: Vec<bool>,
    pub rss: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub termination: Termination,
    /// RSS after each accepted step, starting with the initial value.
    pub rss_history: Vec<f64>,
    /// Quantities computed from the parameters, with their standard errors.
    pub derived: BTreeMap<String, (f64, f64)>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.params[i])
    }

    pub fn stderr_of(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.stderr[i])
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// `{model, params, stderr, rss, converged, n_iter}` plus derived values
    /// and warnings.
    pub fn report(&self) -> serde_json::Value {
        let mut params = serde_json::Map::new();
        let mut stderr = serde_json::Map::new();
        for (i, name) in self.names.iter().enumerate() {
            params.insert(name.clone(), json_number(self.params[i]));
            stderr.insert(name.clone(), json_number(self.stderr[i]));
        }
        for (name, (value, err)) in &self.derived {
            params.insert(name.clone(), json_number(*value));
            stderr.insert(name.clone(), json_number(*err));
        }
        serde_json::json!({
            "model": self.model,
            "params": params,
            "stderr": stderr,
            "rss": json_number(self.rss),
            "converged": self.converged,
            "n_iter": self.n_iter,
            "termination": self.termination,
            "warnings": self.warnings,
        })
    }
}

fn json_number(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v).map_or(serde_json::Value::Null, serde_json::Value::Number)
}

struct Problem<'a, M: ?Sized> {
    model: &'a M,
    data: FitData<'a>,
    bounds: Vec<(f64, f64)>,
    free: Vec<usize>,
}

impl<M: Model + ?Sized> Problem<'_, M> {
    fn weight(&self, i: usize) -> f64 {
        self.data.sigma.map_or(1.0, |s| 1.0 / s[i])
    }

    fn rss(&self, p: &[f64]) -> f64 {
        (0..self.data.x.len())
            .map(|i| {
                let r = (self.data.y[i] - self.model.eval(self.data.x[i], p)) * self.weight(i);
                r * r
            })
            .sum()
    }

    /// Residuals and Jacobian of the residuals with respect to the free parameters.
    fn linearize(&self, p: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.data.x.len();
        let mut r = DVector::zeros(m);
        let mut jac = DMatrix::zeros(m, self.free.len());
        let mut grad = vec![0.0; p.len()];
        for i in 0..m {
            let w = self.weight(i);
            let x = self.data.x[i];
            r[i] = (self.data.y[i] - self.model.eval(x, p)) * w;
            self.model.gradient(x, p, &mut grad);
            for (col, &j) in self.free.iter().enumerate() {
                jac[(i, col)] = -grad[j] * w;
            }
        }
        (r, jac)
    }

    fn clamp(&self, p: &mut [f64]) {
        for (v, &(lo, hi)) in p.iter_mut().zip(&self.bounds) {
            *v = v.clamp(lo, hi);
        }
    }
}

/// Fit `model` to `data` from `init`.
///
/// Singular normal equations never panic: the damping is raised until a
/// step can be taken, and a fit that cannot move is reported as not
/// converged.
pub fn nlls_fit<M: Model + ?Sized>(model: &M, data: FitData<'_>, init: &[f64], options: &FitOptions) -> Result<FitResult> {
    let n = init.len();
    let names = model.param_names();
    if names.len() != n {
        return Err(Error::domain(format!("model has {} parameters, {} initial values given", names.len(), n)));
    }
    let m = data.x.len();
    if data.y.len() != m || data.sigma.is_some_and(|s| s.len() != m) {
        return Err(Error::domain("x, y and sigma differ in length"));
    }
    if let Some(s) = data.sigma {
        if s.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::domain("sigma must be positive"));
        }
    }
    if data.x.iter().chain(data.y).any(|v| !v.is_finite()) {
        return Err(Error::domain("data contain non-finite values"));
    }
    let bounds = options.bounds.clone().unwrap_or_else(|| vec![(f64::NEG_INFINITY, f64::INFINITY); n]);
    let fixed = options.fixed.clone().unwrap_or_else(|| vec![false; n]);
    if bounds.len() != n || fixed.len() != n {
        return Err(Error::domain("bounds and fixed mask must match the parameter count"));
    }
    for (j, (&v, &(lo, hi))) in init.iter().zip(&bounds).enumerate() {
        if !(v.is_finite() && lo <= v && v <= hi) {
            return Err(Error::domain(format!("initial {} = {v} lies outside [{lo}, {hi}]", names[j])));
        }
    }
    let free: Vec<usize> = (0..n).filter(|&j| !fixed[j]).collect();
    if m < free.len() {
        return Err(Error::domain(format!("{m} points cannot determine {} parameters", free.len())));
    }

    let problem = Problem { model, data, bounds, free };
    let mut p = init.to_vec();
    let mut rss = problem.rss(&p);
    let mut history = vec![rss];
    let scale: f64 = (0..m).map(|i| (data.y[i] * problem.weight(i)).powi(2)).sum::<f64>().max(f64::MIN_POSITIVE);

    let finish = |p: Vec<f64>, rss: f64, n_iter: usize, termination: Termination, history: Vec<f64>| {
        let converged = matches!(
            termination,
            Termination::ZeroResidual | Termination::SmallRssChange | Termination::SmallGradient | Termination::NoFreeParameters
        );
        let (stderr, warnings) = standard_errors(&problem, &p, rss, options.absolute_sigma);
        FitResult {
            model: String::new(),
            names: names.clone(),
            params: p,
            stderr,
            fixed: fixed.clone(),
            rss,
            n_iter,
            converged,
            termination,
            rss_history: history,
            derived: BTreeMap::new(),
            warnings,
        }
    };

    if problem.free.is_empty() {
        return Ok(finish(p, rss, 0, Termination::NoFreeParameters, history));
    }

    let mut lambda = INITIAL_DAMPING;
    let mut n_iter = 0;
    let termination = loop {
        if rss <= ZERO_RESIDUAL * scale {
            break Termination::ZeroResidual;
        }
        if n_iter >= options.max_iter {
            break Termination::MaxIterations;
        }
        let (r, jac) = problem.linearize(&p);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if projected_cosine(&problem, &p, &jtj, &g, rss) < GRADIENT_TOL {
            break Termination::SmallGradient;
        }
        n_iter += 1;

        let d: Vec<f64> = (0..problem.free.len()).map(|k| jtj[(k, k)].sqrt().max(1e-300)).collect();
        let scaled = DMatrix::from_fn(d.len(), d.len(), |a, b| jtj[(a, b)] / (d[a] * d[b]));
        let rhs = DVector::from_fn(d.len(), |a, _| -g[a] / d[a]);

        let mut accepted = None;
        while lambda <= MAX_DAMPING {
            let mut damped = scaled.clone();
            for k in 0..d.len() {
                damped[(k, k)] += lambda;
            }
            if let Some(chol) = damped.cholesky() {
                let y = chol.solve(&rhs);
                let mut trial = p.clone();
                for (k, &j) in problem.free.iter().enumerate() {
                    trial[j] += y[k] / d[k];
                }
                problem.clamp(&mut trial);
                let trial_rss = problem.rss(&trial);
                if trial_rss.is_finite() && trial_rss < rss {
                    lambda = (lambda / 10.0).max(1e-15);
                    accepted = Some((trial, trial_rss));
                    break;
                }
            }
            lambda *= 10.0;
        }

        match accepted {
            Some((trial, trial_rss)) => {
                let change = (rss - trial_rss) / rss;
                p = trial;
                rss = trial_rss;
                history.push(rss);
                if change < RSS_REL_TOL {
                    break Termination::SmallRssChange;
                }
            }
            None => break Termination::Stalled,
        }
    };

    Ok(finish(p, rss, n_iter, termination, history))
}

/// Largest `|g_j| / sqrt(A_jj rss)`: the cosine between the residual and
/// each Jacobian column. Components pinned at a bound and pushing outward
/// are ignored.
fn projected_cosine<M: Model + ?Sized>(problem: &Problem<'_, M>, p: &[f64], jtj: &DMatrix<f64>, g: &DVector<f64>, rss: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, &j) in problem.free.iter().enumerate() {
        let (lo, hi) = problem.bounds[j];
        // descent direction is -g
        if (p[j] <= lo && g[k] > 0.0) || (p[j] >= hi && g[k] < 0.0) {
            continue;
        }
        let denom = (jtj[(k, k)] * rss).sqrt();
        if denom > 0.0 {
            worst = worst.max(g[k].abs() / denom);
        }
    }
    worst
}

fn standard_errors<M: Model + ?Sized>(problem: &Problem<'_, M>, p: &[f64], rss: f64, absolute: bool) -> (Vec<f64>, Vec<String>) {
    let n = p.len();
    let mut stderr = vec![0.0; n];
    let mut warnings = Vec::new();
    if problem.free.is_empty() {
        return (stderr, warnings);
    }
    let (_, jac) = problem.linearize(p);
    let jtj = jac.transpose() * &jac;
    let d: Vec<f64> = (0..problem.free.len()).map(|k| jtj[(k, k)].sqrt()).collect();
    let dof = problem.data.x.len().saturating_sub(problem.free.len());
    let factor = if absolute {
        1.0
    } else if dof > 0 {
        rss / dof as f64
    } else {
        f64::NAN
    };
    let scaled = DMatrix::from_fn(d.len(), d.len(), |a, b| {
        if d[a] > 0.0 && d[b] > 0.0 {
            jtj[(a, b)] / (d[a] * d[b])
        } else {
            0.0
        }
    });
    let eigen = scaled.clone().symmetric_eigen().eigenvalues;
    let well_conditioned = eigen.min() > COVARIANCE_RCOND * eigen.max();
    let inverse = scaled.cholesky().map(|c| c.inverse()).filter(|inv| inv.iter().all(|v| v.is_finite()));
    match inverse {
        Some(inv) if well_conditioned && d.iter().all(|&v| v > 0.0) => {
            for (k, &j) in problem.free.iter().enumerate() {
                stderr[j] = (inv[(k, k)] * factor).sqrt() / d[k];
            }
        }
        _ => {
            warnings.push("covariance matrix is singular; standard errors unavailable".into());
            for &j in &problem.free {
                stderr[j] = f64::NAN;
            }
        }
    }
    (stderr, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn linear_model_in_three_iterations() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v).collect();
        let model = FnModel::new(&["a"], |x, p| p[0] * x);
        let fit = nlls_fit(&model, FitData { x: &x, y: &y, sigma: None }, &[1.0], &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.n_iter <= 3, "{} iterations", fit.n_iter);
        assert_relative_eq!(fit.params[0], 2.5, max_relative = 1e-10);
    }

    #[test]
    fn everything_fixed_is_a_no_op() {
        let x = [0.0, 1.0, 2.0];
        let y = [1.0, 3.0, 2.0];
        let model = FnModel::new(&["a", "b"], |x, p| p[0] + p[1] * x);
        let opts = FitOptions { fixed: Some(vec![true, true]), ..FitOptions::default() };
        let fit = nlls_fit(&model, FitData { x: &x, y: &y, sigma: None }, &[0.5, 0.25], &opts).unwrap();
        assert_eq!(fit.params, vec![0.5, 0.25]);
        let expected: f64 = x.iter().zip(&y).map(|(x, y)| (y - 0.5 - 0.25 * x).powi(2)).sum();
        assert_eq!(fit.rss, expected);
        assert_eq!(fit.n_iter, 0);
    }

    #[test]
    fn fixed_parameter_never_moves() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|x| 3.0 * (-x / 0.7f64).exp() + 0.2).collect();
        let model = FnModel::new(&["a", "tau", "c"], |x, p| p[0] * (-x / p[1]).exp() + p[2]);
        let opts = FitOptions { fixed: Some(vec![false, true, false]), ..FitOptions::default() };
        let fit = nlls_fit(&model, FitData { x: &x, y: &y, sigma: None }, &[1.0, 0.5, 0.0], &opts).unwrap();
        assert_eq!(fit.params[1], 0.5);
        assert_eq!(fit.stderr[1], 0.0);
    }

    #[test]
    fn rosenbrock_converges() {
        // r1 = 10 (b - a^2), r2 = 1 - a, from the classic start (-1.2, 1).
        let x = [0.0, 1.0];
        let y = [0.0, 1.0];
        let model = FnModel::new(&["a", "b"], |x, p| if x == 0.0 { 10.0 * (p[1] - p[0] * p[0]) } else { p[0] });
        let fit = nlls_fit(&model, FitData { x: &x, y: &y, sigma: None }, &[-1.2, 1.0], &FitOptions::default()).unwrap();
        assert!(fit.converged, "{:?}", fit.termination);
        assert!(fit.n_iter <= MAX_ITERATIONS);
        assert!((fit.params[0] - 1.0).abs() < 1e-6 && (fit.params[1] - 1.0).abs() < 1e-6, "{:?}", fit.params);
    }

    #[test]
    fn singular_problem_reports_instead_of_panicking() {
        // Only a + b is identifiable.
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 1.1, 0.9, 1.0];
        let model = FnModel::new(&["a", "b"], |_, p| p[0] + p[1]);
        let fit = nlls_fit(&model, FitData { x: &x, y: &y, sigma: None }, &[0.0, 0.0], &FitOptions::default()).unwrap();
        assert!(fit.rss.is_finite());
        assert!(!fit.warnings.is_empty());
    }

    #[test]
    fn bounds_are_respected() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|x| -2.0 * x).collect();
        let model = FnModel::new(&["a"], |x, p| p[0] * x);
        let opts = FitOptions { bounds: Some(vec![(0.0, 10.0)]), ..FitOptions::default() };
        let fit = nlls_fit(&model, FitData { x: &x, y: &y, sigma: None }, &[1.0], &opts).unwrap();
        assert_eq!(fit.params[0], 0.0);
        assert!(fit.converged);
    }

    #[test]
    fn input_validation() {
        let model = FnModel::new(&["a"], |x, p| p[0] * x);
        let x = [1.0, 2.0];
        let opts = FitOptions { bounds: Some(vec![(0.0, 1.0)]), ..FitOptions::default() };
        assert!(nlls_fit(&model, FitData { x: &x, y: &[1.0, 2.0], sigma: None }, &[5.0], &opts).is_err());
        assert!(nlls_fit(&model, FitData { x: &x, y: &[1.0], sigma: None }, &[0.5], &FitOptions::default()).is_err());
        assert!(nlls_fit(&model, FitData { x: &x, y: &[1.0, 2.0], sigma: Some(&[1.0, 0.0]) }, &[0.5], &FitOptions::default()).is_err());
        assert!(nlls_fit(&model, FitData { x: &x, y: &[1.0, 2.0], sigma: None }, &[0.5, 1.0], &FitOptions::default()).is_err());
    }

    #[test]
    fn report_shape() {
        let x: Vec<f64> = (1..=5).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 0.01 * v * v).collect();
        let model = FnModel::new(&["a"], |x, p| p[0] * x);
        let mut fit = nlls_fit(&model, FitData { x: &x, y: &y, sigma: None }, &[1.0], &FitOptions::default()).unwrap();
        fit.model = "line".into();
        let report = fit.report();
        for key in ["model", "params", "stderr", "rss", "converged", "n_iter"] {
            assert!(report.get(key).is_some(), "missing {key}");
        }
        assert!(report["params"]["a"].as_f64().unwrap() > 2.0);
        assert_eq!(fit.get("a"), Some(fit.params[0]));
    }

    proptest! {
        #[test]
        fn accepted_steps_never_increase_rss(a in 0.5f64..5.0, tau in 0.2f64..3.0, noise_seed in 0u64..1000) {
            let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
            let y: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(i, x)| a * (-x / tau).exp() + 0.01 * (((i as u64 * 7919 + noise_seed) % 101) as f64 / 50.0 - 1.0))
                .collect();
            let model = FnModel::new(&["a", "tau"], |x, p| p[0] * (-x / p[1]).exp());
            let fit = nlls_fit(&model, FitData { x: &x, y: &y, sigma: None }, &[1.0, 1.0], &FitOptions::default()).unwrap();
            for w in fit.rss_history.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }

        #[test]
        fn reordering_does_not_change_the_fit(shift in 1usize..29) {
            let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
            let y: Vec<f64> = x.iter().enumerate().map(|(i, x)| 2.0 * (-x / 1.3f64).exp() + 0.3 + 0.01 * ((i * 37 % 11) as f64 - 5.0)).collect();
            let model = FnModel::new(&["a", "tau", "c"], |x, p| p[0] * (-x / p[1]).exp() + p[2]);
            let fit = |x: &[f64], y: &[f64]| nlls_fit(&model, FitData { x, y, sigma: None }, &[1.0, 1.0, 0.0], &FitOptions::default()).unwrap();
            let base = fit(&x, &y);
            let mut xr = x.clone();
            let mut yr = y.clone();
            xr.rotate_left(shift);
            yr.rotate_left(shift);
            xr.swap(0, 5);
            yr.swap(0, 5);
            let other = fit(&xr, &yr);
            for (a, b) in base.params.iter().zip(&other.params) {
                prop_assert!((a - b).abs() <= 1e-7 * a.abs().max(1.0), "{} vs {}", a, b);
            }
        }
    }
}
