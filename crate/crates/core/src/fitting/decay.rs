use super::lm::{nlls_fit, FitData, FitOptions, FitResult, Model};
use crate::ensemble::DecayTrace;
use crate::error::{Error, Result};

/// Minimum number of bins that must sit clearly above the background.
pub const MIN_SIGNAL_BINS: usize = 10;
/// Time-constant ratio below which two components are flagged as degenerate.
pub const DEGENERATE_TAU_RATIO: f64 = 1.05;
/// Upper bound on a fitted time constant, in units of the trace length.
const MAX_TAU_OVER_SPAN: f64 = 100.0;
/// Lower bound on a fitted time constant, in units of the bin width.
const MIN_TAU_OVER_BIN: f64 = 0.25;

/// Settings for [`fit_decay`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFitSpec {
    /// One or two exponential components.
    pub n_components: usize,
    /// Freeze the first time constant (s), typically at the bulk lifetime.
    pub fixed_tau1: Option<f64>,
    /// Fit a constant background; when false it is held at zero.
    pub fit_background: bool,
}

impl Default for DecayFitSpec {
    fn default() -> Self {
        Self { n_components: 2, fixed_tau1: None, fit_background: true }
    }
}

/// `Σ A_k exp(-x / tau_k) + background`, parameters laid out as
/// `[A1, tau1, (A2, tau2,) background]`.
struct MultiExp {
    n: usize,
}

impl Model for MultiExp {
    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(2 * self.n + 1);
        for k in 1..=self.n {
            names.push(format!("A{k}"));
            names.push(format!("tau{k}"));
        }
        names.push("background".into());
        names
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let mut y = p[2 * self.n];
        for k in 0..self.n {
            y += p[2 * k] * (-x / p[2 * k + 1]).exp();
        }
        y
    }

    fn gradient(&self, x: f64, p: &[f64], g: &mut [f64]) {
        for k in 0..self.n {
            let (a, tau) = (p[2 * k], p[2 * k + 1]);
            let e = (-x / tau).exp();
            g[2 * k] = e;
            g[2 * k + 1] = a * e * x / (tau * tau);
        }
        g[2 * self.n] = 1.0;
    }
}

/// Weighted fit of `y ≈ A exp(-x / tau)` through `ln y`; weights `y` match
/// the Poisson variance of the logarithm. Needs at least two positive points.
fn log_linear(points: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0);
    for (x, y) in points.filter(|&(_, y)| y > 0.0) {
        let (w, ly) = (y, y.ln());
        sw += w;
        sx += w * x;
        sy += w * ly;
        sxx += w * x * x;
        sxy += w * x * ly;
        n += 1;
    }
    if n < 2 {
        return None;
    }
    let den = sw * sxx - sx * sx;
    if den.abs() <= f64::EPSILON * sw * sxx {
        return None;
    }
    let slope = (sw * sxy - sx * sy) / den;
    let intercept = (sy - slope * sx) / sw;
    (slope < 0.0).then(|| (intercept.exp(), -1.0 / slope))
}

/// Least-squares amplitude for a known time constant.
fn amplitude_for(points: &[(f64, f64)], tau: f64) -> f64 {
    let (num, den) = points.iter().fold((0.0, 0.0), |(n, d), &(x, y)| {
        let e = (-x / tau).exp();
        let w = 1.0 / y.max(1.0);
        (n + w * y * e, d + w * e * e)
    });
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Fits a one- or two-component exponential decay to a binned trace.
///
/// Time is measured from the start of the first bin. Residuals are weighted
/// by `sqrt(max(counts, 1))`. When two components are free the slower one is
/// reported as `tau1`.
pub fn fit_decay(trace: &DecayTrace, spec: &DecayFitSpec) -> Result<FitResult> {
    let n = spec.n_components;
    if !(n == 1 || n == 2) {
        return Err(Error::domain(format!("n_components must be 1 or 2, got {n}")));
    }
    if let Some(tau) = spec.fixed_tau1 {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::domain(format!("fixed tau1 must be positive, got {tau}")));
        }
    }
    let len = trace.counts.len();
    let tail_len = (len / 10).max(1);
    let tail_level = trace.counts[len - tail_len..].iter().sum::<f64>() / tail_len as f64;
    let floor = if spec.fit_background { tail_level } else { 0.0 };
    let threshold = floor + 3.0 * floor.max(1.0).sqrt();
    let above = trace.counts.iter().filter(|&&c| c > threshold).count();
    if above < MIN_SIGNAL_BINS {
        return Err(Error::domain(format!(
            "only {above} bins above background; need at least {MIN_SIGNAL_BINS}"
        )));
    }

    // Work in units of the trace span so every parameter is O(1) apart from
    // the amplitudes, which the engine's column scaling absorbs.
    let scale = trace.bin_width * len as f64;
    let x: Vec<f64> = (0..len).map(|i| i as f64 * trace.bin_width / scale).collect();
    let y = &trace.counts;
    let sigma: Vec<f64> = y.iter().map(|&c| c.max(1.0).sqrt()).collect();

    let background0 = if spec.fit_background { 0.5 * tail_level } else { 0.0 };
    let net: Vec<(f64, f64)> = x.iter().zip(y).map(|(&x, &y)| (x, y - background0)).collect();
    let fixed_tau = spec.fixed_tau1.map(|t| t / scale);

    let (a_slow, tau_slow) = match fixed_tau {
        Some(tau) => (amplitude_for(&net[len / 2..], tau), tau),
        None => {
            let start = if n == 2 { len / 3 } else { 0 };
            log_linear(net[start..].iter().copied())
                .or_else(|| log_linear(net.iter().copied()))
                .unwrap_or((y[0].max(1.0), 0.3))
        }
    };
    let mut init = vec![a_slow, tau_slow];
    if n == 2 {
        let head = &net[..(len / 3).max(3)];
        let residual = head.iter().map(|&(x, y)| (x, y - a_slow * (-x / tau_slow).exp()));
        let (a_fast, tau_fast) = log_linear(residual)
            .filter(|&(_, t)| t < tau_slow && t > 0.0)
            .unwrap_or((a_slow.abs().max(1.0), tau_slow / 5.0));
        init.extend([a_fast, tau_fast]);
    }
    init.push(background0);

    let mut fixed = vec![false; init.len()];
    if fixed_tau.is_some() {
        fixed[1] = true;
    }
    if !spec.fit_background {
        fixed[2 * n] = true;
    }
    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); init.len()];
    for k in 0..n {
        bounds[2 * k + 1] = (MIN_TAU_OVER_BIN / len as f64, MAX_TAU_OVER_SPAN);
    }
    let model = MultiExp { n };
    let options = FitOptions {
        bounds: Some(bounds),
        fixed: Some(fixed),
        ..FitOptions::default()
    };
    let data = FitData { x: &x, y, sigma: Some(&sigma) };
    let mut fit = nlls_fit(&model, data, &init, &options)?;

    for k in 0..n {
        fit.params[2 * k + 1] *= scale;
        fit.stderr[2 * k + 1] *= scale;
    }
    if n == 2 && fixed_tau.is_none() && fit.params[3] > fit.params[1] {
        fit.params.swap(0, 2);
        fit.params.swap(1, 3);
        fit.stderr.swap(0, 2);
        fit.stderr.swap(1, 3);
    }
    fit.model = format!("exponential{n}");
    for k in 0..n {
        let tau = fit.params[2 * k + 1];
        if fit.fixed[2 * k + 1] {
            continue;
        }
        if spec.fit_background && tau > scale {
            fit.warnings.push(format!(
                "degenerate time constants: tau{} = {tau:e} s exceeds the {scale:e} s trace and is not separable from the background",
                k + 1
            ));
        } else if tau < trace.bin_width {
            fit.warnings.push(format!(
                "degenerate time constants: tau{} = {tau:e} s is shorter than one {:e} s bin",
                k + 1,
                trace.bin_width
            ));
        }
    }
    if n == 2 {
        let (t1, t2) = (fit.params[1], fit.params[3]);
        let ratio = t1.max(t2) / t1.min(t2);
        if ratio < DEGENERATE_TAU_RATIO {
            fit.warnings.push(format!(
                "degenerate time constants: tau1/tau2 = {ratio:.4} is below {DEGENERATE_TAU_RATIO}"
            ));
        }
    }
    Ok(fit)
}

/// Rescales counts so that the first (bulk) component has unit amplitude.
pub fn normalize_to_first_component(trace: &DecayTrace, fit: &FitResult) -> Result<DecayTrace> {
    let a1 = fit.get("A1").ok_or_else(|| Error::domain("fit has no A1 parameter"))?;
    if !(a1.is_finite() && a1 > 0.0) {
        return Err(Error::domain(format!("cannot normalize by non-positive amplitude {a1}")));
    }
    let counts = trace.counts.iter().map(|c| c / a1).collect();
    DecayTrace::new(trace.bin_width, counts, trace.t0)
}
