use std::io::BufRead;

use super::lm::{nlls_fit, FitData, FitOptions, FitResult, Model, Termination};
use crate::error::{Error, Result};

/// Frequency-sampled transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub nu: Vec<f64>,
    pub transmission: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

pub const MIN_POINTS: usize = 5;

impl Spectrum {
    pub fn new(nu: Vec<f64>, transmission: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        if nu.len() != transmission.len() || sigma.as_ref().is_some_and(|s| s.len() != nu.len()) {
            return Err(Error::domain("frequency, transmission and sigma columns differ in length"));
        }
        if nu.len() < MIN_POINTS {
            return Err(Error::domain(format!("need at least {MIN_POINTS} points, got {}", nu.len())));
        }
        if nu.windows(2).any(|w| !(w[1] > w[0])) || nu.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("frequencies must be finite and strictly ascending"));
        }
        if transmission.iter().any(|&t| !(t.is_finite() && t >= 0.0)) {
            return Err(Error::domain("transmission must be finite and >= 0"));
        }
        if let Some(s) = &sigma {
            if s.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                return Err(Error::domain("sigma must be positive"));
            }
        }
        Ok(Self { nu, transmission, sigma })
    }

    /// Reads `frequency_hz,transmission[,sigma]` CSV.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut nu = Vec::new();
        let mut t = Vec::new();
        let mut sigma = Vec::new();
        let mut with_sigma = false;
        for (i, line) in input.lines().enumerate() {
            let n = i + 1;
            let line = line.map_err(|e| Error::parse(n, e.to_string()))?;
            let line = line.trim();
            if n == 1 {
                with_sigma = match line {
                    "frequency_hz,transmission" => false,
                    "frequency_hz,transmission,sigma" => true,
                    _ => {
                        return Err(Error::parse(n, format!(
                            "expected header 'frequency_hz,transmission[,sigma]', found '{line}'"
                        )))
                    }
                };
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let want = if with_sigma { 3 } else { 2 };
            if cols.len() != want {
                return Err(Error::parse(n, format!("expected {want} columns, found {}", cols.len())));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(n, format!("bad number '{s}'")))
            };
            nu.push(parse(cols[0])?);
            t.push(parse(cols[1])?);
            if with_sigma {
                sigma.push(parse(cols[2])?);
            }
        }
        Self::new(nu, t, with_sigma.then_some(sigma)).map_err(|e| match e {
            Error::Domain(msg) => Error::parse(0, msg),
            other => other,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(if self.sigma.is_some() {
            "frequency_hz,transmission,sigma\n"
        } else {
            "frequency_hz,transmission\n"
        });
        for i in 0..self.nu.len() {
            out.push_str(&format!("{:.17e},{:.17e}", self.nu[i], self.transmission[i]));
            if let Some(s) = &self.sigma {
                out.push_str(&format!(",{:.17e}", s[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// `baseline + amplitude (w/2)^2 / ((x - x0)^2 + (w/2)^2)` in the fitter's
/// centered, width-scaled coordinates.
struct ScaledLorentzian;

impl Model for ScaledLorentzian {
    fn param_names(&self) -> Vec<String> {
        ["nu0", "fwhm", "amplitude", "baseline"].map(String::from).to_vec()
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        let hw2 = 0.25 * p[1] * p[1];
        p[3] + p[2] * hw2 / ((x - p[0]).powi(2) + hw2)
    }

    fn gradient(&self, x: f64, p: &[f64], g: &mut [f64]) {
        let dx = x - p[0];
        let hw2 = 0.25 * p[1] * p[1];
        let den = dx * dx + hw2;
        let shape = hw2 / den;
        g[0] = p[2] * 2.0 * dx * hw2 / (den * den);
        g[1] = p[2] * 0.5 * p[1] * dx * dx / (den * den);
        g[2] = shape;
        g[3] = 1.0;
    }
}

/// Lorentzian with a constant baseline, in absolute frequency units.
pub fn lorentzian(nu: f64, nu0: f64, fwhm: f64, amplitude: f64, baseline: f64) -> f64 {
    let hw2 = 0.25 * fwhm * fwhm;
    baseline + amplitude * hw2 / ((nu - nu0).powi(2) + hw2)
}

/// Least-squares Lorentzian fit. Reports `nu0`, `fwhm`, `amplitude`,
/// `baseline` and the derived quality factor `Q = nu0 / fwhm`.
///
/// A spectrum without a resolvable peak (flat, or an amplitude within two
/// standard errors of zero) comes back with `converged = false`.
pub fn fit_lorentzian(spec: &Spectrum) -> Result<FitResult> {
    let (peak_idx, &t_max) = spec
        .transmission
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("spectrum has points");
    let t_min = spec.transmission.iter().cloned().fold(f64::INFINITY, f64::min);
    let nu_ref = spec.nu[peak_idx];
    let span = spec.nu[spec.nu.len() - 1] - spec.nu[0];

    if !(t_max > t_min) {
        return Ok(rejected(nu_ref, span, t_min, "spectrum is flat; no peak to fit"));
    }

    // Width from the half-maximum crossings around the peak.
    let half = t_min + 0.5 * (t_max - t_min);
    let left = (0..peak_idx).rev().find(|&i| spec.transmission[i] < half).map(|i| spec.nu[i]);
    let right = (peak_idx + 1..spec.nu.len()).find(|&i| spec.transmission[i] < half).map(|i| spec.nu[i]);
    let width0 = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (nu_ref - l),
        (None, Some(r)) => 2.0 * (r - nu_ref),
        (None, None) => span / 4.0,
    }
    .max(span / spec.nu.len() as f64);

    let x: Vec<f64> = spec.nu.iter().map(|&v| (v - nu_ref) / width0).collect();
    let init = [0.0, 1.0, t_max - t_min, t_min];
    let bounds = vec![
        (f64::NEG_INFINITY, f64::INFINITY),
        (1e-9, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
    ];
    let data = FitData {
        x: &x,
        y: &spec.transmission,
        sigma: spec.sigma.as_deref(),
    };
    let options = FitOptions {
        bounds: Some(bounds),
        absolute_sigma: spec.sigma.is_some(),
        ..FitOptions::default()
    };
    let mut fit = nlls_fit(&ScaledLorentzian, data, &init, &options)?;

    fit.params[0] = nu_ref + fit.params[0] * width0;
    fit.stderr[0] *= width0;
    fit.params[1] *= width0;
    fit.stderr[1] *= width0;
    fit.model = "lorentzian".into();

    let (nu0, fwhm) = (fit.params[0], fit.params[1]);
    let q = nu0 / fwhm;
    let q_err = q * ((fit.stderr[0] / nu0).powi(2) + (fit.stderr[1] / fwhm).powi(2)).sqrt();
    fit.derived.insert("Q".into(), (q, q_err));

    let amp = fit.params[2];
    let amp_err = fit.stderr[2];
    if !(amp > 0.0 && amp > 2.0 * amp_err) || !amp_err.is_finite() {
        fit.converged = false;
        fit.termination = Termination::Rejected;
        fit.warnings.push(format!("amplitude {amp:e} is not distinguishable from zero (stderr {amp_err:e})"));
    }
    Ok(fit)
}

fn rejected(nu0: f64, span: f64, baseline: f64, why: &str) -> FitResult {
    FitResult {
        model: "lorentzian".into(),
        names: ScaledLorentzian.param_names(),
        params: vec![nu0, span, 0.0, baseline],
        stderr: vec![f64::NAN; 4],
        fixed: vec![false; 4],
        rss: 0.0,
        n_iter: 0,
        converged: false,
        termination: Termination::Rejected,
        rss_history: Vec::new(),
        derived: Default::default(),
        warnings: vec![why.into()],
    }
}
