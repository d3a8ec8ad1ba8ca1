//! Three-level optical pumping between two ground Zeeman levels and the
//! optical excited state.
//!
//! Level |1> is driven to |e> at rate `R` (stimulated in both directions).
//! |e> decays at `gamma_opt`, returning to |1> with probability `p_return`
//! and otherwise landing in |2>. Spin relaxation pulls the two ground levels
//! toward equal population with the population difference decaying at
//! `1 / T_Z`, i.e. each level flips at `W = 1 / (2 T_Z)`.
//!
//! ```text
//! dn_e/dt = R (n1 - ne) - gamma ne
//! dn2/dt  = gamma (1 - p) ne - W (n2 - n1)
//! dn1/dt  = -R (n1 - ne) + gamma p ne + W (n2 - n1)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pump rate used for the strong-pump limit, relative to `gamma_opt`.
pub const STRONG_PUMP_RATIO: f64 = 1e6;

const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub n1: f64,
    pub n2: f64,
    pub ne: f64,
}

impl Populations {
    pub const THERMAL: Populations = Populations { n1: 0.5, n2: 0.5, ne: 0.0 };

    /// Fraction in the target Zeeman level |2>.
    pub fn efficiency(&self) -> f64 {
        self.n2
    }

    pub fn sum(&self) -> f64 {
        self.n1 + self.n2 + self.ne
    }

    fn max_abs_diff(&self, other: &Populations) -> f64 {
        (self.n1 - other.n1)
            .abs()
            .max((self.n2 - other.n2).abs())
            .max((self.ne - other.ne).abs())
    }

    fn axpy(&self, h: f64, d: &Populations) -> Populations {
        Populations {
            n1: self.n1 + h * d.n1,
            n2: self.n2 + h * d.n2,
            ne: self.ne + h * d.ne,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpModel {
    /// Total excited-state decay rate (1/s).
    pub gamma_opt: f64,
    /// Zeeman population lifetime (s). May be infinite.
    pub t_z: f64,
    pub p_return: f64,
    /// Pump rate on |1> <-> |e> (1/s).
    pub pump_rate: f64,
    /// Initial state for `integrate`.
    pub populations: Populations,
}

impl PumpModel {
    pub fn new(gamma_opt: f64, t_z: f64, p_return: f64, pump_rate: f64) -> Result<Self> {
        let model = Self {
            gamma_opt,
            t_z,
            p_return,
            pump_rate,
            populations: Populations::THERMAL,
        };
        model.validate()?;
        Ok(model)
    }

    /// Model pumped at `STRONG_PUMP_RATIO * gamma_opt`.
    pub fn strong_pump(gamma_opt: f64, t_z: f64, p_return: f64) -> Result<Self> {
        Self::new(gamma_opt, t_z, p_return, STRONG_PUMP_RATIO * gamma_opt)
    }

    pub fn with_populations(mut self, populations: Populations) -> Result<Self> {
        self.populations = populations;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_opt.is_finite() && self.gamma_opt > 0.0) {
            return Err(Error::domain(format!("optical decay rate must be positive, got {}", self.gamma_opt)));
        }
        if !(self.t_z > 0.0) {
            return Err(Error::domain(format!("Zeeman lifetime must be positive, got {}", self.t_z)));
        }
        if !(0.0..=1.0).contains(&self.p_return) {
            return Err(Error::domain(format!("return probability must lie in [0, 1], got {}", self.p_return)));
        }
        if !(self.pump_rate.is_finite() && self.pump_rate >= 0.0) {
            return Err(Error::domain(format!("pump rate must be >= 0, got {}", self.pump_rate)));
        }
        let p = &self.populations;
        if [p.n1, p.n2, p.ne].iter().any(|&x| !(x >= 0.0)) || (p.sum() - 1.0).abs() > SUM_TOL {
            return Err(Error::domain("populations must be nonnegative and sum to 1"));
        }
        Ok(())
    }

    /// Per-level ground-state flip rate.
    pub fn spin_flip_rate(&self) -> f64 {
        0.5 / self.t_z
    }

    fn derivative(&self, s: &Populations) -> Populations {
        let (r, g, w, p) = (self.pump_rate, self.gamma_opt, self.spin_flip_rate(), self.p_return);
        let pump = r * (s.n1 - s.ne);
        let relax = w * (s.n2 - s.n1);
        Populations {
            n1: -pump + g * p * s.ne + relax,
            n2: g * (1.0 - p) * s.ne - relax,
            ne: pump - g * s.ne,
        }
    }

    /// Copy with the optical decay rate multiplied by `k` (and, for strong
    /// pumping, the pump rate scaled along with it).
    fn with_faster_decay(&self, k: f64) -> Result<Self> {
        Self::strong_pump(self.gamma_opt * k, self.t_z, self.p_return)
    }
}

/// Exact steady state of the rate equations.
pub fn steady_state(model: &PumpModel) -> Result<Populations> {
    model.validate()?;
    let (r, g, w) = (model.pump_rate, model.gamma_opt, model.spin_flip_rate());
    if r == 0.0 {
        return Ok(Populations::THERMAL);
    }
    let a = g * (1.0 - model.p_return);
    // Unnormalized solution with n1 = W (R + gamma).
    let n1 = w * (r + g);
    let ne = w * r;
    let n2 = n1 + a * r;
    let total = n1 + ne + n2;
    if total <= 0.0 {
        return Err(Error::domain(
            "steady state is not unique: no spin relaxation and no path into |2>",
        ));
    }
    Ok(Populations {
        n1: n1 / total,
        n2: n2 / total,
        ne: ne / total,
    })
}

/// Time series `(t, populations)` from fixed-step classical Runge-Kutta,
/// starting at `model.populations`.
pub fn integrate(model: &PumpModel, duration: f64, dt: f64) -> Result<Vec<(f64, Populations)>> {
    model.validate()?;
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::config(format!("duration must be >= 0, got {duration}")));
    }
    let mut fastest = model.gamma_opt.max(model.spin_flip_rate() * 2.0);
    if model.pump_rate > 0.0 {
        fastest = fastest.max(model.pump_rate);
    }
    let limit = 0.1 / fastest;
    if !(dt > 0.0 && dt < limit) {
        return Err(Error::config(format!(
            "step {dt} s is unstable; must be below {limit:e} s (a tenth of the fastest time scale)"
        )));
    }

    let steps = (duration / dt).ceil() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut state = model.populations;
    let mut t = 0.0;
    out.push((t, state));
    for i in 0..steps {
        let h = if i + 1 == steps { duration - t } else { dt };
        if h <= 0.0 {
            break;
        }
        let k1 = model.derivative(&state);
        let k2 = model.derivative(&state.axpy(h / 2.0, &k1));
        let k3 = model.derivative(&state.axpy(h / 2.0, &k2));
        let k4 = model.derivative(&state.axpy(h, &k3));
        state = Populations {
            n1: state.n1 + h / 6.0 * (k1.n1 + 2.0 * k2.n1 + 2.0 * k3.n1 + k4.n1),
            n2: state.n2 + h / 6.0 * (k1.n2 + 2.0 * k2.n2 + 2.0 * k3.n2 + k4.n2),
            ne: state.ne + h / 6.0 * (k1.ne + 2.0 * k2.ne + 2.0 * k3.ne + k4.ne),
        };
        t = if i + 1 == steps { duration } else { t + h };
        out.push((t, state));
    }
    Ok(out)
}

/// Largest deviation between the end of an integration and the steady state.
pub fn distance_to_steady_state(model: &PumpModel, state: &Populations) -> Result<f64> {
    Ok(steady_state(model)?.max_abs_diff(state))
}

fn strong_pump_efficiency(gamma_opt: f64, t_z: f64, p_return: f64) -> Result<f64> {
    Ok(steady_state(&PumpModel::strong_pump(gamma_opt, t_z, p_return)?)?.efficiency())
}

/// Return probability `p` at which the strong-pump efficiency equals
/// `eta_target`, found by bisection to 1e-9 or better.
pub fn calibrate_return_branching(eta_target: f64, gamma_opt: f64, t_z: f64) -> Result<f64> {
    let at_zero = strong_pump_efficiency(gamma_opt, t_z, 0.0)?;
    let at_one = strong_pump_efficiency(gamma_opt, t_z, 1.0)?;
    let tol = 1e-14;
    if (eta_target - at_zero).abs() <= tol {
        return Ok(0.0);
    }
    if (eta_target - at_one).abs() <= tol {
        return Ok(1.0);
    }
    if !(eta_target < at_zero && eta_target > at_one) {
        return Err(Error::domain(format!(
            "efficiency {eta_target} is not reachable; achievable range is [{at_one:.6}, {at_zero:.6}]"
        )));
    }
    // Efficiency falls as p rises.
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if strong_pump_efficiency(gamma_opt, t_z, mid)? > eta_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Strong-pump efficiency after shortening the optical lifetime by each
/// factor in `reduction_factors`.
pub fn efficiency_vs_purcell(model: &PumpModel, reduction_factors: &[f64]) -> Result<Vec<f64>> {
    model.validate()?;
    reduction_factors
        .iter()
        .map(|&k| {
            if !(k.is_finite() && k >= 1.0) {
                return Err(Error::domain(format!("reduction factor must be >= 1, got {k}")));
            }
            Ok(steady_state(&model.with_faster_decay(k)?)?.efficiency())
        })
        .collect()
}

/// `reduction_factor,eta` CSV.
pub fn efficiency_csv(factors: &[f64], etas: &[f64]) -> String {
    let mut out = String::from("reduction_factor,eta\n");
    for (k, eta) in factors.iter().zip(etas) {
        out.push_str(&format!("{k},{eta}\n"));
    }
    out
}
