//! Cavity figures of merit: Purcell factor, mode volume, resonance tuning by
//! gas deposition, and transmission spectra of a cavity with or without a
//! coupled ion ensemble.

mod grid;
mod surrogate;

pub(crate) use grid::norm_sqr as grid_norm_sqr;
pub use grid::{load_field_grid, mode_volume, read_field_grid, save_field_grid, write_field_grid, FieldGrid, ModeVolume};
pub use surrogate::{surrogate_mode, SurrogateParams, TransverseProfile};

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::constants::{freq_from_wavelength, OpticalFrequency, C};
use crate::error::{Error, Result};

/// A single resonant mode described by its wavelength, quality factor and
/// mode volume in units of the cubic material wavelength `(lambda0 / n)^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityMode {
    lambda0: f64,
    q: f64,
    v_norm: f64,
    n: f64,
}

impl CavityMode {
    pub fn new(lambda0: f64, q: f64, v_norm: f64, n: f64) -> Result<Self> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(lambda0) {
            return Err(Error::domain(format!("resonance wavelength must be positive, got {lambda0}")));
        }
        if !positive(q) {
            return Err(Error::domain(format!("quality factor must be positive, got {q}")));
        }
        if !positive(v_norm) {
            return Err(Error::domain(format!("normalized mode volume must be positive, got {v_norm}")));
        }
        if !(n.is_finite() && n >= 1.0) {
            return Err(Error::domain(format!("refractive index must be >= 1, got {n}")));
        }
        let mode = Self { lambda0, q, v_norm, n };
        if !(mode.physical_volume().is_finite() && mode.physical_volume() > 0.0) {
            return Err(Error::domain("physical mode volume is not finite"));
        }
        Ok(mode)
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn v_norm(&self) -> f64 {
        self.v_norm
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn resonance(&self) -> OpticalFrequency {
        freq_from_wavelength(self.lambda0).expect("validated wavelength")
    }

    /// Energy decay rate expressed as a FWHM in Hz.
    pub fn linewidth(&self) -> f64 {
        self.resonance().hz() / self.q
    }

    /// Mode volume in m^3.
    pub fn physical_volume(&self) -> f64 {
        self.v_norm * (self.lambda0 / self.n).powi(3)
    }
}

/// Purcell factor of an emitter whose dipole overlap with the mode is
/// `overlap = |E_ion . d|^2 / |E_max|^2`.
///
/// The mode volume enters in units of `(lambda/n)^3`, so the wavelength and
/// index cancel: `F = 3/(4 pi^2) * Q / V_norm * overlap`.
pub fn purcell_factor(mode: &CavityMode, overlap: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::domain(format!("dipole overlap must lie in [0, 1], got {overlap}")));
    }
    Ok(3.0 / (4.0 * PI * PI) * mode.q / mode.v_norm * overlap)
}

/// Solve `v_norm * (lambda0 / n)^3 = v_physical` for the index `n`.
pub fn index_for_volume(lambda0: f64, v_norm: f64, v_physical: f64) -> Result<f64> {
    if !(lambda0 > 0.0 && v_norm > 0.0 && v_physical > 0.0) {
        return Err(Error::domain("wavelength and volumes must be positive"));
    }
    Ok(lambda0 * (v_norm / v_physical).cbrt())
}

/// Accumulated gas deposition on the resonator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningState {
    /// Equivalent uniform layer thickness (m).
    pub deposited_thickness: f64,
    /// Resonance shift per unit thickness (Hz/m). Negative for a red shift.
    pub sensitivity: f64,
}

impl TuningState {
    pub fn new(sensitivity: f64) -> Self {
        Self {
            deposited_thickness: 0.0,
            sensitivity,
        }
    }

    pub fn deposit(&mut self, thickness: f64) -> Result<()> {
        if !(thickness.is_finite() && thickness >= 0.0) {
            return Err(Error::domain(format!("deposited thickness must be >= 0, got {thickness}")));
        }
        self.deposited_thickness += thickness;
        Ok(())
    }

    pub fn shift(&self) -> f64 {
        self.sensitivity * self.deposited_thickness
    }
}

/// Mode after deposition. First-order model: the resonance moves linearly with
/// thickness and Q is unchanged.
pub fn tuned_resonance(mode: &CavityMode, state: &TuningState) -> Result<CavityMode> {
    if state.deposited_thickness == 0.0 {
        return Ok(*mode);
    }
    let nu = OpticalFrequency::new(mode.resonance().hz() + state.shift())?;
    CavityMode::new(C / nu.hz(), mode.q, mode.v_norm, mode.n)
}

/// Thickness that brings `mode` onto `target` with the given sensitivity.
pub fn thickness_to_reach(mode: &CavityMode, target: OpticalFrequency, sensitivity: f64) -> Result<f64> {
    if sensitivity == 0.0 || !sensitivity.is_finite() {
        return Err(Error::domain("tuning sensitivity must be nonzero"));
    }
    let t = (target.hz() - mode.resonance().hz()) / sensitivity;
    if t < 0.0 {
        return Err(Error::domain(
            "target lies on the wrong side of the resonance; deposition only shifts one way",
        ));
    }
    Ok(t)
}

/// Homogeneously broadened effective ion line coupled to the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleLine {
    /// Center frequency (Hz).
    pub nu_a: f64,
    /// FWHM (Hz).
    pub gamma_a: f64,
    /// Cavity cooperativity.
    pub cooperativity: f64,
}

/// Relative power transmission of a symmetric two-sided cavity, optionally
/// loaded by an ion ensemble. The bare cavity transmits 1 on resonance.
pub fn cavity_transmission(nu: f64, mode: &CavityMode, ensemble: Option<&EnsembleLine>) -> Result<f64> {
    let half_kappa = mode.linewidth() / 2.0;
    let detuning = nu - mode.resonance().hz();
    let mut denom = Complex::new(half_kappa, detuning);
    if let Some(line) = ensemble {
        if !(line.cooperativity >= 0.0) {
            return Err(Error::domain(format!("cooperativity must be >= 0, got {}", line.cooperativity)));
        }
        if !(line.gamma_a > 0.0) {
            return Err(Error::domain(format!("ensemble linewidth must be positive, got {}", line.gamma_a)));
        }
        let half_gamma = line.gamma_a / 2.0;
        denom += line.cooperativity * half_kappa * half_gamma / Complex::new(half_gamma, nu - line.nu_a);
    }
    let t = half_kappa / denom;
    Ok(t.norm_sqr())
}

/// Transmission sampled at each frequency in `nus`.
pub fn transmission_spectrum(nus: &[f64], mode: &CavityMode, ensemble: Option<&EnsembleLine>) -> Result<Vec<f64>> {
    nus.iter().map(|&nu| cavity_transmission(nu, mode, ensemble)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn measured_mode() -> CavityMode {
        CavityMode::new(1536e-9, 11_400.0, 1.65, 1.785).unwrap()
    }

    #[test]
    fn purcell_at_antinode() {
        let f = purcell_factor(&measured_mode(), 1.0).unwrap();
        assert!((f / 517.0 - 1.0).abs() < 0.02, "{f}");
    }

    #[test]
    fn purcell_at_node_and_half_overlap() {
        let m = measured_mode();
        assert_eq!(purcell_factor(&m, 0.0).unwrap(), 0.0);
        let full = purcell_factor(&m, 1.0).unwrap();
        assert_relative_eq!(purcell_factor(&m, 0.5).unwrap(), full / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn purcell_rejects_bad_overlap() {
        assert!(purcell_factor(&measured_mode(), 1.01).is_err());
        assert!(purcell_factor(&measured_mode(), -0.1).is_err());
        assert!(purcell_factor(&measured_mode(), f64::NAN).is_err());
    }

    #[test]
    fn mode_constructor_validates() {
        assert!(CavityMode::new(1536e-9, 0.0, 1.65, 1.785).is_err());
        assert!(CavityMode::new(1536e-9, 100.0, -1.0, 1.785).is_err());
        assert!(CavityMode::new(1536e-9, 100.0, 1.0, 0.9).is_err());
        assert!(CavityMode::new(0.0, 100.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn index_from_mode_volume() {
        let n = index_for_volume(1536e-9, 1.65, 1.05e-18).unwrap();
        assert!((n - 1.785).abs() < 0.005, "{n}");
        let m = CavityMode::new(1536e-9, 1e4, 1.65, n).unwrap();
        assert_relative_eq!(m.physical_volume(), 1.05e-18, max_relative = 1e-12);
    }

    #[test]
    fn zero_deposit_is_identity() {
        let m = measured_mode();
        let state = TuningState::new(-1e18);
        assert_eq!(tuned_resonance(&m, &state).unwrap(), m);
    }

    #[test]
    fn deposits_add_linearly() {
        let m = measured_mode();
        let mut split = TuningState::new(-2e18);
        split.deposit(5e-9).unwrap();
        split.deposit(5e-9).unwrap();
        let mut once = TuningState::new(-2e18);
        once.deposit(10e-9).unwrap();
        let a = tuned_resonance(&m, &split).unwrap();
        let b = tuned_resonance(&m, &once).unwrap();
        assert_relative_eq!(a.resonance().hz(), b.resonance().hz(), max_relative = 1e-15);
        assert_eq!(a.q(), m.q());
        assert!(split.deposit(-1e-9).is_err());
    }

    #[test]
    fn three_step_approach_to_erbium_line() {
        // Cold cavity sits 120 GHz blue of the ion line; 1 GHz of red shift per nm.
        let target = freq_from_wavelength(1536e-9).unwrap();
        let start = CavityMode::new(C / (target.hz() + 120e9), 11_400.0, 1.65, 1.785).unwrap();
        let sensitivity = -1e9 / 1e-9;
        let total = thickness_to_reach(&start, target, sensitivity).unwrap();
        assert_relative_eq!(total, 120e-9, max_relative = 1e-6);

        let mut state = TuningState::new(sensitivity);
        let mut previous = f64::INFINITY;
        for step in [0.5, 0.3, 0.2] {
            state.deposit(step * total).unwrap();
            let nu = tuned_resonance(&start, &state).unwrap().resonance().hz();
            let gap = (nu - target.hz()).abs();
            assert!(gap < previous);
            previous = gap;
        }
        assert!(previous < 1e3, "residual detuning {previous} Hz");
        assert!(thickness_to_reach(&start, target, -sensitivity).is_err());
    }

    #[test]
    fn bare_cavity_is_unit_lorentzian() {
        let m = measured_mode();
        let nu_c = m.resonance().hz();
        let kappa = m.linewidth();
        assert_relative_eq!(cavity_transmission(nu_c, &m, None).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(cavity_transmission(nu_c + kappa / 2.0, &m, None).unwrap(), 0.5, max_relative = 1e-9);
        assert_relative_eq!(cavity_transmission(nu_c - kappa / 2.0, &m, None).unwrap(), 0.5, max_relative = 1e-9);
    }

    #[test]
    fn resonant_ensemble_dips() {
        let m = measured_mode();
        let nu_c = m.resonance().hz();
        for (c, dip) in [(0.291, 0.40), (0.155, 0.25)] {
            let line = EnsembleLine { nu_a: nu_c, gamma_a: 510e6, cooperativity: c };
            let t = cavity_transmission(nu_c, &m, Some(&line)).unwrap();
            assert!((1.0 - t - dip).abs() < 0.005, "C={c}: T={t}");
        }
    }

    #[test]
    fn ensemble_validation() {
        let m = measured_mode();
        let nu_c = m.resonance().hz();
        let bad_c = EnsembleLine { nu_a: nu_c, gamma_a: 1e6, cooperativity: -0.1 };
        assert!(cavity_transmission(nu_c, &m, Some(&bad_c)).is_err());
        let bad_g = EnsembleLine { nu_a: nu_c, gamma_a: 0.0, cooperativity: 0.1 };
        assert!(cavity_transmission(nu_c, &m, Some(&bad_g)).is_err());
    }

    proptest! {
        #[test]
        fn purcell_scaling(q in 10.0f64..1e6, v in 0.1f64..100.0, overlap in 0.0f64..1.0) {
            let m = CavityMode::new(1536e-9, q, v, 1.785).unwrap();
            let f = purcell_factor(&m, overlap).unwrap();
            let m2q = CavityMode::new(1536e-9, 2.0 * q, v, 1.785).unwrap();
            let m2v = CavityMode::new(1536e-9, q, 2.0 * v, 1.785).unwrap();
            assert_relative_eq!(purcell_factor(&m2q, overlap).unwrap(), 2.0 * f, max_relative = 1e-14);
            assert_relative_eq!(purcell_factor(&m2v, overlap).unwrap(), f / 2.0, max_relative = 1e-14);
        }

        #[test]
        fn bare_transmission_symmetric(delta in -1e12f64..1e12, q in 100.0f64..1e6) {
            let m = CavityMode::new(1536e-9, q, 1.65, 1.785).unwrap();
            let nu_c = m.resonance().hz();
            let up = cavity_transmission(nu_c + delta, &m, None).unwrap();
            let down = cavity_transmission(nu_c - delta, &m, None).unwrap();
            assert_relative_eq!(up, down, max_relative = 1e-6);
            prop_assert!((0.0..=1.0).contains(&up));
        }

        #[test]
        fn resonant_dip_is_inverse_square(c in 0.0f64..1e3, gamma in 1e6f64..1e11) {
            let m = measured_mode();
            let nu_c = m.resonance().hz();
            let line = EnsembleLine { nu_a: nu_c, gamma_a: gamma, cooperativity: c };
            let t = cavity_transmission(nu_c, &m, Some(&line)).unwrap();
            assert_relative_eq!(t, 1.0 / (1.0 + c).powi(2), max_relative = 1e-6);
        }
    }
}
