//! Scalar rate chain for a single optical transition: oscillator strength from
//! the absorption line, radiative rate of that path, branching ratio, the
//! Purcell-shortened lifetime and its inverse, plus the optical-depth and
//! cooperativity conversions used to read transmission dips.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constants::PhysConstants;
use crate::error::{Error, Result};

/// Yttrium number density in Y2SiO5 (both crystallographic sites), from the
/// monoclinic C2/c cell a = 10.41 A, b = 6.72 A, c = 12.49 A, beta = 102.65 deg
/// holding 16 Y atoms.
pub const Y2SIO5_Y_DENSITY: f64 = 1.877e28;

/// Nominal erbium substitution fraction of the crystal used here (0.02%).
pub const ER_DOPING: f64 = 2e-4;

/// Refractive index of YSO near 1.5 um.
pub const YSO_INDEX: f64 = 1.785;

/// Polarization axis of the probing field relative to the YSO crystal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DipoleAxis {
    D1,
    D2,
    #[serde(rename = "b")]
    B,
}

impl FromStr for DipoleAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d1" => Ok(Self::D1),
            "d2" => Ok(Self::D2),
            "b" => Ok(Self::B),
            _ => Err(Error::domain(format!("unknown dipole axis '{s}' (expected D1, D2 or b)"))),
        }
    }
}

/// Local-field and index correction applied to the vacuum radiative rate.
/// The oscillator strength extracted from absorption is divided by the same
/// factor, so each convention is self-consistent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadRateConvention {
    /// No medium correction.
    None,
    /// Index only: `n`.
    IndexOnly,
    /// Virtual-cavity (Lorentz) local field: `n ((n^2 + 2)/3)^2`.
    VirtualCavity,
    /// `n (n^2 + 2)/3`.
    #[default]
    LocalField,
}

impl RadRateConvention {
    pub const ALL: [RadRateConvention; 4] = [Self::None, Self::IndexOnly, Self::VirtualCavity, Self::LocalField];

    pub fn correction(self, n: f64) -> f64 {
        let lorentz = (n * n + 2.0) / 3.0;
        match self {
            Self::None => 1.0,
            Self::IndexOnly => n,
            Self::VirtualCavity => n * lorentz * lorentz,
            Self::LocalField => n * lorentz,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::IndexOnly => "index-only",
            Self::VirtualCavity => "virtual-cavity",
            Self::LocalField => "local-field",
        }
    }
}

impl fmt::Display for RadRateConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RadRateConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown convention '{s}'")))
    }
}

/// Parameters of the 1536 nm Z1 -> Y1 line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionParams {
    /// Vacuum wavelength (m).
    pub lambda0: f64,
    /// Total excited-state lifetime without a cavity (s).
    pub tau_bulk: f64,
    /// Peak absorption coefficient for the selected axis (1/m).
    pub alpha_max: f64,
    /// Absorption FWHM (Hz).
    pub fwhm_abs: f64,
    /// Inhomogeneous FWHM (Hz).
    pub inhom_fwhm: f64,
    pub n: f64,
    /// Active ion number density (1/m^3).
    pub density: f64,
    pub axis: DipoleAxis,
}

impl TransitionParams {
    /// Er:YSO at 0.02% doping, probed along `axis`.
    ///
    /// The D1 peak absorption is 24.5 /cm; D2 absorbs twice as strongly. No
    /// value is tabulated for the b axis, so that choice is an error.
    pub fn er_yso(axis: DipoleAxis) -> Result<Self> {
        let alpha_max = match axis {
            DipoleAxis::D1 => 2450.0,
            DipoleAxis::D2 => 4900.0,
            DipoleAxis::B => {
                return Err(Error::domain("no tabulated absorption coefficient for the b axis"));
            }
        };
        Ok(Self {
            lambda0: 1536e-9,
            tau_bulk: 11.4e-3,
            alpha_max,
            fwhm_abs: 510e6,
            inhom_fwhm: 500e6,
            n: YSO_INDEX,
            density: ER_DOPING * Y2SIO5_Y_DENSITY,
            axis,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("lambda0", self.lambda0),
            ("tau_bulk", self.tau_bulk),
            ("alpha_max", self.alpha_max),
            ("fwhm_abs", self.fwhm_abs),
            ("inhom_fwhm", self.inhom_fwhm),
            ("n", self.n),
            ("density", self.density),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(1e-6..=2e-6).contains(&self.lambda0) {
            return Err(Error::domain(format!(
                "wavelength {} m is outside the supported 1-2 um range",
                self.lambda0
            )));
        }
        Ok(())
    }

    pub fn oscillator_strength(&self, consts: &PhysConstants, conv: RadRateConvention) -> Result<f64> {
        self.validate()?;
        oscillator_strength(consts, self.alpha_max, self.fwhm_abs, self.density, self.n, conv)
    }
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive, got {v}")))
    }
}

/// Oscillator strength from a Lorentzian absorption line of peak `alpha_max`
/// (1/m) and FWHM `fwhm` (Hz) produced by `density` ions per m^3.
pub fn oscillator_strength(
    consts: &PhysConstants,
    alpha_max: f64,
    fwhm: f64,
    density: f64,
    n: f64,
    conv: RadRateConvention,
) -> Result<f64> {
    require_positive("absorption coefficient", alpha_max)?;
    require_positive("absorption linewidth", fwhm)?;
    require_positive("ion density", density)?;
    require_positive("refractive index", n)?;
    let integrated = PI / 2.0 * alpha_max * fwhm;
    let PhysConstants { c, e, m_e, eps0 } = *consts;
    Ok(4.0 * eps0 * m_e * c * n / (e * e) / density * integrated / conv.correction(n))
}

/// Spontaneous emission rate (1/s) on a single path of oscillator strength `f`.
pub fn radiative_rate(consts: &PhysConstants, f: f64, lambda0: f64, n: f64, conv: RadRateConvention) -> Result<f64> {
    require_positive("oscillator strength", f)?;
    require_positive("wavelength", lambda0)?;
    require_positive("refractive index", n)?;
    let PhysConstants { c, e, m_e, eps0 } = *consts;
    Ok(2.0 * PI * e * e * f / (eps0 * m_e * c * lambda0 * lambda0) * conv.correction(n))
}

const BRANCHING_SLACK: f64 = 1e-9;

/// Fraction of the total decay rate carried by a path of rate `gamma_rad`.
pub fn branching_ratio(gamma_rad: f64, tau_total: f64) -> Result<f64> {
    require_positive("radiative rate", gamma_rad)?;
    require_positive("total lifetime", tau_total)?;
    let beta = gamma_rad * tau_total;
    if beta > 1.0 + BRANCHING_SLACK {
        return Err(Error::domain(format!(
            "radiative rate {gamma_rad} Hz exceeds the total decay rate {} Hz",
            1.0 / tau_total
        )));
    }
    Ok(beta.min(1.0))
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("branching ratio must lie in (0, 1], got {beta}")))
    }
}

/// Lifetime when only the cavity-coupled path (weight `beta`) is enhanced by `f_eff`.
pub fn purcell_lifetime(tau_bulk: f64, f_eff: f64, beta: f64) -> Result<f64> {
    require_positive("bulk lifetime", tau_bulk)?;
    check_beta(beta)?;
    if !(f_eff.is_finite() && f_eff >= 0.0) {
        return Err(Error::domain(format!("Purcell factor must be >= 0, got {f_eff}")));
    }
    Ok(tau_bulk / (1.0 + beta * f_eff))
}

/// Purcell factor implied by a lifetime reduction from `tau_ref` to `tau_cav`.
pub fn effective_purcell_from_lifetimes(tau_ref: f64, tau_cav: f64, beta: f64) -> Result<f64> {
    require_positive("reference lifetime", tau_ref)?;
    require_positive("cavity lifetime", tau_cav)?;
    check_beta(beta)?;
    if tau_cav > tau_ref {
        return Err(Error::domain(format!(
            "cavity lifetime {tau_cav} s is longer than the reference {tau_ref} s"
        )));
    }
    Ok((tau_ref / tau_cav - 1.0) / beta)
}

/// Absorbed fraction `1 - exp(-confinement alpha L)`.
pub fn beer_lambert(alpha: f64, length: f64, confinement: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha >= 0.0 && length.is_finite() && length >= 0.0) {
        return Err(Error::domain("absorption coefficient and length must be >= 0"));
    }
    if !(confinement > 0.0 && confinement <= 1.0) {
        return Err(Error::domain(format!("confinement must lie in (0, 1], got {confinement}")));
    }
    Ok(-(-confinement * alpha * length).exp_m1())
}

/// Confinement factor that makes `beer_lambert(alpha, length, .)` equal `absorbed`.
pub fn confinement_for_attenuation(alpha: f64, length: f64, absorbed: f64) -> Result<f64> {
    require_positive("absorption coefficient", alpha)?;
    require_positive("length", length)?;
    if !(absorbed > 0.0 && absorbed < 1.0) {
        return Err(Error::domain(format!("absorbed fraction must lie in (0, 1), got {absorbed}")));
    }
    let g = -(-absorbed).ln_1p() / (alpha * length);
    if g > 1.0 {
        return Err(Error::domain(format!(
            "{absorbed} exceeds the full-overlap attenuation {}",
            beer_lambert(alpha, length, 1.0)?
        )));
    }
    Ok(g)
}

/// Fractional on-resonance transmission dip produced by cooperativity `c`.
pub fn cooperativity_to_dip(c: f64) -> Result<f64> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::domain(format!("cooperativity must be >= 0, got {c}")));
    }
    Ok(1.0 - 1.0 / ((1.0 + c) * (1.0 + c)))
}

pub fn dip_to_cooperativity(dip: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&dip) {
        return Err(Error::domain(format!("dip must lie in [0, 1), got {dip}")));
    }
    Ok(1.0 / (1.0 - dip).sqrt() - 1.0)
}

/// Homogeneous two-level saturation of the ensemble absorption.
pub fn saturated_cooperativity(c0: f64, s: f64) -> Result<f64> {
    if !(c0 >= 0.0 && s >= 0.0) {
        return Err(Error::domain("cooperativity and saturation parameter must be >= 0"));
    }
    if s.is_infinite() {
        return Ok(0.0);
    }
    Ok(c0 / (1.0 + s))
}

/// Saturation parameter that reduces `c0` to `c`.
pub fn saturation_parameter(c0: f64, c: f64) -> Result<f64> {
    if !(c > 0.0 && c <= c0) {
        return Err(Error::domain(format!("need 0 < C <= C0, got C = {c}, C0 = {c0}")));
    }
    Ok(c0 / c - 1.0)
}

/// JSON record for a single computed quantity.
#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub quantity: &'static str,
    pub inputs: serde_json::Map<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convention: Option<RadRateConvention>,
    pub value: f64,
    pub units: &'static str,
}
