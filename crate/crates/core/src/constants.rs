//! Physical constants and the frequency/linewidth conversions shared by every
//! other module. Everything is stored in SI base units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CODATA 2018 values, 9 significant figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysConstants {
    /// Speed of light in vacuum (m/s).
    pub c: f64,
    /// Elementary charge (C).
    pub e: f64,
    /// Electron mass (kg).
    pub m_e: f64,
    /// Vacuum permittivity (F/m).
    pub eps0: f64,
}

impl PhysConstants {
    pub const CODATA2018: PhysConstants = PhysConstants {
        c: 299_792_458.0,
        e: 1.602_176_63e-19,
        m_e: 9.109_383_70e-31,
        eps0: 8.854_187_81e-12,
    };
}

impl Default for PhysConstants {
    fn default() -> Self {
        Self::CODATA2018
    }
}

/// Speed of light used by the conversions below.
pub const C: f64 = PhysConstants::CODATA2018.c;

/// An optical frequency in Hz. Always strictly positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct OpticalFrequency(f64);

impl OpticalFrequency {
    pub fn new(hz: f64) -> Result<Self> {
        if hz.is_finite() && hz > 0.0 {
            Ok(Self(hz))
        } else {
            Err(Error::domain(format!(
                "optical frequency must be positive and finite, got {hz}"
            )))
        }
    }

    pub fn hz(self) -> f64 {
        self.0
    }

    /// Vacuum wavelength in meters.
    pub fn wavelength(self) -> f64 {
        C / self.0
    }
}

impl TryFrom<f64> for OpticalFrequency {
    type Error = Error;

    fn try_from(hz: f64) -> Result<Self> {
        Self::new(hz)
    }
}

impl From<OpticalFrequency> for f64 {
    fn from(f: OpticalFrequency) -> f64 {
        f.0
    }
}

/// `c / lambda0` for a vacuum wavelength in meters.
pub fn freq_from_wavelength(lambda0: f64) -> Result<OpticalFrequency> {
    if !(lambda0.is_finite() && lambda0 > 0.0) {
        return Err(Error::domain(format!(
            "wavelength must be positive and finite, got {lambda0}"
        )));
    }
    OpticalFrequency::new(C / lambda0)
}

/// Full width at half maximum (Hz) of a resonance at `nu0` with quality factor `q`.
pub fn linewidth_from_q(nu0: OpticalFrequency, q: f64) -> Result<f64> {
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::domain(format!(
            "quality factor must be positive, got {q}"
        )));
    }
    Ok(nu0.hz() / q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn erbium_line_frequency() {
        let nu = freq_from_wavelength(1536e-9).unwrap();
        assert!((nu.hz() - 195.18e12).abs() < 0.01e12, "{}", nu.hz());
    }

    #[test]
    fn wavelength_equal_to_c_is_one_hertz() {
        assert_eq!(freq_from_wavelength(299_792_458.0).unwrap().hz(), 1.0);
    }

    #[test]
    fn frequency_scales_inversely() {
        let a = freq_from_wavelength(1.0).unwrap().hz();
        let b = freq_from_wavelength(2.0).unwrap().hz();
        assert_eq!(a / b, 2.0);
    }

    #[test]
    fn rejects_bad_wavelengths() {
        assert!(matches!(freq_from_wavelength(0.0), Err(Error::Domain(_))));
        assert!(matches!(freq_from_wavelength(-1e-6), Err(Error::Domain(_))));
        assert!(freq_from_wavelength(f64::NAN).is_err());
    }

    #[test]
    fn cavity_linewidths() {
        let nu = freq_from_wavelength(1536e-9).unwrap();
        let measured = linewidth_from_q(nu, 11_400.0).unwrap();
        assert!((measured - 17.1e9).abs() < 0.05e9, "{measured}");
        let simulated = linewidth_from_q(nu, 70_000.0).unwrap();
        assert!((simulated - 2.79e9).abs() < 0.01e9, "{simulated}");
        assert_eq!(linewidth_from_q(nu, 1.0).unwrap(), nu.hz());
        assert!(linewidth_from_q(nu, 0.0).is_err());
        assert!(linewidth_from_q(nu, -3.0).is_err());
    }

    proptest! {
        #[test]
        fn wavelength_round_trip(lambda in 1e-9f64..1e-3) {
            let back = freq_from_wavelength(lambda).unwrap().wavelength();
            assert_relative_eq!(back, lambda, max_relative = 1e-12);
        }

        #[test]
        fn strictly_decreasing(a in 1e-9f64..1e-3, ratio in 1.000001f64..10.0) {
            let fa = freq_from_wavelength(a).unwrap().hz();
            let fb = freq_from_wavelength(a * ratio).unwrap().hz();
            prop_assert!(fb < fa);
        }

        #[test]
        fn linewidth_times_q_is_frequency(nu in 1e12f64..1e16, q in 1.0f64..1e7) {
            let f = OpticalFrequency::new(nu).unwrap();
            assert_relative_eq!(linewidth_from_q(f, q).unwrap() * q, nu, max_relative = 1e-15);
        }
    }
}
