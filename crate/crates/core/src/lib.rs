//! Toolkit for erbium ions coupled to nanophotonic cavities: cavity figures of
//! merit, per-ion enhancement statistics, transition rate chains, optical
//! spin pumping and the fitters used to read measured spectra and decays.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavity;
pub mod constants;
pub mod ensemble;
mod error;
pub mod fitting;
pub mod pumping;
pub mod reproduce;
pub mod spectroscopy;

pub use cavity::{CavityMode, FieldGrid, ModeVolume};
pub use constants::{OpticalFrequency, PhysConstants};
pub use ensemble::{DecayTrace, DetectorConfig, EnhancementDistribution};
pub use error::{Error, Result};
pub use fitting::{FitResult, Spectrum};
pub use pumping::{Populations, PumpModel};
pub use spectroscopy::{RadRateConvention, TransitionParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
