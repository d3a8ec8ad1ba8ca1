//! Levenberg-Marquardt least squares and the Lorentzian and exponential-decay
//! fitters built on it.

mod decay;
mod lm;
mod lorentzian;

pub use decay::{fit_decay, normalize_to_first_component, DecayFitSpec, DEGENERATE_TAU_RATIO, MIN_SIGNAL_BINS};
pub use lm::{
    nlls_fit, FitData, FitOptions, FitResult, FnModel, Model, Termination, GRADIENT_TOL, INITIAL_DAMPING,
    MAX_ITERATIONS, RSS_REL_TOL,
};
pub use lorentzian::{fit_lorentzian, lorentzian, Spectrum};
