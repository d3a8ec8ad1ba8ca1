//! Analytic stand-in for the nanobeam cavity mode.
//!
//! The field is separable: an x-polarized standing wave along the beam axis
//! `cos(pi z / period) exp(-z^2 / 2 sigma^2)` times a transverse profile that
//! vanishes outside an equilateral triangular cross-section (flat face up,
//! apex down). It is not an electromagnetic eigenmode; its integrals are
//! known in closed form, which makes it useful for checking quadrature and
//! ensemble statistics.

use serde::{Deserialize, Serialize};

use super::grid::FieldGrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransverseProfile {
    /// `27 l1 l2 l3` in barycentric coordinates of the triangle: 1 at the
    /// centroid, 0 on the faces.
    Triangle,
    /// 1 everywhere inside the triangle.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    /// Side of the equilateral cross-section (m).
    pub beam_side: f64,
    /// Grating period (m); `|E|^2` repeats with this period along z.
    pub period: f64,
    pub n_mat: f64,
    /// Gaussian envelope width along z (m). `f64::INFINITY` disables it.
    pub envelope_sigma: f64,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub profile: TransverseProfile,
}

impl Default for SurrogateParams {
    /// 1.38 um triangular beam with a 570 nm period in YSO, with an envelope
    /// giving a mode volume close to 1.65 (lambda/n)^3.
    fn default() -> Self {
        Self {
            beam_side: 1.38e-6,
            period: 570e-9,
            n_mat: 1.785,
            envelope_sigma: 5.0e-6,
            dims: [31, 27, 527],
            spacing: [46e-9, 46e-9, 57e-9],
            profile: TransverseProfile::Triangle,
        }
    }
}

pub const MIN_CELLS_PER_PERIOD: f64 = 8.0;

pub fn surrogate_mode(p: &SurrogateParams) -> Result<FieldGrid> {
    let positive = |x: f64| x.is_finite() && x > 0.0;
    if !positive(p.beam_side) || !positive(p.period) {
        return Err(Error::config("beam side and period must be positive"));
    }
    if !(p.envelope_sigma > 0.0) {
        return Err(Error::config("envelope width must be positive"));
    }
    if !(p.n_mat.is_finite() && p.n_mat >= 1.0) {
        return Err(Error::config(format!("material index must be >= 1, got {}", p.n_mat)));
    }
    if p.spacing.iter().any(|&s| !positive(s)) {
        return Err(Error::config("grid spacings must be positive"));
    }
    if p.dims.iter().any(|&d| d < 2) {
        return Err(Error::config("every grid dimension must be >= 2"));
    }
    let cells_per_period = p.period / p.spacing[2];
    if cells_per_period < MIN_CELLS_PER_PERIOD {
        return Err(Error::config(format!(
            "grid resolves the period with {cells_per_period:.2} cells; at least {MIN_CELLS_PER_PERIOD} needed"
        )));
    }
    let side = p.beam_side;
    let height = side * 3f64.sqrt() / 2.0;
    if (p.dims[0] as f64) * p.spacing[0] < side || (p.dims[1] as f64) * p.spacing[1] < height {
        return Err(Error::config("grid is smaller than the beam cross-section"));
    }

    let [nx, ny, nz] = p.dims;
    let centered = |m: usize, n: usize, h: f64| (m as f64 - (n - 1) as f64 / 2.0) * h;

    // Transverse plane first; it is shared by every z slice.
    let mut transverse = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = centered(j, ny, p.spacing[1]);
        for i in 0..nx {
            let x = centered(i, nx, p.spacing[0]);
            transverse.push(triangle_coords(x, y, side, height).map(|l| match p.profile {
                TransverseProfile::Triangle => 27.0 * l[0] * l[1] * l[2],
                TransverseProfile::Uniform => 1.0,
            }));
        }
    }

    let eps_mat = p.n_mat * p.n_mat;
    let mut field = Vec::with_capacity(nx * ny * nz);
    let mut eps = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        let z = centered(k, nz, p.spacing[2]);
        let envelope = if p.envelope_sigma.is_infinite() {
            1.0
        } else {
            (-z * z / (2.0 * p.envelope_sigma * p.envelope_sigma)).exp()
        };
        let longitudinal = (std::f64::consts::PI * z / p.period).cos() * envelope;
        for t in &transverse {
            match t {
                Some(t) => {
                    field.push([longitudinal * t, 0.0, 0.0]);
                    eps.push(eps_mat);
                }
                None => {
                    field.push([0.0; 3]);
                    eps.push(1.0);
                }
            }
        }
    }
    FieldGrid::new(p.dims, p.spacing, field, eps).map_err(|e| match e {
        Error::Domain(msg) => Error::config(format!("surrogate grid invalid: {msg}")),
        other => other,
    })
}

/// Barycentric coordinates of `(x, y)` in the triangle with its top face at
/// `y = h/2` and apex at `(0, -h/2)`, or `None` outside.
fn triangle_coords(x: f64, y: f64, side: f64, height: f64) -> Option<[f64; 3]> {
    let from_apex = y + height / 2.0;
    let top = height / 2.0 - y;
    let right = (-height * x + side / 2.0 * from_apex) / side;
    let left = (height * x + side / 2.0 * from_apex) / side;
    if top < 0.0 || right < 0.0 || left < 0.0 {
        return None;
    }
    Some([top / height, right / height, left / height])
}
