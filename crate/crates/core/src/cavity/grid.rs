use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Real vector mode field and relative permittivity sampled at the centers of
/// a regular 3D grid of cells. Cell `(i, j, k)` is stored at
/// `i + nx * (j + ny * k)` (x fastest) and is centered at
/// `((i - (nx-1)/2) dx, (j - (ny-1)/2) dy, (k - (nz-1)/2) dz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    dims: [usize; 3],
    spacing: [f64; 3],
    field: Vec<[f64; 3]>,
    eps: Vec<f64>,
}

impl FieldGrid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], field: Vec<[f64; 3]>, eps: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::domain(format!("every grid dimension must be >= 2, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::domain(format!("grid spacings must be positive, got {spacing:?}")));
        }
        let cells = dims[0] * dims[1] * dims[2];
        if field.len() != cells || eps.len() != cells {
            return Err(Error::domain(format!(
                "expected {cells} cells, got {} field and {} permittivity values",
                field.len(),
                eps.len()
            )));
        }
        if let Some(idx) = field.iter().position(|e| e.iter().any(|c| !c.is_finite())) {
            return Err(Error::domain(format!("non-finite field in cell {idx}")));
        }
        if let Some(idx) = eps.iter().position(|&e| !(e.is_finite() && e >= 1.0)) {
            return Err(Error::domain(format!(
                "relative permittivity must be >= 1, got {} in cell {idx}",
                eps[idx]
            )));
        }
        let grid = Self { dims, spacing, field, eps };
        if grid.max_energy_density().0 <= 0.0 {
            return Err(Error::domain("field is zero everywhere"));
        }
        Ok(grid)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn field(&self) -> &[[f64; 3]] {
        &self.field
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn total_volume(&self) -> f64 {
        self.cell_volume() * self.len() as f64
    }

    /// Center of cell `idx` in meters.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let [nx, ny, _] = self.dims;
        let ijk = [idx % nx, (idx / nx) % ny, idx / (nx * ny)];
        let mut r = [0.0; 3];
        for a in 0..3 {
            r[a] = (ijk[a] as f64 - (self.dims[a] - 1) as f64 / 2.0) * self.spacing[a];
        }
        r
    }

    /// Cells whose permittivity exceeds vacuum.
    pub fn material_mask(&self) -> Vec<bool> {
        self.eps.iter().map(|&e| e > 1.0).collect()
    }

    /// Mask of material cells with `|z| <= half_length`.
    pub fn central_region(&self, half_length: f64) -> Vec<bool> {
        (0..self.len())
            .map(|i| self.eps[i] > 1.0 && self.position(i)[2].abs() <= half_length)
            .collect()
    }

    /// Largest `eps |E|^2` and the cell where it occurs (first on ties).
    pub(crate) fn max_energy_density(&self) -> (f64, usize) {
        let mut best = (0.0, 0);
        for (i, (e, &eps)) in self.field.iter().zip(&self.eps).enumerate() {
            let u = eps * norm_sqr(e);
            if u > best.0 {
                best = (u, i);
            }
        }
        best
    }
}

pub(crate) fn norm_sqr(e: &[f64; 3]) -> f64 {
    e[0] * e[0] + e[1] * e[1] + e[2] * e[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeVolume {
    /// Mode volume in m^3.
    pub physical: f64,
    /// Mode volume in units of `(lambda0 / n)^3`.
    pub normalized: f64,
    /// Refractive index at the energy-density maximum.
    pub n: f64,
}

/// Purcell mode volume `sum(eps |E|^2 dV) / max(eps |E|^2)`, evaluated with
/// the cell-centered (midpoint) rule, and its value in cubic material
/// wavelengths at `lambda0`.
pub fn mode_volume(grid: &FieldGrid, lambda0: f64) -> Result<ModeVolume> {
    if !(lambda0.is_finite() && lambda0 > 0.0) {
        return Err(Error::domain(format!("wavelength must be positive, got {lambda0}")));
    }
    let (peak, at) = grid.max_energy_density();
    if peak <= 0.0 {
        return Err(Error::domain("field is zero everywhere"));
    }
    let integral: f64 = grid
        .field
        .iter()
        .zip(&grid.eps)
        .map(|(e, &eps)| eps * norm_sqr(e))
        .sum::<f64>()
        * grid.cell_volume();
    let physical = integral / peak;
    let n = grid.eps[at].sqrt();
    Ok(ModeVolume {
        physical,
        normalized: physical / (lambda0 / n).powi(3),
        n,
    })
}

const MAGIC: &str = "FIELDGRID v1";

/// Write `grid` in the line-oriented text format with 17 significant digits,
/// which reproduces every finite `f64` exactly on reading.
pub fn write_field_grid<W: Write>(grid: &FieldGrid, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    let [nx, ny, nz] = grid.dims;
    writeln!(out, "{nx} {ny} {nz}")?;
    let [dx, dy, dz] = grid.spacing;
    writeln!(out, "{dx:.16e} {dy:.16e} {dz:.16e}")?;
    for (e, eps) in grid.field.iter().zip(&grid.eps) {
        writeln!(out, "{:.16e} {:.16e} {:.16e} {:.16e}", e[0], e[1], e[2], eps)?;
    }
    out.flush()
}

pub fn save_field_grid(grid: &FieldGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    write_field_grid(grid, BufWriter::new(file)).map_err(io_err)
}

pub fn read_field_grid<R: BufRead>(input: R) -> Result<FieldGrid> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(line))) => Ok((n, line)),
            Some((n, Err(e))) => Err(Error::parse(n, e.to_string())),
            None => Err(Error::parse(0, format!("unexpected end of file: missing {what}"))),
        }
    };

    let (n, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(Error::parse(n, format!("expected '{MAGIC}', found '{}'", magic.trim())));
    }

    let (n, line) = next("dimensions line")?;
    let dims: Vec<usize> = line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::parse(n, format!("bad dimension '{t}'"))))
        .collect::<Result<_>>()?;
    let dims: [usize; 3] = dims
        .try_into()
        .map_err(|_| Error::parse(n, "dimensions line needs exactly 3 integers"))?;

    let (n, line) = next("spacing line")?;
    let spacing = parse_floats::<3>(&line, n, "spacing")?;

    let cells = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::parse(2, "grid dimensions overflow"))?;
    let mut field = Vec::with_capacity(cells.min(1 << 24));
    let mut eps = Vec::with_capacity(cells.min(1 << 24));
    for cell in 0..cells {
        let (n, line) = next(&format!("field records (read {cell} of {cells})"))?;
        let [ex, ey, ez, e] = parse_floats::<4>(&line, n, "field record")?;
        if e < 1.0 {
            return Err(Error::parse(n, format!("relative permittivity {e} is below 1")));
        }
        field.push([ex, ey, ez]);
        eps.push(e);
    }
    if let Ok((n, line)) = next("") {
        if !line.trim().is_empty() {
            return Err(Error::parse(n, format!("trailing data after {cells} records")));
        }
    }
    FieldGrid::new(dims, spacing, field, eps).map_err(|e| match e {
        Error::Domain(msg) => Error::parse(0, msg),
        other => other,
    })
}

pub fn load_field_grid(path: impl AsRef<Path>) -> Result<FieldGrid> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    read_field_grid(BufReader::new(file))
}

fn parse_floats<const N: usize>(line: &str, n: usize, what: &str) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    let mut tokens = line.split_whitespace();
    for slot in out.iter_mut() {
        let t = tokens
            .next()
            .ok_or_else(|| Error::parse(n, format!("{what}: expected {N} values")))?;
        let v: f64 = t
            .parse()
            .map_err(|_| Error::parse(n, format!("{what}: cannot parse '{t}'")))?;
        if !v.is_finite() {
            return Err(Error::parse(n, format!("{what}: non-finite value '{t}'")));
        }
        *slot = v;
    }
    if tokens.next().is_some() {
        return Err(Error::parse(n, format!("{what}: expected {N} values")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn uniform(dims: [usize; 3], spacing: [f64; 3], e: [f64; 3], eps: f64) -> FieldGrid {
        let cells = dims.iter().product();
        FieldGrid::new(dims, spacing, vec![e; cells], vec![eps; cells]).unwrap()
    }

    #[test]
    fn uniform_box_volume() {
        let grid = uniform([10, 10, 10], [1e-7; 3], [0.0, 2.0, 0.0], 3.0);
        let v = mode_volume(&grid, 1536e-9).unwrap();
        assert_relative_eq!(v.physical, 1e-18, max_relative = 1e-12);
        assert_relative_eq!(v.n, 3f64.sqrt());
    }

    #[test]
    fn scale_invariance() {
        let dims = [6, 5, 7];
        let cells: usize = dims.iter().product();
        let field: Vec<[f64; 3]> = (0..cells).map(|i| [(i as f64).sin(), 0.3, (i as f64 * 0.7).cos()]).collect();
        let eps: Vec<f64> = (0..cells).map(|i| 1.0 + (i % 3) as f64).collect();
        let a = FieldGrid::new(dims, [1e-8, 2e-8, 3e-8], field.clone(), eps.clone()).unwrap();
        let scaled = field.iter().map(|e| [7.0 * e[0], 7.0 * e[1], 7.0 * e[2]]).collect();
        let b = FieldGrid::new(dims, [1e-8, 2e-8, 3e-8], scaled, eps).unwrap();
        let va = mode_volume(&a, 1e-6).unwrap();
        let vb = mode_volume(&b, 1e-6).unwrap();
        assert_relative_eq!(va.physical, vb.physical, max_relative = 1e-14);
        assert_relative_eq!(va.normalized, vb.normalized, max_relative = 1e-14);
    }

    #[test]
    fn midpoint_rule_converges_at_second_order() {
        // Gaussian field in a fixed 2 um box; odd cell counts put a sample on the peak.
        let volume_at = |n: usize| {
            let h = 2e-6 / n as f64;
            let sigma = 0.4e-6;
            let mut field = Vec::with_capacity(n * n * n);
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let c = |m: usize| (m as f64 - (n - 1) as f64 / 2.0) * h;
                        let r2 = c(i).powi(2) + c(j).powi(2) + c(k).powi(2);
                        field.push([(-r2 / (2.0 * sigma * sigma)).exp(), 0.0, 0.0]);
                    }
                }
            }
            let grid = FieldGrid::new([n; 3], [h; 3], field, vec![2.0; n * n * n]).unwrap();
            mode_volume(&grid, 1536e-9).unwrap().physical
        };
        let (v1, v2, v3) = (volume_at(11), volume_at(21), volume_at(41));
        let richardson = (v2 - v1).abs() / 3.0;
        assert!((v3 - v2).abs() <= richardson * 1.1, "{v1} {v2} {v3}");
    }

    #[test]
    fn volume_bounded_by_grid() {
        let dims = [4, 4, 4];
        let field: Vec<[f64; 3]> = (0..64).map(|i| [1.0 + (i % 5) as f64, 0.0, 0.0]).collect();
        let grid = FieldGrid::new(dims, [1e-7; 3], field, vec![1.0; 64]).unwrap();
        let v = mode_volume(&grid, 1e-6).unwrap();
        assert!(v.physical < grid.total_volume());
    }

    #[test]
    fn rejects_invalid_grids() {
        assert!(FieldGrid::new([1, 2, 2], [1.0; 3], vec![[1.0; 3]; 4], vec![1.0; 4]).is_err());
        assert!(FieldGrid::new([2, 2, 2], [1.0, 0.0, 1.0], vec![[1.0; 3]; 8], vec![1.0; 8]).is_err());
        assert!(FieldGrid::new([2, 2, 2], [1.0; 3], vec![[0.0; 3]; 8], vec![1.0; 8]).is_err());
        assert!(FieldGrid::new([2, 2, 2], [1.0; 3], vec![[1.0; 3]; 8], vec![0.5; 8]).is_err());
        assert!(FieldGrid::new([2, 2, 2], [1.0; 3], vec![[1.0; 3]; 7], vec![1.0; 8]).is_err());
        let mut f = vec![[1.0; 3]; 8];
        f[3][1] = f64::INFINITY;
        assert!(FieldGrid::new([2, 2, 2], [1.0; 3], f, vec![1.0; 8]).is_err());
    }

    #[test]
    fn cell_positions_are_centered() {
        let grid = uniform([3, 2, 5], [1.0, 2.0, 3.0], [1.0, 0.0, 0.0], 1.0);
        assert_eq!(grid.position(0), [-1.0, -1.0, -6.0]);
        assert_eq!(grid.position(grid.len() - 1), [1.0, 1.0, 6.0]);
        assert_eq!(grid.position(1 + 3 * (1 + 2 * 2)), [0.0, 1.0, 0.0]);
    }

    fn write_to_string(grid: &FieldGrid) -> String {
        let mut buf = Vec::new();
        write_field_grid(grid, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn truncated_file_names_missing_section() {
        let grid = uniform([2, 2, 2], [1e-7; 3], [1.0, 0.0, 0.0], 2.0);
        let text = write_to_string(&grid);
        let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        let err = read_field_grid(cut.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("field records"), "{err}");
        let err = read_field_grid("FIELDGRID v1\n2 2 2\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("spacing"), "{err}");
    }

    #[test]
    fn malformed_inputs() {
        let err = read_field_grid("FIELDGRID v2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = read_field_grid("FIELDGRID v1\n2 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let bad_value = "FIELDGRID v1\n2 2 2\n1 1 1\n1 0 0 NaN\n";
        let err = read_field_grid(bad_value.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn permittivity_below_one_is_rejected() {
        let grid = uniform([2, 2, 2], [1e-7; 3], [1.0, 0.0, 0.0], 2.0);
        let text = write_to_string(&grid).replacen("2.0000000000000000e0\n", "9.0000000000000000e-1\n", 1);
        let err = read_field_grid(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("below 1"), "{err}");
    }

    #[test]
    fn trailing_records_rejected() {
        let grid = uniform([2, 2, 2], [1e-7; 3], [1.0, 0.0, 0.0], 2.0);
        let text = write_to_string(&grid) + "1 2 3 4\n";
        assert!(read_field_grid(text.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip_is_exact(
            values in proptest::collection::vec((-1e3f64..1e3, -1e-3f64..1e-3, any::<i32>(), 1.0f64..20.0), 8),
            dx in 1e-9f64..1e-6,
        ) {
            let field = values.iter().map(|v| [v.0, v.1, v.2 as f64 * 1e-300]).collect();
            let eps = values.iter().map(|v| v.3).collect();
            let mut field: Vec<[f64; 3]> = field;
            field[0][0] = 1.0;
            let grid = FieldGrid::new([2, 2, 2], [dx, dx * 1.5, dx / 3.0], field, eps).unwrap();
            let back = read_field_grid(write_to_string(&grid).as_bytes()).unwrap();
            prop_assert_eq!(back, grid);
        }
    }
}
