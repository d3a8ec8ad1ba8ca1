//! Unit-suffixed quantities such as `1536nm`, `11.4ms` or `24.5/cm`.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Length,
    Time,
    /// Frequencies and rates; `hz` and `/s` are interchangeable.
    Frequency,
    InverseLength,
    Density,
}

impl Dim {
    /// SI unit used when echoing resolved values.
    pub fn si_unit(self) -> &'static str {
        match self {
            Dim::Length => "m",
            Dim::Time => "s",
            Dim::Frequency => "hz",
            Dim::InverseLength => "/m",
            Dim::Density => "/m3",
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dim::Length => "length",
            Dim::Time => "time",
            Dim::Frequency => "frequency",
            Dim::InverseLength => "inverse length",
            Dim::Density => "number density",
        })
    }
}

// Longest suffixes first so `ms` wins over `s` and `/cm3` over `/cm`. The
// last field is the power of ten to SI.
const UNITS: &[(&str, Dim, i32)] = &[
    ("/cm3", Dim::Density, 6),
    ("/m3", Dim::Density, 0),
    ("/cm", Dim::InverseLength, 2),
    ("/mm", Dim::InverseLength, 3),
    ("/m", Dim::InverseLength, 0),
    ("/s", Dim::Frequency, 0),
    ("thz", Dim::Frequency, 12),
    ("ghz", Dim::Frequency, 9),
    ("mhz", Dim::Frequency, 6),
    ("khz", Dim::Frequency, 3),
    ("hz", Dim::Frequency, 0),
    ("nm", Dim::Length, -9),
    ("um", Dim::Length, -6),
    ("mm", Dim::Length, -3),
    ("ns", Dim::Time, -9),
    ("us", Dim::Time, -6),
    ("ms", Dim::Time, -3),
    ("m", Dim::Length, 0),
    ("s", Dim::Time, 0),
];

/// Parses `value` as a quantity of dimension `dim` and returns it in SI units.
pub fn parse_quantity(value: &str, dim: Dim) -> Result<f64, String> {
    let text = value.trim().to_ascii_lowercase();
    let (number, unit) = UNITS
        .iter()
        .find_map(|&(suffix, d, exponent)| text.strip_suffix(suffix).map(|n| (n.trim(), (suffix, d, exponent))))
        .ok_or_else(|| format!("'{value}' needs a {dim} unit (e.g. {})", example(dim)))?;
    let (suffix, unit_dim, exponent) = unit;
    if unit_dim != dim {
        return Err(format!("'{value}': unit '{suffix}' is a {unit_dim}, expected a {dim}"));
    }
    let x: f64 = number.parse().map_err(|_| format!("'{value}' is not a number followed by a unit"))?;
    if !x.is_finite() {
        return Err(format!("'{value}' is not finite"));
    }
    // Dividing by an exact power of ten keeps `1536nm` at exactly 1.536e-6.
    let scale = 10f64.powi(exponent.abs());
    Ok(if exponent < 0 { x / scale } else { x * scale })
}

pub fn parse_number(value: &str) -> Result<f64, String> {
    let trimmed = value.trim();
    match trimmed.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ if trimmed.chars().last().is_some_and(|c| c.is_ascii_alphabetic() || c == '%') => {
            Err(format!("'{value}' must be a plain number without a unit"))
        }
        _ => Err(format!("'{value}' is not a finite number")),
    }
}

fn example(dim: Dim) -> &'static str {
    match dim {
        Dim::Length => "1536nm, 26um",
        Dim::Time => "11.4ms, 100us",
        Dim::Frequency => "510mhz, 90.9hz",
        Dim::InverseLength => "24.5/cm",
        Dim::Density => "3.75e18/cm3",
    }
}
