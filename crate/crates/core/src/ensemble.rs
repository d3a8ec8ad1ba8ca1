//! Per-ion Purcell enhancement statistics over a spatial mode, and the
//! photon-counting forward model that turns them into luminescence decays.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::cavity::FieldGrid;
use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Discrete distribution of Purcell factors over the ion ensemble.
///
/// `bin_edges[i]` is the representative enhancement of bin `i` (the
/// volume-weighted mean over its members, so binning leaves the mean
/// unchanged) and `weights[i]` the fraction of all ions in it. Ions outside
/// the coupled region are carried in `uncoupled_fraction` with `F = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct EnhancementDistribution {
    bin_edges: Vec<f64>,
    weights: Vec<f64>,
    uncoupled_fraction: f64,
}

#[derive(Deserialize)]
struct RawDistribution {
    bin_edges: Vec<f64>,
    weights: Vec<f64>,
    uncoupled_fraction: f64,
}

impl TryFrom<RawDistribution> for EnhancementDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        Self::new(raw.bin_edges, raw.weights, raw.uncoupled_fraction)
    }
}

impl EnhancementDistribution {
    pub fn new(bin_edges: Vec<f64>, weights: Vec<f64>, uncoupled_fraction: f64) -> Result<Self> {
        if bin_edges.len() != weights.len() {
            return Err(Error::domain("bin_edges and weights differ in length"));
        }
        if bin_edges.iter().any(|&f| !(f.is_finite() && f >= 0.0)) {
            return Err(Error::domain("enhancement values must be finite and >= 0"));
        }
        if bin_edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("bin_edges must be strictly increasing"));
        }
        if weights.iter().any(|&w| !(w.is_finite() && w >= 0.0)) {
            return Err(Error::domain("weights must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&uncoupled_fraction) {
            return Err(Error::domain(format!("uncoupled fraction must lie in [0, 1], got {uncoupled_fraction}")));
        }
        let total = uncoupled_fraction + weights.iter().sum::<f64>();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::domain(format!("fractions sum to {total}, not 1")));
        }
        Ok(Self {
            bin_edges,
            weights,
            uncoupled_fraction,
        })
    }

    /// Every ion at the same enhancement.
    pub fn degenerate(f: f64) -> Result<Self> {
        Self::new(vec![f], vec![1.0], 0.0)
    }

    /// Build from unsorted `(F, weight)` pairs; equal values are merged.
    pub fn from_points(points: &[(f64, f64)], uncoupled_fraction: f64) -> Result<Self> {
        let mut sorted = points.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut edges: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut weights: Vec<f64> = Vec::with_capacity(sorted.len());
        for (f, w) in sorted {
            if edges.last() == Some(&f) {
                *weights.last_mut().unwrap() += w;
            } else {
                edges.push(f);
                weights.push(w);
            }
        }
        Self::new(edges, weights, uncoupled_fraction)
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn uncoupled_fraction(&self) -> f64 {
        self.uncoupled_fraction
    }

    pub fn coupled_fraction(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn max_enhancement(&self) -> Option<f64> {
        self.bin_edges.last().copied()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain numeric struct")
    }
}

fn norm(d: &[f64; 3]) -> f64 {
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Histogram `F = f_max |E(r) . d|^2 / |E_max|^2` over the material cells of
/// `grid`, weighting each cell by its volume. `region` marks the coupled
/// cells; material cells outside it count as uncoupled. `None` couples every
/// material cell. Bins are linear on `[0, f_max]`.
pub fn enhancement_distribution(
    grid: &FieldGrid,
    dipole_axis: [f64; 3],
    f_max: f64,
    region: Option<&[bool]>,
    n_bins: usize,
) -> Result<EnhancementDistribution> {
    if !(f_max.is_finite() && f_max > 0.0) {
        return Err(Error::domain(format!("maximum Purcell factor must be positive, got {f_max}")));
    }
    if (norm(&dipole_axis) - 1.0).abs() > 1e-9 {
        return Err(Error::domain("dipole axis must be a unit vector"));
    }
    if n_bins == 0 {
        return Err(Error::domain("need at least one bin"));
    }
    if let Some(mask) = region {
        if mask.len() != grid.len() {
            return Err(Error::domain("region mask does not match the grid"));
        }
    }

    let field = grid.field();
    let material: Vec<usize> = (0..grid.len()).filter(|&i| grid.eps()[i] > 1.0).collect();
    if material.is_empty() {
        return Err(Error::domain("grid contains no material cells"));
    }
    let e_max_sq = material
        .iter()
        .map(|&i| crate::cavity::grid_norm_sqr(&field[i]))
        .fold(0.0, f64::max);
    if e_max_sq <= 0.0 {
        return Err(Error::domain("field vanishes inside the material"));
    }

    let mut counts = vec![0usize; n_bins];
    let mut sums = vec![0.0; n_bins];
    let mut uncoupled = 0usize;
    for &i in &material {
        if region.is_some_and(|mask| !mask[i]) {
            uncoupled += 1;
            continue;
        }
        let e = &field[i];
        let proj = e[0] * dipole_axis[0] + e[1] * dipole_axis[1] + e[2] * dipole_axis[2];
        let f = (f_max * proj * proj / e_max_sq).min(f_max);
        let bin = ((f / f_max * n_bins as f64) as usize).min(n_bins - 1);
        counts[bin] += 1;
        sums[bin] += f;
    }

    // Uniform cells, so volume weights reduce to counts.
    let total = material.len() as f64;
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    for (count, sum) in counts.into_iter().zip(sums) {
        if count > 0 {
            edges.push(sum / count as f64);
            weights.push(count as f64 / total);
        }
    }
    let uncoupled_fraction = uncoupled as f64 / total;
    // Absorb rounding so the fractions sum to 1.
    let coupled: f64 = weights.iter().sum();
    if coupled > 0.0 {
        let scale = (1.0 - uncoupled_fraction) / coupled;
        weights.iter_mut().for_each(|w| *w *= scale);
    }
    // Representative values of neighbouring bins can coincide when f clamps at f_max.
    let points: Vec<(f64, f64)> = edges.into_iter().zip(weights).collect();
    EnhancementDistribution::from_points(&points, uncoupled_fraction)
}

/// Mean Purcell factor over the coupled ions only.
pub fn average_enhancement(dist: &EnhancementDistribution) -> Result<f64> {
    let coupled = dist.coupled_fraction();
    if coupled <= 0.0 {
        return Err(Error::domain("every ion is uncoupled"));
    }
    let weighted: f64 = dist.bin_edges.iter().zip(&dist.weights).map(|(f, w)| f * w).sum();
    Ok(weighted / coupled)
}

/// Monte Carlo estimate of the coupled-ion mean with its standard error.
pub fn monte_carlo_average(dist: &EnhancementDistribution, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let coupled = dist.coupled_fraction();
    if coupled <= 0.0 {
        return Err(Error::domain("every ion is uncoupled"));
    }
    if samples < 2 {
        return Err(Error::domain("need at least two samples"));
    }
    let mut cumulative = Vec::with_capacity(dist.weights.len());
    let mut acc = 0.0;
    for w in &dist.weights {
        acc += w / coupled;
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let u: f64 = rng.random();
        let idx = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
        let f = dist.bin_edges[idx];
        sum += f;
        sum_sq += f * f;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// Time-binned photon counts. Poisson-sampled traces hold integer counts;
/// noise-free expectations are fractional.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayTrace {
    pub bin_width: f64,
    pub counts: Vec<f64>,
    /// Start of the first bin (s).
    pub t0: f64,
}

impl DecayTrace {
    pub fn new(bin_width: f64, counts: Vec<f64>, t0: f64) -> Result<Self> {
        if !(bin_width.is_finite() && bin_width > 0.0) {
            return Err(Error::domain(format!("bin width must be positive, got {bin_width}")));
        }
        if counts.iter().any(|&c| !(c.is_finite() && c >= 0.0)) {
            return Err(Error::domain("counts must be finite and >= 0"));
        }
        if !t0.is_finite() {
            return Err(Error::domain("trace start must be finite"));
        }
        Ok(Self { bin_width, counts, t0 })
    }

    /// Start time of each bin.
    pub fn times(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|i| self.t0 + i as f64 * self.bin_width).collect()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time_s,counts")?;
        for (t, c) in self.times().into_iter().zip(&self.counts) {
            writeln!(out, "{t:e},{c}")?;
        }
        out.flush()
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut times = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let n = i + 1;
            let line = line.map_err(|e| Error::parse(n, e.to_string()))?;
            let line = line.trim();
            if n == 1 {
                if line != "time_s,counts" {
                    return Err(Error::parse(n, format!("expected header 'time_s,counts', found '{line}'")));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (t, c) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(n, "expected two comma-separated columns"))?;
            let t: f64 = t.trim().parse().map_err(|_| Error::parse(n, format!("bad time '{t}'")))?;
            let c: f64 = c.trim().parse().map_err(|_| Error::parse(n, format!("bad count '{c}'")))?;
            if !t.is_finite() || !(c.is_finite() && c >= 0.0) {
                return Err(Error::parse(n, "time must be finite and counts >= 0"));
            }
            times.push(t);
            counts.push(c);
        }
        if times.len() < 2 {
            return Err(Error::parse(0, "trace needs at least two bins"));
        }
        let width = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        for (i, pair) in times.windows(2).enumerate() {
            if ((pair[1] - pair[0]) - width).abs() > 1e-6 * width {
                return Err(Error::parse(i + 3, "time bins are not uniformly spaced"));
            }
        }
        Self::new(width, counts, times[0])
    }
}

/// Excitation and detection settings for a pulsed luminescence measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Length of the rectangular excitation pulse (s).
    pub pulse_duration: f64,
    pub repetition_period: f64,
    /// Background count rate (1/s).
    pub dark_rate: f64,
    /// Expected signal counts per bin at the end of the pulse, per pulse.
    pub collection_scale: f64,
    pub rng_seed: u64,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pulse_duration > 0.0 && self.pulse_duration < self.repetition_period) {
            return Err(Error::config("pulse must be positive and shorter than the repetition period"));
        }
        if !(self.dark_rate >= 0.0 && self.collection_scale >= 0.0) {
            return Err(Error::config("dark rate and collection scale must be >= 0"));
        }
        Ok(())
    }

    /// Dark interval after each pulse (s).
    pub fn decay_window(&self) -> f64 {
        self.repetition_period - self.pulse_duration
    }
}

/// Emitting ensemble: Purcell statistics plus the branching ratio of the
/// cavity-coupled path and the bulk lifetime.
#[derive(Debug, Clone, PartialEq)]
pub struct Emitters {
    pub dist: EnhancementDistribution,
    pub beta: f64,
    pub tau_bulk: f64,
}

impl Emitters {
    pub fn new(dist: EnhancementDistribution, beta: f64, tau_bulk: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::domain(format!("branching ratio must lie in (0, 1], got {beta}")));
        }
        if !(tau_bulk.is_finite() && tau_bulk > 0.0) {
            return Err(Error::domain(format!("bulk lifetime must be positive, got {tau_bulk}")));
        }
        Ok(Self { dist, beta, tau_bulk })
    }

    /// Total decay rate of an ion with Purcell factor `f`.
    pub fn decay_rate(&self, f: f64) -> f64 {
        (1.0 + self.beta * f) / self.tau_bulk
    }
}

/// One exponential term of the luminescence: rate (1/s) and its share of the
/// intensity at the end of the pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayComponent {
    pub rate: f64,
    pub amplitude: f64,
}

/// Intensity components at the end of the excitation pulse, in the periodic
/// steady state of a weak rectangular pulse train.
///
/// A class of ions with population weight `w` and decay rate `G` has excited
/// population `(r w / G)(1 - e^{-G T_p}) / (1 - e^{-G T_rep})` when the pulse
/// ends and emits `G` times that. The pump rate `r` cancels in the
/// normalization, leaving amplitudes that sum to 1.
pub fn decay_components(emitters: &Emitters, det: &DetectorConfig) -> Result<Vec<DecayComponent>> {
    det.validate()?;
    let dist = &emitters.dist;
    let mut comps: Vec<DecayComponent> = Vec::with_capacity(dist.bin_edges.len() + 1);
    let mut push = |f: f64, w: f64| {
        if w > 0.0 {
            let rate = emitters.decay_rate(f);
            let fill = -(-rate * det.pulse_duration).exp_m1() / -(-rate * det.repetition_period).exp_m1();
            comps.push(DecayComponent { rate, amplitude: w * fill });
        }
    };
    push(0.0, dist.uncoupled_fraction);
    for (&f, &w) in dist.bin_edges.iter().zip(&dist.weights) {
        push(f, w);
    }
    let total: f64 = comps.iter().map(|c| c.amplitude).sum();
    if total <= 0.0 {
        return Err(Error::domain("distribution carries no weight"));
    }
    comps.iter_mut().for_each(|c| c.amplitude /= total);
    Ok(comps)
}

/// Binning of a synthesized trace, measured from the end of the pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceWindow {
    pub bin_width: f64,
    pub n_bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    /// Expected counts, no sampling.
    None,
    /// Poisson counts drawn from ChaCha8 seeded with `DetectorConfig::rng_seed`.
    Poisson,
}

/// Expected counts per bin accumulated over `n_pulses`.
pub fn expected_decay(emitters: &Emitters, det: &DetectorConfig, window: &TraceWindow, n_pulses: u32) -> Result<Vec<f64>> {
    let comps = decay_components(emitters, det)?;
    if !(window.bin_width > 0.0) || window.n_bins == 0 {
        return Err(Error::config("trace needs a positive bin width and at least one bin"));
    }
    let span = window.bin_width * window.n_bins as f64;
    if span > det.decay_window() * (1.0 + 1e-12) {
        return Err(Error::config(format!(
            "trace of {span} s does not fit in the {} s between pulses",
            det.decay_window()
        )));
    }
    let pulses = f64::from(n_pulses);
    let w = window.bin_width;
    Ok((0..window.n_bins)
        .map(|i| {
            let t1 = i as f64 * w;
            let signal: f64 = comps
                .iter()
                .map(|c| c.amplitude * (-c.rate * t1).exp() * -(-c.rate * w).exp_m1() / (c.rate * w))
                .sum();
            pulses * (det.collection_scale * signal + det.dark_rate * w)
        })
        .collect())
}

/// Luminescence decay recorded after the excitation pulse. `t0` of the
/// returned trace is the pulse end, measured from the pulse start.
pub fn synthesize_decay(
    emitters: &Emitters,
    det: &DetectorConfig,
    window: &TraceWindow,
    n_pulses: u32,
    noise: Noise,
) -> Result<DecayTrace> {
    let expected = expected_decay(emitters, det, window, n_pulses)?;
    let counts = match noise {
        Noise::None => expected,
        Noise::Poisson => {
            let mut rng = ChaCha8Rng::seed_from_u64(det.rng_seed);
            expected
                .into_iter()
                .map(|mean| {
                    if mean > 0.0 {
                        Poisson::new(mean).map(|p| p.sample(&mut rng)).map_err(|e| Error::domain(e.to_string()))
                    } else {
                        Ok(0.0)
                    }
                })
                .collect::<Result<_>>()?
        }
    };
    DecayTrace::new(window.bin_width, counts, det.pulse_duration)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::{surrogate_mode, SurrogateParams, TransverseProfile};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn uniform_grid(e: [f64; 3]) -> FieldGrid {
        FieldGrid::new([3, 3, 3], [1e-7; 3], vec![e; 27], vec![3.0; 27]).unwrap()
    }

    fn cos2_grid() -> FieldGrid {
        surrogate_mode(&SurrogateParams {
            envelope_sigma: f64::INFINITY,
            profile: TransverseProfile::Uniform,
            dims: [16, 14, 57],
            spacing: [100e-9, 100e-9, 50e-9],
            ..SurrogateParams::default()
        })
        .unwrap()
    }

    fn detector() -> DetectorConfig {
        DetectorConfig {
            pulse_duration: 20e-3,
            repetition_period: 75e-3,
            dark_rate: 0.0,
            collection_scale: 100.0,
            rng_seed: 7,
        }
    }

    #[test]
    fn aligned_uniform_field_is_degenerate() {
        let d = enhancement_distribution(&uniform_grid([0.0, 2.0, 0.0]), [0.0, 1.0, 0.0], 517.0, None, 64).unwrap();
        assert_eq!(d.bin_edges(), &[517.0]);
        assert_eq!(d.weights(), &[1.0]);
        assert_eq!(d.uncoupled_fraction(), 0.0);
    }

    #[test]
    fn orthogonal_field_has_no_enhancement() {
        let d = enhancement_distribution(&uniform_grid([1.0, 0.0, 0.0]), [0.0, 0.0, 1.0], 517.0, None, 64).unwrap();
        assert_eq!(d.bin_edges(), &[0.0]);
        assert_eq!(average_enhancement(&d).unwrap(), 0.0);
    }

    #[test]
    fn cosine_squared_mean_is_half() {
        let d = enhancement_distribution(&cos2_grid(), [1.0, 0.0, 0.0], 517.0, None, 64).unwrap();
        let mean = average_enhancement(&d).unwrap();
        assert!((mean / 517.0 - 0.5).abs() < 1e-6, "{mean}");
    }

    #[test]
    fn region_mask_moves_weight_to_uncoupled() {
        let grid = cos2_grid();
        let region = grid.central_region(0.5e-6);
        let d = enhancement_distribution(&grid, [1.0, 0.0, 0.0], 100.0, Some(&region), 32).unwrap();
        assert!(d.uncoupled_fraction() > 0.5);
        assert!((d.uncoupled_fraction() + d.coupled_fraction() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distribution_errors() {
        let vacuum = FieldGrid::new([2, 2, 2], [1e-7; 3], vec![[1.0, 0.0, 0.0]; 8], vec![1.0; 8]).unwrap();
        assert!(enhancement_distribution(&vacuum, [1.0, 0.0, 0.0], 10.0, None, 8).is_err());
        let g = uniform_grid([1.0, 0.0, 0.0]);
        assert!(enhancement_distribution(&g, [1.0, 1.0, 0.0], 10.0, None, 8).is_err());
        assert!(enhancement_distribution(&g, [1.0, 0.0, 0.0], 0.0, None, 8).is_err());
        let none = vec![false; g.len()];
        let all_uncoupled = enhancement_distribution(&g, [1.0, 0.0, 0.0], 10.0, Some(&none), 8).unwrap();
        assert!(average_enhancement(&all_uncoupled).is_err());
    }

    #[test]
    fn distribution_invariants_enforced() {
        assert!(EnhancementDistribution::new(vec![1.0, 1.0], vec![0.5, 0.5], 0.0).is_err());
        assert!(EnhancementDistribution::new(vec![1.0], vec![0.5], 0.4).is_err());
        assert!(EnhancementDistribution::new(vec![-1.0], vec![1.0], 0.0).is_err());
        assert!(EnhancementDistribution::new(vec![1.0], vec![-0.5], 1.5).is_err());
        let json = r#"{"bin_edges":[2.0],"weights":[0.3],"uncoupled_fraction":0.1}"#;
        assert!(serde_json::from_str::<EnhancementDistribution>(json).is_err());
    }

    #[test]
    fn json_round_trip() {
        let d = EnhancementDistribution::from_points(&[(40.0, 0.25), (3.0, 0.25)], 0.5).unwrap();
        let text = serde_json::to_string(&d).unwrap();
        assert!(text.contains("bin_edges"));
        let back: EnhancementDistribution = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn averages() {
        assert_eq!(average_enhancement(&EnhancementDistribution::degenerate(517.0).unwrap()).unwrap(), 517.0);
        let d = EnhancementDistribution::from_points(&[(0.0, 1.0 - 0.2244), (517.0, 0.2244)], 0.0).unwrap();
        let f = average_enhancement(&d).unwrap();
        assert!((f - 116.0).abs() < 0.05, "{f}");
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature() {
        let d = enhancement_distribution(&cos2_grid(), [1.0, 0.0, 0.0], 517.0, None, 64).unwrap();
        let exact = average_enhancement(&d).unwrap();
        let (mc, se) = monte_carlo_average(&d, 1_000_000, 11).unwrap();
        assert!((mc - exact).abs() < 3.0 * se, "{mc} +- {se} vs {exact}");
    }

    #[test]
    fn all_uncoupled_decays_at_bulk_rate() {
        let em = Emitters::new(EnhancementDistribution::new(vec![], vec![], 1.0).unwrap(), 0.11, 10.8e-3).unwrap();
        let window = TraceWindow { bin_width: 0.1e-3, n_bins: 400 };
        let trace = synthesize_decay(&em, &detector(), &window, 1, Noise::None).unwrap();
        let expected_ratio = (-0.1e-3 / 10.8e-3f64).exp();
        for pair in trace.counts.windows(2) {
            assert_relative_eq!(pair[1] / pair[0], expected_ratio, max_relative = 1e-12);
        }
        // first bin holds the bin-average of collection_scale * e^{-t/tau}
        let w: f64 = 0.1e-3 / 10.8e-3;
        assert_relative_eq!(trace.counts[0], 100.0 * -(-w).exp_m1() / w, max_relative = 1e-12);
        assert_eq!(trace.t0, 20e-3);
    }

    #[test]
    fn two_populations_give_two_time_constants() {
        let f_fast = (10.8 / 1.8 - 1.0) / 0.1144;
        let d = EnhancementDistribution::from_points(&[(0.0, 0.5), (f_fast, 0.5)], 0.0).unwrap();
        let em = Emitters::new(d, 0.1144, 10.8e-3).unwrap();
        let comps = decay_components(&em, &detector()).unwrap();
        assert_eq!(comps.len(), 2);
        assert_relative_eq!(1.0 / comps[0].rate, 10.8e-3, max_relative = 1e-12);
        assert_relative_eq!(1.0 / comps[1].rate, 1.8e-3, max_relative = 1e-12);
        assert_relative_eq!(comps.iter().map(|c| c.amplitude).sum::<f64>(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn equal_seeds_equal_traces() {
        let d = EnhancementDistribution::from_points(&[(0.0, 0.5), (44.4, 0.5)], 0.0).unwrap();
        let em = Emitters::new(d, 0.1144, 10.8e-3).unwrap();
        let det = DetectorConfig { dark_rate: 50.0, ..detector() };
        let window = TraceWindow { bin_width: 0.2e-3, n_bins: 250 };
        let a = synthesize_decay(&em, &det, &window, 10, Noise::Poisson).unwrap();
        let b = synthesize_decay(&em, &det, &window, 10, Noise::Poisson).unwrap();
        assert_eq!(a, b);
        assert!(a.counts.iter().all(|c| c.fract() == 0.0));
        let other = synthesize_decay(&em, &DetectorConfig { rng_seed: 8, ..det }, &window, 10, Noise::Poisson).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn trace_longer_than_dark_interval_rejected() {
        let em = Emitters::new(EnhancementDistribution::degenerate(10.0).unwrap(), 0.1, 10e-3).unwrap();
        let window = TraceWindow { bin_width: 1e-3, n_bins: 56 };
        assert!(matches!(synthesize_decay(&em, &detector(), &window, 1, Noise::None), Err(Error::Config(_))));
        let bad = DetectorConfig { pulse_duration: 80e-3, ..detector() };
        let ok_window = TraceWindow { bin_width: 1e-3, n_bins: 10 };
        assert!(synthesize_decay(&em, &bad, &ok_window, 1, Noise::None).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let trace = DecayTrace::new(2.5e-4, vec![10.0, 7.0, 3.0, 0.0], 0.02).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let back = DecayTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.counts, trace.counts);
        assert_relative_eq!(back.bin_width, trace.bin_width, max_relative = 1e-12);
        assert!(DecayTrace::read_csv("t,c\n0,1\n".as_bytes()).is_err());
        assert!(DecayTrace::read_csv("time_s,counts\n0,1\n1,-2\n".as_bytes()).is_err());
        assert!(DecayTrace::read_csv("time_s,counts\n0,1\n1,2\n3,1\n".as_bytes()).is_err());
    }

    fn arb_distribution() -> impl Strategy<Value = EnhancementDistribution> {
        (proptest::collection::vec((0.0f64..600.0, 0.01f64..1.0), 1..6), 0.0f64..0.9).prop_map(|(pts, unc)| {
            let total: f64 = pts.iter().map(|p| p.1).sum();
            let scaled: Vec<(f64, f64)> = pts.iter().map(|&(f, w)| (f, w / total * (1.0 - unc))).collect();
            let coupled: f64 = scaled.iter().map(|p| p.1).sum();
            EnhancementDistribution::from_points(&scaled, 1.0 - coupled).unwrap()
        })
    }

    proptest! {
        #[test]
        fn mean_bounded_by_max(d in arb_distribution()) {
            let mean = average_enhancement(&d).unwrap();
            let max = d.max_enhancement().unwrap();
            prop_assert!(mean <= max * (1.0 + 1e-12));
            if d.bin_edges().len() > 1 {
                prop_assert!(mean < max);
            }
        }

        #[test]
        fn expected_trace_decreasing_and_convex(d in arb_distribution(), beta in 0.01f64..1.0) {
            let em = Emitters::new(d, beta, 11e-3).unwrap();
            let window = TraceWindow { bin_width: 0.5e-3, n_bins: 100 };
            let c = expected_decay(&em, &detector(), &window, 1).unwrap();
            for w in c.windows(3) {
                prop_assert!(w[1] < w[0]);
                prop_assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-9 * w[0]);
            }
        }

        #[test]
        fn total_counts_linear_in_collection(d in arb_distribution(), k in 0.1f64..100.0) {
            let em = Emitters::new(d, 0.2, 11e-3).unwrap();
            let window = TraceWindow { bin_width: 0.5e-3, n_bins: 110 };
            let base: f64 = expected_decay(&em, &detector(), &window, 1).unwrap().iter().sum();
            let det = DetectorConfig { collection_scale: 100.0 * k, ..detector() };
            let scaled: f64 = expected_decay(&em, &det, &window, 1).unwrap().iter().sum();
            assert_relative_eq!(scaled, k * base, max_relative = 1e-12);
        }
    }
}
