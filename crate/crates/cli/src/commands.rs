use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};

use ercav::cavity::{
    cavity_transmission, load_field_grid, mode_volume, purcell_factor, surrogate_mode, CavityMode, EnsembleLine,
    FieldGrid, SurrogateParams,
};
use ercav::constants::PhysConstants;
use ercav::ensemble::{
    average_enhancement, decay_components, enhancement_distribution, monte_carlo_average, synthesize_decay,
    DecayTrace, DetectorConfig, Emitters, EnhancementDistribution, Noise, TraceWindow,
};
use ercav::fitting::{fit_decay, fit_lorentzian, normalize_to_first_component, DecayFitSpec, Spectrum};
use ercav::pumping::{calibrate_return_branching, efficiency_csv, efficiency_vs_purcell, PumpModel};
use ercav::reproduce;
use ercav::spectroscopy::{
    beer_lambert, branching_ratio, confinement_for_attenuation, cooperativity_to_dip, dip_to_cooperativity,
    effective_purcell_from_lifetimes, oscillator_strength, purcell_lifetime, radiative_rate, saturated_cooperativity,
    DipoleAxis, RadRateConvention, TransitionParams,
};

use crate::error::CliError;
use crate::params::{param, Inputs, Kind, Param};
use crate::units::Dim;

use Kind::{Count, Number, Path as PathArg, Quantity, Switch, Text};

/// What a command produced: the `results` object of the report and, for
/// `reproduce-paper`, a table for the terminal and the failure if any.
pub struct Output {
    pub results: Value,
    pub table: Option<String>,
    pub failure: Option<String>,
}

impl From<Value> for Output {
    fn from(results: Value) -> Self {
        Self { results, table: None, failure: None }
    }
}

type Runner = fn(&Inputs) -> Result<Output, CliError>;

pub struct CommandDef {
    pub name: &'static str,
    pub about: &'static str,
    pub params: &'static [Param],
    pub run: Runner,
}

const LAMBDA: Param = param("lambda", Quantity(Dim::Length), Some("1536nm"), "vacuum wavelength");
const INDEX: Param = param("n", Number, Some("1.785"), "refractive index of the host");
const Q: Param = param("q", Number, Some("11400"), "loaded quality factor");
const VNORM: Param = param("vnorm", Number, Some("1.65"), "mode volume in (lambda/n)^3");
const CONVENTION: Param = param(
    "convention",
    Text,
    Some("local-field"),
    "medium correction: none, index-only, virtual-cavity, local-field",
);
const GRID_IN: Param = param("in", PathArg, None, "field grid file; the built-in surrogate mode when omitted");
const CSV: Param = param("csv", PathArg, None, "write the plot table as CSV to this path");

pub const COMMANDS: &[CommandDef] = &[
    CommandDef {
        name: "purcell",
        about: "Purcell factor of a cavity mode",
        params: &[Q, VNORM, param("overlap", Number, Some("1"), "dipole-field overlap in [0, 1]"), LAMBDA, INDEX],
        run: purcell,
    },
    CommandDef {
        name: "modevolume",
        about: "Mode volume of a field grid",
        params: &[GRID_IN, LAMBDA],
        run: modevolume,
    },
    CommandDef {
        name: "average-enhancement",
        about: "Distribution and mean of the per-ion Purcell factor over a field grid",
        params: &[
            GRID_IN,
            param("f_max", Number, Some("517"), "Purcell factor at the field maximum"),
            param("dipole", Text, Some("x"), "dipole axis: x, y, z or three comma-separated components"),
            param("bins", Count, Some("100"), "histogram bins"),
            param("region_half_length", Quantity(Dim::Length), None, "couple only ions with |z| below this"),
            param("mc_samples", Count, None, "also estimate the mean by Monte Carlo"),
            param("seed", Count, None, "RNG seed (required with --mc-samples)"),
        ],
        run: average,
    },
    CommandDef {
        name: "lifetime",
        about: "Cavity-shortened lifetime",
        params: &[
            param("tau_bulk", Quantity(Dim::Time), Some("11.4ms"), "lifetime without the cavity"),
            param("f_eff", Number, Some("116"), "effective Purcell factor"),
            param("beta", Number, Some("0.114"), "branching ratio of the cavity-coupled transition"),
        ],
        run: lifetime,
    },
    CommandDef {
        name: "invert-purcell",
        about: "Effective Purcell factor from two measured lifetimes",
        params: &[
            param("tau_ref", Quantity(Dim::Time), Some("11.4ms"), "reference (bulk) lifetime"),
            param("tau_cav", Quantity(Dim::Time), None, "lifetime in the cavity"),
            param("beta", Number, Some("0.10"), "branching ratio"),
        ],
        run: invert_purcell,
    },
    CommandDef {
        name: "transmission",
        about: "Transmission spectrum of the cavity, optionally loaded by an ion ensemble",
        params: &[
            Q,
            VNORM,
            LAMBDA,
            INDEX,
            param("c", Number, Some("0"), "ensemble cooperativity"),
            param("gamma_a", Quantity(Dim::Frequency), Some("510mhz"), "ensemble FWHM"),
            param("ion_detuning", Quantity(Dim::Frequency), Some("0hz"), "ensemble center minus cavity resonance"),
            param("span", Quantity(Dim::Frequency), None, "full scan width [default: 4 cavity linewidths]"),
            param("points", Count, Some("401"), "number of frequencies"),
            CSV,
        ],
        run: transmission,
    },
    CommandDef {
        name: "dip",
        about: "Convert between cooperativity and resonant transmission dip",
        params: &[
            param("c", Number, None, "cooperativity (give this or --dip)"),
            param("dip", Number, None, "fractional dip in [0, 1)"),
            param("saturation", Number, None, "saturation parameter I/I_sat applied to the cooperativity"),
        ],
        run: dip,
    },
    CommandDef {
        name: "attenuation",
        about: "Single-pass absorbed fraction, or the confinement matching a measured one",
        params: &[
            param("alpha", Quantity(Dim::InverseLength), Some("24.5/cm"), "peak absorption coefficient"),
            param("length", Quantity(Dim::Length), Some("26um"), "propagation length"),
            param("confinement", Number, Some("1"), "fraction of the mode inside the crystal"),
            param("target", Number, None, "measured absorbed fraction; solve for the confinement"),
        ],
        run: attenuation,
    },
    CommandDef {
        name: "oscillator-strength",
        about: "Oscillator strength from the absorption line",
        params: &[
            param("axis", Text, Some("d1"), "polarization axis for the tabulated defaults: d1 or d2"),
            param("alpha", Quantity(Dim::InverseLength), None, "peak absorption [default: tabulated for --axis]"),
            param("fwhm", Quantity(Dim::Frequency), None, "absorption FWHM [default: 510mhz]"),
            param("density", Quantity(Dim::Density), None, "ion density [default: 0.02% of Y sites]"),
            INDEX,
            CONVENTION,
        ],
        run: osc_strength,
    },
    CommandDef {
        name: "radrate",
        about: "Radiative rate of a transition of given oscillator strength",
        params: &[param("f", Number, Some("1.095e-7"), "oscillator strength"), LAMBDA, INDEX, CONVENTION],
        run: radrate,
    },
    CommandDef {
        name: "branching",
        about: "Branching ratio of one radiative path",
        params: &[
            param("gamma_rad", Quantity(Dim::Frequency), Some("10.03hz"), "radiative rate of the path"),
            param("tau", Quantity(Dim::Time), Some("11.4ms"), "total excited-state lifetime"),
        ],
        run: branching,
    },
    CommandDef {
        name: "spin-init",
        about: "Optical spin-initialization efficiency versus lifetime reduction",
        params: &[
            param("gamma_opt", Quantity(Dim::Frequency), Some("90.9hz"), "optical decay rate without the cavity"),
            param("tz", Quantity(Dim::Time), Some("100ms"), "Zeeman population lifetime"),
            param("p_return", Number, None, "probability of decaying back to the pumped level"),
            param("calibrate_eta", Number, None, "calibrate p_return to this efficiency without the cavity"),
            param("reduction", Text, Some("6"), "comma-separated lifetime reduction factors"),
            CSV,
        ],
        run: spin_init,
    },
    CommandDef {
        name: "synth-decay",
        about: "Synthesize a photon-counting decay trace",
        params: &[
            param("seed", Count, None, "RNG seed (required)"),
            param("dist", PathArg, None, "enhancement distribution JSON; two populations when omitted"),
            param("purcell", Number, Some("43.7"), "Purcell factor of the coupled population"),
            param("coupled_fraction", Number, Some("0.5"), "fraction of ions in the coupled population"),
            param("beta", Number, Some("0.1144"), "branching ratio"),
            param("tau_bulk", Quantity(Dim::Time), Some("10.8ms"), "uncoupled lifetime"),
            param("pulse", Quantity(Dim::Time), Some("20ms"), "excitation pulse length"),
            param("period", Quantity(Dim::Time), Some("100ms"), "pulse repetition period"),
            param("dark_rate", Quantity(Dim::Frequency), Some("50hz"), "background count rate"),
            param("collection_scale", Number, Some("10"), "signal counts per bin per pulse at the pulse end"),
            param("bin_width", Quantity(Dim::Time), Some("0.1ms"), "time bin"),
            param("bins", Count, Some("600"), "number of bins"),
            param("pulses", Count, Some("500"), "number of pulses accumulated"),
            param("noise", Text, Some("poisson"), "poisson or none"),
            CSV,
        ],
        run: synth_decay,
    },
    CommandDef {
        name: "fit-decay",
        about: "Fit one or two exponentials to a decay trace CSV",
        params: &[
            param("in", PathArg, None, "trace CSV with header time_s,counts"),
            param("components", Count, Some("2"), "1 or 2"),
            param("fixed_tau1", Quantity(Dim::Time), None, "freeze the first time constant"),
            param("no_background", Switch, Some("false"), "hold the background at zero"),
            param("normalize", Switch, Some("false"), "write counts scaled to unit bulk amplitude to --csv"),
            CSV,
        ],
        run: fit_decay_cmd,
    },
    CommandDef {
        name: "fit-lorentzian",
        about: "Fit a Lorentzian to a transmission spectrum CSV",
        params: &[param("in", PathArg, None, "spectrum CSV with header frequency_hz,transmission[,sigma]")],
        run: fit_lorentzian_cmd,
    },
    CommandDef {
        name: "reproduce-paper",
        about: "Run every reference scenario and print a pass/fail table",
        params: &[],
        run: reproduce_paper,
    },
];

fn convention(inputs: &Inputs) -> Result<RadRateConvention, CliError> {
    inputs
        .text("convention")?
        .parse()
        .map_err(|e: ercav::Error| CliError::Usage(e.to_string()))
}

fn mode(inputs: &Inputs) -> Result<CavityMode, CliError> {
    Ok(CavityMode::new(inputs.f64("lambda")?, inputs.f64("q")?, inputs.f64("vnorm")?, inputs.f64("n")?)?)
}

fn open(path: &str) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Usage(format!("{path}: file not found")),
        _ => CliError::Usage(format!("cannot open {path}: {e}")),
    })
}

fn write_csv(path: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Usage(format!("cannot create {path}: {e}")))?;
    let mut out = BufWriter::new(file);
    body(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Usage(format!("writing {path}: {e}")))
}

fn grid(inputs: &Inputs) -> Result<(FieldGrid, &str), CliError> {
    match inputs.opt_text("in") {
        Some(path) => {
            if !Path::new(path).exists() {
                return Err(CliError::Usage(format!("{path}: file not found")));
            }
            Ok((load_field_grid(path)?, path))
        }
        None => Ok((surrogate_mode(&SurrogateParams::default())?, "surrogate")),
    }
}

fn purcell(inputs: &Inputs) -> Result<Output, CliError> {
    let mode = mode(inputs)?;
    let f = purcell_factor(&mode, inputs.f64("overlap")?)?;
    Ok(json!({
        "F_P": f,
        "resonance_hz": mode.resonance().hz(),
        "linewidth_hz": mode.linewidth(),
        "mode_volume_m3": mode.physical_volume(),
    })
    .into())
}

fn modevolume(inputs: &Inputs) -> Result<Output, CliError> {
    let (grid, source) = grid(inputs)?;
    let v = mode_volume(&grid, inputs.f64("lambda")?)?;
    Ok(json!({
        "source": source,
        "dims": grid.dims(),
        "volume_m3": v.physical,
        "volume_norm": v.normalized,
        "n_at_max": v.n,
    })
    .into())
}

fn parse_axis(text: &str) -> Result<[f64; 3], CliError> {
    let v = match text.trim().to_ascii_lowercase().as_str() {
        "x" => [1.0, 0.0, 0.0],
        "y" => [0.0, 1.0, 0.0],
        "z" => [0.0, 0.0, 1.0],
        other => {
            let parts: Vec<f64> = other
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Usage(format!("dipole '{text}' is not x, y, z or three numbers")))?;
            let [a, b, c] = parts[..] else {
                return Err(CliError::Usage(format!("dipole '{text}' needs three components")));
            };
            let norm = (a * a + b * b + c * c).sqrt();
            if norm == 0.0 {
                return Err(CliError::Usage("dipole vector must be nonzero".into()));
            }
            [a / norm, b / norm, c / norm]
        }
    };
    Ok(v)
}

fn average(inputs: &Inputs) -> Result<Output, CliError> {
    let (grid, source) = grid(inputs)?;
    let region = inputs.opt_f64("region_half_length").map(|h| grid.central_region(h));
    let bins = inputs.count("bins")? as usize;
    let dist = enhancement_distribution(
        &grid,
        parse_axis(inputs.text("dipole")?)?,
        inputs.f64("f_max")?,
        region.as_deref(),
        bins,
    )?;
    let mean = average_enhancement(&dist)?;
    let mut results = json!({
        "source": source,
        "F_eff": mean,
        "coupled_fraction": dist.coupled_fraction(),
        "distribution": dist.to_json(),
    });
    if let Some(samples) = inputs.opt_count("mc_samples") {
        let seed = inputs
            .opt_count("seed")
            .ok_or_else(|| CliError::Usage("--mc-samples is randomized and requires --seed".into()))?;
        let (mc, stderr) = monte_carlo_average(&dist, samples as usize, seed)?;
        results["monte_carlo"] = json!({ "mean": mc, "stderr": stderr, "samples": samples });
    }
    Ok(results.into())
}

fn lifetime(inputs: &Inputs) -> Result<Output, CliError> {
    let tau_bulk = inputs.f64("tau_bulk")?;
    let tau = purcell_lifetime(tau_bulk, inputs.f64("f_eff")?, inputs.f64("beta")?)?;
    Ok(json!({ "tau_cav_s": tau, "reduction": tau_bulk / tau }).into())
}

fn invert_purcell(inputs: &Inputs) -> Result<Output, CliError> {
    let f = effective_purcell_from_lifetimes(inputs.f64("tau_ref")?, inputs.f64("tau_cav")?, inputs.f64("beta")?)?;
    Ok(json!({ "F_eff": f }).into())
}

fn transmission(inputs: &Inputs) -> Result<Output, CliError> {
    let mode = mode(inputs)?;
    let nu_c = mode.resonance().hz();
    let c = inputs.f64("c")?;
    let line = EnsembleLine {
        nu_a: nu_c + inputs.f64("ion_detuning")?,
        gamma_a: inputs.f64("gamma_a")?,
        cooperativity: c,
    };
    let ensemble = (c > 0.0).then_some(&line);
    let span = inputs.opt_f64("span").unwrap_or(4.0 * mode.linewidth());
    let points = inputs.count("points")? as usize;
    if points < 2 || span <= 0.0 {
        return Err(CliError::Usage("transmission needs --points >= 2 and a positive --span".into()));
    }
    let mut rows = Vec::with_capacity(points);
    for i in 0..points {
        let detuning = (i as f64 / (points - 1) as f64 - 0.5) * span;
        rows.push((detuning, cavity_transmission(nu_c + detuning, &mode, ensemble)?));
    }
    if let Some(path) = inputs.opt_text("csv") {
        write_csv(path, |out| {
            writeln!(out, "frequency_hz,transmission")?;
            rows.iter().try_for_each(|(d, t)| writeln!(out, "{:e},{t:e}", nu_c + d))
        })?;
    }
    let on_resonance = cavity_transmission(nu_c, &mode, ensemble)?;
    let min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    Ok(json!({
        "resonance_hz": nu_c,
        "linewidth_hz": mode.linewidth(),
        "transmission_on_resonance": on_resonance,
        "dip_on_resonance": 1.0 - on_resonance,
        "min_transmission": min,
        "points": points,
    })
    .into())
}

fn dip(inputs: &Inputs) -> Result<Output, CliError> {
    let saturation = inputs.opt_f64("saturation");
    match (inputs.opt_f64("c"), inputs.opt_f64("dip")) {
        (Some(c0), None) => {
            let c = match saturation {
                Some(s) => saturated_cooperativity(c0, s)?,
                None => c0,
            };
            Ok(json!({ "C": c, "dip": cooperativity_to_dip(c)? }).into())
        }
        (None, Some(d)) => {
            let c = dip_to_cooperativity(d)?;
            let mut results = json!({ "C": c, "dip": d });
            if let Some(s) = saturation {
                // The measured dip is saturated; report the unsaturated value.
                results["C_unsaturated"] = json!(c * (1.0 + s));
            }
            Ok(results.into())
        }
        _ => Err(CliError::Usage("give exactly one of --c and --dip".into())),
    }
}

fn attenuation(inputs: &Inputs) -> Result<Output, CliError> {
    let (alpha, length) = (inputs.f64("alpha")?, inputs.f64("length")?);
    let g = inputs.f64("confinement")?;
    let mut results = json!({
        "absorbed_fraction": beer_lambert(alpha, length, g)?,
        "absorbed_fraction_full_overlap": beer_lambert(alpha, length, 1.0)?,
    });
    if let Some(target) = inputs.opt_f64("target") {
        results["confinement_for_target"] = json!(confinement_for_attenuation(alpha, length, target)?);
    }
    Ok(results.into())
}

fn osc_strength(inputs: &Inputs) -> Result<Output, CliError> {
    let axis: DipoleAxis = inputs.text("axis")?.parse().map_err(|e: ercav::Error| CliError::Usage(e.to_string()))?;
    let table = TransitionParams::er_yso(axis)?;
    let alpha = inputs.opt_f64("alpha").unwrap_or(table.alpha_max);
    let fwhm = inputs.opt_f64("fwhm").unwrap_or(table.fwhm_abs);
    let density = inputs.opt_f64("density").unwrap_or(table.density);
    let n = inputs.f64("n")?;
    let consts = PhysConstants::default();
    let f = oscillator_strength(&consts, alpha, fwhm, density, n, convention(inputs)?)?;
    let all: serde_json::Map<String, Value> = RadRateConvention::ALL
        .into_iter()
        .map(|c| Ok((c.name().to_string(), json!(oscillator_strength(&consts, alpha, fwhm, density, n, c)?))))
        .collect::<Result<_, CliError>>()?;
    Ok(json!({
        "f": f,
        "alpha_per_m": alpha,
        "fwhm_hz": fwhm,
        "density_per_m3": density,
        "by_convention": all,
    })
    .into())
}

fn radrate(inputs: &Inputs) -> Result<Output, CliError> {
    let consts = PhysConstants::default();
    let (f, lambda, n) = (inputs.f64("f")?, inputs.f64("lambda")?, inputs.f64("n")?);
    let gamma = radiative_rate(&consts, f, lambda, n, convention(inputs)?)?;
    let all: serde_json::Map<String, Value> = RadRateConvention::ALL
        .into_iter()
        .map(|c| Ok((c.name().to_string(), json!(radiative_rate(&consts, f, lambda, n, c)?))))
        .collect::<Result<_, CliError>>()?;
    Ok(json!({ "gamma_rad_hz": gamma, "by_convention": all }).into())
}

fn branching(inputs: &Inputs) -> Result<Output, CliError> {
    Ok(json!({ "beta": branching_ratio(inputs.f64("gamma_rad")?, inputs.f64("tau")?)? }).into())
}

fn parse_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("'{s}' in '{text}' is not a number")))
        })
        .collect()
}

fn spin_init(inputs: &Inputs) -> Result<Output, CliError> {
    let (gamma, t_z) = (inputs.f64("gamma_opt")?, inputs.f64("tz")?);
    let p = match (inputs.opt_f64("p_return"), inputs.opt_f64("calibrate_eta")) {
        (Some(p), None) => p,
        (None, Some(eta)) => calibrate_return_branching(eta, gamma, t_z)?,
        (None, None) => return Err(CliError::Usage("give --p-return or --calibrate-eta".into())),
        (Some(_), Some(_)) => return Err(CliError::Usage("--p-return and --calibrate-eta are exclusive".into())),
    };
    let factors = parse_list(inputs.text("reduction")?)?;
    let model = PumpModel::strong_pump(gamma, t_z, p)?;
    let etas = efficiency_vs_purcell(&model, &factors)?;
    let baseline = efficiency_vs_purcell(&model, &[1.0])?[0];
    if let Some(path) = inputs.opt_text("csv") {
        let table = efficiency_csv(&factors, &etas);
        write_csv(path, |out| out.write_all(table.as_bytes()))?;
    }
    let eta = if etas.len() == 1 { json!(etas[0]) } else { json!(etas) };
    Ok(json!({ "p_return": p, "eta_without_cavity": baseline, "reduction": factors, "eta": eta }).into())
}

fn synth_decay(inputs: &Inputs) -> Result<Output, CliError> {
    let seed = inputs
        .opt_count("seed")
        .ok_or_else(|| CliError::Usage("synth-decay is randomized and requires --seed".into()))?;
    let dist = match inputs.opt_text("dist") {
        Some(path) => {
            let value: Value = serde_json::from_reader(open(path)?)
                .map_err(|e| CliError::Usage(format!("{path}: {e}")))?;
            // Accept either a bare distribution or an average-enhancement report.
            let body = value.pointer("/results/distribution").cloned().unwrap_or(value);
            serde_json::from_value::<EnhancementDistribution>(body)
                .map_err(|e| CliError::Usage(format!("{path}: not an enhancement distribution: {e}")))?
        }
        None => {
            let coupled = inputs.f64("coupled_fraction")?;
            EnhancementDistribution::new(vec![inputs.f64("purcell")?], vec![coupled], 1.0 - coupled)?
        }
    };
    let emitters = Emitters::new(dist, inputs.f64("beta")?, inputs.f64("tau_bulk")?)?;
    let det = DetectorConfig {
        pulse_duration: inputs.f64("pulse")?,
        repetition_period: inputs.f64("period")?,
        dark_rate: inputs.f64("dark_rate")?,
        collection_scale: inputs.f64("collection_scale")?,
        rng_seed: seed,
    };
    let window = TraceWindow { bin_width: inputs.f64("bin_width")?, n_bins: inputs.count("bins")? as usize };
    let noise = match inputs.text("noise")? {
        "poisson" => Noise::Poisson,
        "none" => Noise::None,
        other => return Err(CliError::Usage(format!("noise '{other}' is not poisson or none"))),
    };
    let pulses = u32::try_from(inputs.count("pulses")?).map_err(|_| CliError::Usage("--pulses is too large".into()))?;
    let trace = synthesize_decay(&emitters, &det, &window, pulses, noise)?;
    if let Some(path) = inputs.opt_text("csv") {
        write_csv(path, |out| trace.write_csv(out))?;
    }
    let components: Vec<Value> = decay_components(&emitters, &det)?
        .iter()
        .map(|c| json!({ "tau_s": 1.0 / c.rate, "amplitude": c.amplitude }))
        .collect();
    Ok(json!({
        "total_counts": trace.total(),
        "bins": trace.counts.len(),
        "t0_s": trace.t0,
        "components": components,
    })
    .into())
}

fn read_input<T>(inputs: &Inputs, read: impl FnOnce(BufReader<File>) -> ercav::Result<T>) -> Result<T, CliError> {
    let path = inputs.text("in")?;
    read(open(path)?).map_err(|e| match e {
        ercav::Error::Parse { .. } => CliError::Usage(format!("{path}: {e}")),
        other => other.into(),
    })
}

fn fit_decay_cmd(inputs: &Inputs) -> Result<Output, CliError> {
    let trace = read_input(inputs, DecayTrace::read_csv)?;
    let spec = DecayFitSpec {
        n_components: inputs.count("components")? as usize,
        fixed_tau1: inputs.opt_f64("fixed_tau1"),
        fit_background: !inputs.switch("no_background"),
    };
    let fit = fit_decay(&trace, &spec)?;
    if inputs.switch("normalize") {
        let path = inputs
            .opt_text("csv")
            .ok_or_else(|| CliError::Usage("--normalize writes a table and needs --csv".into()))?;
        let normalized = normalize_to_first_component(&trace, &fit)?;
        write_csv(path, |out| normalized.write_csv(out))?;
    }
    Ok(fit.report().into())
}

fn fit_lorentzian_cmd(inputs: &Inputs) -> Result<Output, CliError> {
    let spectrum = read_input(inputs, Spectrum::read_csv)?;
    let fit = fit_lorentzian(&spectrum)?;
    let mut report = fit.report();
    if let Some((q, q_err)) = fit.derived.get("Q") {
        report["derived"] = json!({ "Q": q, "Q_stderr": q_err });
    }
    Ok(report.into())
}

fn reproduce_paper(_: &Inputs) -> Result<Output, CliError> {
    let outcomes = reproduce::run_all();
    let mut table = String::new();
    for o in &outcomes {
        table.push_str(&format!(
            "{:>2}  {}  {:<26} {}\n",
            o.id,
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        ));
    }
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    let passed = outcomes.len() - failed.len();
    table.push_str(&format!("{passed}/{} criteria passed\n", outcomes.len()));
    Ok(Output {
        results: json!({ "criteria": outcomes, "passed": passed, "failed": failed }),
        table: Some(table),
        failure: (!failed.is_empty()).then(|| format!("criteria out of tolerance: {failed:?}")),
    })
}
