//! Parameter tables, `key=value` config files and the merge of flags over
//! config over built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;

use clap::{Arg, ArgAction, ArgMatches, Command};
use serde_json::{json, Map, Value};

use crate::error::CliError;
use crate::units::{parse_number, parse_quantity, Dim};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Quantity(Dim),
    Number,
    Count,
    Text,
    Path,
    Switch,
}

/// One command input. `key` is the config key; the flag is the same name
/// with dashes.
#[derive(Debug, Clone, Copy)]
pub struct Param {
    pub key: &'static str,
    pub kind: Kind,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

pub const fn param(key: &'static str, kind: Kind, default: Option<&'static str>, help: &'static str) -> Param {
    Param { key, kind, default, help }
}

pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

pub fn add_args(mut cmd: Command, params: &[Param]) -> Command {
    for p in params {
        let mut help = p.help.to_string();
        if let Some(d) = p.default {
            help.push_str(&format!(" [default: {d}]"));
        }
        let arg = Arg::new(p.key).long(flag_name(p.key)).help(help);
        cmd = cmd.arg(match p.kind {
            Kind::Switch => arg.action(ArgAction::SetTrue),
            _ => arg.value_name(value_name(p.kind)).num_args(1).allow_hyphen_values(true),
        });
    }
    cmd
}

fn value_name(kind: Kind) -> &'static str {
    match kind {
        Kind::Quantity(Dim::Length) => "LENGTH",
        Kind::Quantity(Dim::Time) => "TIME",
        Kind::Quantity(Dim::Frequency) => "FREQ",
        Kind::Quantity(Dim::InverseLength) => "PER_LENGTH",
        Kind::Quantity(Dim::Density) => "DENSITY",
        Kind::Number => "NUM",
        Kind::Count => "N",
        Kind::Text => "TEXT",
        Kind::Path => "PATH",
        Kind::Switch => "",
    }
}

/// Raw `key=value` entries with their line numbers.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    entries: BTreeMap<String, (String, usize)>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("line {line_no}: expected key=value, found '{line}'")))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(CliError::Usage(format!("line {line_no}: empty key or value")));
            }
            if let Some((_, first)) = entries.get(&key) {
                return Err(CliError::Usage(format!(
                    "line {line_no}: duplicate key '{key}' (first set on line {first})"
                )));
            }
            entries.insert(key, (value, line_no));
        }
        Ok(Self { entries })
    }

    fn check_known(&self, params: &[Param]) -> Result<(), CliError> {
        for (key, (_, line)) in &self.entries {
            if !params.iter().any(|p| p.key == key) {
                return Err(CliError::Usage(format!("line {line}: unknown key '{key}' for this command")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Resolved {
    Number(f64),
    Count(u64),
    Text(String),
    Flag(bool),
}

/// Fully merged inputs of one command.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    values: BTreeMap<&'static str, Resolved>,
    units: BTreeMap<&'static str, &'static str>,
}

impl Inputs {
    pub fn resolve(params: &[Param], matches: &ArgMatches, config: &ConfigFile) -> Result<Self, CliError> {
        config.check_known(params)?;
        let mut inputs = Inputs::default();
        for p in params {
            let (raw, origin) = if p.kind == Kind::Switch {
                if matches.get_flag(p.key) {
                    (Some("true".to_string()), format!("--{}", flag_name(p.key)))
                } else if let Some((v, line)) = config.entries.get(p.key) {
                    (Some(v.clone()), format!("config line {line}"))
                } else {
                    (p.default.map(String::from), "default".into())
                }
            } else if let Some(v) = matches.get_one::<String>(p.key) {
                (Some(v.clone()), format!("--{}", flag_name(p.key)))
            } else if let Some((v, line)) = config.entries.get(p.key) {
                (Some(v.clone()), format!("config line {line}"))
            } else {
                (p.default.map(String::from), "default".into())
            };
            let Some(raw) = raw else { continue };
            let value = convert(p.kind, &raw).map_err(|msg| CliError::Usage(format!("{} ({origin}): {msg}", p.key)))?;
            if let Kind::Quantity(dim) = p.kind {
                inputs.units.insert(p.key, dim.si_unit());
            }
            inputs.values.insert(p.key, value);
        }
        Ok(inputs)
    }

    fn missing(key: &str) -> CliError {
        CliError::Usage(format!("missing required --{} (or config key '{key}')", flag_name(key)))
    }

    pub fn opt_f64(&self, key: &str) -> Option<f64> {
        match self.values.get(key) {
            Some(Resolved::Number(x)) => Some(*x),
            Some(Resolved::Count(n)) => Some(*n as f64),
            _ => None,
        }
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        self.opt_f64(key).ok_or_else(|| Self::missing(key))
    }

    pub fn opt_count(&self, key: &str) -> Option<u64> {
        match self.values.get(key) {
            Some(Resolved::Count(n)) => Some(*n),
            _ => None,
        }
    }

    pub fn count(&self, key: &str) -> Result<u64, CliError> {
        self.opt_count(key).ok_or_else(|| Self::missing(key))
    }

    pub fn opt_text(&self, key: &str) -> Option<&str> {
        match self.values.get(key) {
            Some(Resolved::Text(s)) => Some(s),
            _ => None,
        }
    }

    pub fn text(&self, key: &str) -> Result<&str, CliError> {
        self.opt_text(key).ok_or_else(|| Self::missing(key))
    }

    pub fn switch(&self, key: &str) -> bool {
        matches!(self.values.get(key), Some(Resolved::Flag(true)))
    }

    /// Resolved values in SI units, plus the unit of every quantity.
    pub fn echo(&self) -> Value {
        let values: Map<String, Value> = self
            .values
            .iter()
            .map(|(k, v)| {
                let v = match v {
                    Resolved::Number(x) => json!(x),
                    Resolved::Count(n) => json!(n),
                    Resolved::Text(s) => json!(s),
                    Resolved::Flag(b) => json!(b),
                };
                (k.to_string(), v)
            })
            .collect();
        json!({ "values": values, "units": self.units })
    }
}

fn convert(kind: Kind, raw: &str) -> Result<Resolved, String> {
    Ok(match kind {
        Kind::Quantity(dim) => Resolved::Number(parse_quantity(raw, dim)?),
        Kind::Number => Resolved::Number(parse_number(raw)?),
        Kind::Count => Resolved::Count(
            raw.trim()
                .parse()
                .map_err(|_| format!("'{raw}' is not a non-negative integer"))?,
        ),
        Kind::Text | Kind::Path => Resolved::Text(raw.trim().to_string()),
        Kind::Switch => Resolved::Flag(match raw.trim().to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" => true,
            "false" | "no" | "0" => false,
            _ => return Err(format!("'{raw}' is not a boolean")),
        }),
    })
}
