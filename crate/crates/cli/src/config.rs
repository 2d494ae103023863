//! INI-style run configuration.
//!
//! ```text
//! [beam]
//! w0 = 1.7 mm
//! power = 150 mW
//! detuning_nm = 1.0
//! ell = 1
//! rc_over_w0 = 0.79
//! ```
//!
//! Lengths accept `m`, `mm`, `um`, `nm`; powers `W`, `mW`. A bare number is
//! taken in SI units. Keys whose name carries a unit (`ramp_ms`,
//! `temperature_uK`) take bare numbers in that unit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Length,
    Power,
    Float,
    Int,
    Bool,
    Text,
    IntList,
    /// Floats, `inf` allowed.
    FloatList,
    TextList,
}

struct KeySpec {
    section: &'static str,
    key: &'static str,
    kind: Kind,
    default: Option<&'static str>,
}

const fn k(section: &'static str, key: &'static str, kind: Kind, default: Option<&'static str>) -> KeySpec {
    KeySpec { section, key, kind, default }
}

const SCHEMA: &[KeySpec] = &[
    k("beam", "w0", Kind::Length, None),
    k("beam", "power", Kind::Power, None),
    k("beam", "detuning_nm", Kind::Float, None),
    k("beam", "wavelength", Kind::Length, None),
    k("beam", "ell", Kind::IntList, None),
    k("beam", "rc_over_w0", Kind::FloatList, Some("inf")),
    k("optics", "f", Kind::Length, Some("215 mm")),
    k("optics", "grid_n", Kind::Int, Some("1024")),
    k("optics", "grid_extent", Kind::Length, Some("16 mm")),
    k("optics", "z_span", Kind::Length, Some("10 mm")),
    k("optics", "n_planes", Kind::Int, Some("201")),
    k("optics", "focal_n", Kind::Int, Some("512")),
    k("optics", "focal_pitch", Kind::Length, Some("1 um")),
    k("optics", "p_max", Kind::Int, Some("5")),
    k("atoms", "n", Kind::Int, Some("4000")),
    k("atoms", "sigma", Kind::Length, Some("250 um")),
    k("atoms", "temperature_uK", Kind::Float, Some("5")),
    k("atoms", "seed", Kind::Int, Some("1")),
    k("atoms", "gravity", Kind::Bool, Some("true")),
    k("schedule", "ramp_ms", Kind::Float, Some("5")),
    k("schedule", "duration_ms", Kind::Float, Some("1500")),
    k("schedule", "dt_us", Kind::Float, Some("10")),
    k("schedule", "displacement_mm", Kind::Float, Some("0")),
    k("schedule", "record_ms", Kind::Float, Some("5")),
    k("schedule", "snapshot_ms", Kind::FloatList, Some("")),
    k("schedule", "flips", Kind::Bool, Some("true")),
    k("schedule", "recoil_kicks", Kind::Bool, Some("false")),
    k("fit", "input", Kind::Text, None),
    k("fit", "model", Kind::Text, Some("both")),
    k("fit", "chirp_form", Kind::Text, Some("direct")),
    k("fit", "start_ms", Kind::Float, Some("20")),
    k("output", "directory", Kind::Text, Some("out")),
    k("output", "formats", Kind::TextList, Some("csv,pgm,raw")),
    k("output", "image_pixel", Kind::Length, Some("2 um")),
    k("output", "image_size", Kind::Int, Some("128")),
];

/// Configuration problem; `line` is 1-based when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: String,
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.origin, l, self.message),
            None => write!(f, "{}: {}", self.origin, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    raw: String,
    line: Option<usize>,
}

/// Parsed configuration. Values are validated against the schema on load;
/// typed getters convert to SI.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    origin: String,
    entries: BTreeMap<(String, String), Entry>,
}

fn spec(section: &str, key: &str) -> Option<&'static KeySpec> {
    SCHEMA.iter().find(|s| s.section == section && s.key == key)
}

fn unit_factor(kind: Kind, unit: &str) -> Option<f64> {
    match (kind, unit) {
        (Kind::Length, "m") => Some(1.0),
        (Kind::Length, "mm") => Some(1e-3),
        (Kind::Length, "um" | "µm") => Some(1e-6),
        (Kind::Length, "nm") => Some(1e-9),
        (Kind::Power, "W") => Some(1.0),
        (Kind::Power, "mW") => Some(1e-3),
        _ => None,
    }
}

fn parse_quantity(kind: Kind, raw: &str) -> Result<f64, String> {
    let raw = raw.trim();
    let split = raw.trim_end_matches(|c: char| c.is_alphabetic()).len();
    let (num, unit) = raw.split_at(split);
    let v: f64 = num.trim().parse().map_err(|_| format!("`{raw}` is not a number"))?;
    let unit = unit.trim();
    let factor = if unit.is_empty() {
        1.0
    } else {
        unit_factor(kind, unit).ok_or_else(|| format!("unit `{unit}` not accepted here"))?
    };
    if !v.is_finite() {
        return Err(format!("`{raw}` is not finite"));
    }
    Ok(v * factor)
}

fn parse_float(raw: &str) -> Result<f64, String> {
    match raw.trim() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        s => s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("`{s}` is not a number")),
    }
}

fn split_list(raw: &str) -> impl Iterator<Item = &str> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn check(kind: Kind, raw: &str) -> Result<(), String> {
    match kind {
        Kind::Length | Kind::Power => parse_quantity(kind, raw).map(|_| ()),
        Kind::Float => parse_float(raw).and_then(|v| if v.is_finite() { Ok(()) } else { Err("must be finite".into()) }),
        Kind::Int => raw.trim().parse::<i64>().map(|_| ()).map_err(|_| format!("`{}` is not an integer", raw.trim())),
        Kind::Bool => match raw.trim() {
            "true" | "false" => Ok(()),
            s => Err(format!("`{s}` is not true/false")),
        },
        Kind::Text => Ok(()),
        Kind::TextList => Ok(()),
        Kind::IntList => split_list(raw)
            .map(|s| s.parse::<i64>().map(|_| ()).map_err(|_| format!("`{s}` is not an integer")))
            .collect(),
        Kind::FloatList => split_list(raw).map(|s| parse_float(s).map(|_| ())).collect(),
    }
}

impl RunConfig {
    /// Parses INI text. `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let err = |line: usize, message: String| ConfigError { origin: origin.into(), line: Some(line), message };
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        for (i, raw_line) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw_line.split(['#', ';']).next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| err(line, "unterminated section header".into()))?.trim();
                if !SCHEMA.iter().any(|s| s.section == name) {
                    return Err(err(line, format!("unknown section `[{name}]`")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| err(line, format!("expected `key = value`, found `{content}`")))?;
            let key = key.trim();
            let sec = section.as_deref().ok_or_else(|| err(line, format!("key `{key}` appears before any section")))?;
            let spec = spec(sec, key).ok_or_else(|| err(line, format!("unknown key `{sec}.{key}`")))?;
            check(spec.kind, value).map_err(|m| err(line, format!("`{sec}.{key}`: {m}")))?;
            let slot = (sec.to_string(), key.to_string());
            if entries.contains_key(&slot) {
                return Err(err(line, format!("duplicate key `{sec}.{key}`")));
            }
            entries.insert(slot, Entry { raw: value.trim().to_string(), line: Some(line) });
        }
        let cfg = Self { origin: origin.into(), entries };
        if let (Some(_), Some(w)) = (cfg.entry("beam", "detuning_nm"), cfg.entry("beam", "wavelength")) {
            return Err(err(w.line.unwrap_or(0), "give either `beam.detuning_nm` or `beam.wavelength`, not both".into()));
        }
        Ok(cfg)
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError { origin: origin.clone(), line: None, message: e.to_string() })?;
        Self::parse(&text, &origin)
    }

    fn error(&self, line: Option<usize>, message: String) -> ConfigError {
        ConfigError { origin: self.origin.clone(), line, message }
    }

    fn raw(&self, section: &str, key: &str) -> Result<(&str, Option<usize>), ConfigError> {
        if let Some(e) = self.entries.get(&(section.to_string(), key.to_string())) {
            return Ok((&e.raw, e.line));
        }
        match spec(section, key).and_then(|s| s.default) {
            Some(d) => Ok((d, None)),
            None => Err(self.error(None, format!("missing required key `{section}.{key}`"))),
        }
    }

    pub fn has(&self, section: &str, key: &str) -> bool {
        self.entries.contains_key(&(section.to_string(), key.to_string()))
    }

    /// SI value of a quantity or plain float key.
    pub fn float(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        let kind = spec(section, key).expect("key in schema").kind;
        let (raw, line) = self.raw(section, key)?;
        let v = match kind {
            Kind::Length | Kind::Power => parse_quantity(kind, raw),
            _ => parse_float(raw),
        };
        v.map_err(|m| self.error(line, format!("`{section}.{key}`: {m}")))
    }

    /// Like [`float`](Self::float) but requires a strictly positive value.
    pub fn positive(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        let v = self.float(section, key)?;
        if v > 0.0 {
            Ok(v)
        } else {
            let line = self.raw(section, key)?.1;
            Err(self.error(line, format!("`{section}.{key}` must be positive")))
        }
    }

    pub fn int(&self, section: &str, key: &str) -> Result<i64, ConfigError> {
        let (raw, line) = self.raw(section, key)?;
        raw.trim().parse().map_err(|_| self.error(line, format!("`{section}.{key}` is not an integer")))
    }

    pub fn count(&self, section: &str, key: &str) -> Result<usize, ConfigError> {
        let v = self.int(section, key)?;
        usize::try_from(v).ok().filter(|&v| v > 0).ok_or_else(|| {
            let line = self.raw(section, key).ok().and_then(|r| r.1);
            self.error(line, format!("`{section}.{key}` must be a positive integer"))
        })
    }

    pub fn boolean(&self, section: &str, key: &str) -> Result<bool, ConfigError> {
        Ok(self.raw(section, key)?.0.trim() == "true")
    }

    pub fn text(&self, section: &str, key: &str) -> Result<String, ConfigError> {
        Ok(self.raw(section, key)?.0.trim().to_string())
    }

    pub fn ints(&self, section: &str, key: &str) -> Result<Vec<i64>, ConfigError> {
        let (raw, line) = self.raw(section, key)?;
        let v: Vec<i64> = split_list(raw).map(|s| s.parse().unwrap()).collect();
        if v.is_empty() {
            return Err(self.error(line, format!("`{section}.{key}` is empty")));
        }
        Ok(v)
    }

    pub fn floats(&self, section: &str, key: &str) -> Result<Vec<f64>, ConfigError> {
        Ok(split_list(self.raw(section, key)?.0).map(|s| parse_float(s).unwrap()).collect())
    }

    pub fn texts(&self, section: &str, key: &str) -> Result<Vec<String>, ConfigError> {
        Ok(split_list(self.raw(section, key)?.0).map(String::from).collect())
    }

    /// Overrides (or adds) a value, validating it like a file entry.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let spec = spec(section, key).ok_or_else(|| self.error(None, format!("unknown key `{section}.{key}`")))?;
        check(spec.kind, value).map_err(|m| self.error(None, format!("`{section}.{key}`: {m}")))?;
        self.entries.insert((section.into(), key.into()), Entry { raw: value.trim().into(), line: None });
        Ok(())
    }

    /// The resolved configuration with defaults filled in, as INI text.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for s in SCHEMA {
            let value = match self.entries.get(&(s.section.to_string(), s.key.to_string())) {
                Some(e) => e.raw.as_str(),
                None => match s.default {
                    Some(d) => d,
                    None => continue,
                },
            };
            if s.section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{}]", s.section);
                current = s.section;
            }
            let _ = writeln!(out, "{} = {}", s.key, value);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "[beam]\nw0 = 1.7 mm\npower = 150mW\ndetuning_nm = 0.5\nell = 0, 1,2\n\n[atoms]\nsigma = 250 um # MOT\n";

    #[test]
    fn parses_units() {
        let c = RunConfig::parse(GOOD, "t.ini").unwrap();
        assert!((c.float("beam", "w0").unwrap() - 1.7e-3).abs() < 1e-15);
        assert!((c.float("beam", "power").unwrap() - 0.15).abs() < 1e-15);
        assert_eq!(c.ints("beam", "ell").unwrap(), vec![0, 1, 2]);
        assert!((c.float("atoms", "sigma").unwrap() - 250e-6).abs() < 1e-18);
        assert!((c.float("optics", "f").unwrap() - 0.215).abs() < 1e-15);
        assert_eq!(c.floats("beam", "rc_over_w0").unwrap(), vec![f64::INFINITY]);
    }

    #[test]
    fn unknown_key_is_line_anchored() {
        let e = RunConfig::parse("[beam]\nw0 = 1 mm\nwaist = 2 mm\n", "x.ini").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.to_string().starts_with("x.ini:3:") && e.message.contains("beam.waist"));
    }

    #[test]
    fn bad_unit_and_missing_key() {
        let e = RunConfig::parse("[beam]\nw0 = 1.7 mW\n", "x").unwrap_err();
        assert_eq!(e.line, Some(2));
        let c = RunConfig::parse("[beam]\npower = 1 W\n", "x").unwrap();
        assert!(c.float("beam", "w0").unwrap_err().message.contains("beam.w0"));
    }

    #[test]
    fn manifest_round_trips() {
        let c = RunConfig::parse(GOOD, "t").unwrap();
        let m = c.manifest();
        assert!(m.contains("grid_n = 1024"));
        let back = RunConfig::parse(&m, "m").unwrap();
        assert_eq!(back.manifest(), m);
    }
}
