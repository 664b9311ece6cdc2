//! Flat `key = value` configuration files with SI-unit strings.
//!
//! ```text
//! # device profile
//! eo_tune.latency = 20ns
//! vcsel.power     = 1.3 mW
//! loss.waveguide  = 1 dB/cm
//! arch            = 4,12,3,6,6,3
//! ```
//!
//! Keys live in a single flat namespace. Every consumer removes the keys it
//! understands; [`ConfigFile::finish`] rejects whatever is left so typos do not
//! silently fall back to defaults.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Physical dimension a value is expected to carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Time,
    Power,
    Energy,
    Length,
    Decibel,
    DecibelMilliwatt,
    DecibelPerCm,
    Dimensionless,
}

const UNITS: &[(&str, Dim, f64)] = &[
    ("s", Dim::Time, 1.0),
    ("ms", Dim::Time, 1e-3),
    ("us", Dim::Time, 1e-6),
    ("µs", Dim::Time, 1e-6),
    ("μs", Dim::Time, 1e-6),
    ("ns", Dim::Time, 1e-9),
    ("ps", Dim::Time, 1e-12),
    ("fs", Dim::Time, 1e-15),
    ("W", Dim::Power, 1.0),
    ("mW", Dim::Power, 1e-3),
    ("uW", Dim::Power, 1e-6),
    ("µW", Dim::Power, 1e-6),
    ("μW", Dim::Power, 1e-6),
    ("nW", Dim::Power, 1e-9),
    ("J", Dim::Energy, 1.0),
    ("mJ", Dim::Energy, 1e-3),
    ("uJ", Dim::Energy, 1e-6),
    ("µJ", Dim::Energy, 1e-6),
    ("nJ", Dim::Energy, 1e-9),
    ("pJ", Dim::Energy, 1e-12),
    ("fJ", Dim::Energy, 1e-15),
    ("m", Dim::Length, 1.0),
    ("cm", Dim::Length, 1e-2),
    ("mm", Dim::Length, 1e-3),
    ("um", Dim::Length, 1e-6),
    ("µm", Dim::Length, 1e-6),
    ("μm", Dim::Length, 1e-6),
    ("nm", Dim::Length, 1e-9),
    ("dB", Dim::Decibel, 1.0),
    ("dBm", Dim::DecibelMilliwatt, 1.0),
    ("dB/cm", Dim::DecibelPerCm, 1.0),
];

/// Per-unit annotations that document a normalisation but do not change the
/// stored SI value (e.g. `27.5 mW/FSR`, `4 µW/nm`).
const ANNOTATIONS: &[&str] = &["/FSR", "/fsr", "/nm"];

/// Parse a quantity such as `"0.29ns"` or `"-20 dBm"` into its SI value.
pub fn parse_quantity(text: &str, expected: Dim) -> std::result::Result<f64, String> {
    let mut s = text.trim();
    for a in ANNOTATIONS {
        if let Some(stripped) = s.strip_suffix(a) {
            s = stripped.trim_end();
        }
    }
    let split = s
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E')
                    && s[i + 1..].starts_with(|n: char| n.is_ascii_digit() || n == '-' || n == '+')))
        })
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse number in `{text}`"))?;
    let unit = unit.trim();
    if unit.is_empty() {
        return match expected {
            Dim::Dimensionless => Ok(value),
            other => Err(format!("`{text}` is missing a unit (expected {other:?})")),
        };
    }
    let (_, dim, scale) = UNITS
        .iter()
        .find(|(u, _, _)| *u == unit)
        .ok_or_else(|| format!("unknown unit `{unit}` in `{text}`"))?;
    if *dim != expected {
        return Err(format!("`{text}` has dimension {dim:?}, expected {expected:?}"));
    }
    Ok(value * scale)
}

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, (String, usize)>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config { line, message: "empty key".into() });
            }
            if entries.insert(key.clone(), (value.trim().to_string(), line)).is_some() {
                return Err(Error::Config { line, message: format!("duplicate key `{key}`") });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn take_raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    /// Remove `key` and parse it as a quantity of dimension `dim`.
    pub fn take_quantity(&mut self, key: &str, dim: Dim) -> Result<Option<f64>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => parse_quantity(&v, dim)
                .map(Some)
                .map_err(|message| Error::Config { line, message: format!("{key}: {message}") }),
        }
    }

    pub fn take_usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| Error::Config {
                line,
                message: format!("{key}: expected a non-negative integer, got `{v}`"),
            }),
        }
    }

    pub fn take_bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => match v.as_str() {
                "true" | "yes" | "on" | "1" => Ok(Some(true)),
                "false" | "no" | "off" | "0" => Ok(Some(false)),
                _ => Err(Error::Config { line, message: format!("{key}: expected a boolean, got `{v}`") }),
            },
        }
    }

    /// Remove `key` and parse it as a comma-separated list of integers.
    pub fn take_usize_list(&mut self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => parse_usize_list(&v)
                .map(Some)
                .map_err(|message| Error::Config { line, message: format!("{key}: {message}") }),
        }
    }

    pub fn take_string_list(&mut self, key: &str) -> Option<Vec<String>> {
        self.entries.remove(key).map(|(v, _)| {
            v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
        })
    }

    /// Fail if any key was not consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (_, line))) => Err(Error::Config { line, message: format!("unknown key `{key}`") }),
        }
    }
}

pub fn parse_usize_list(text: &str) -> std::result::Result<Vec<usize>, String> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| format!("expected comma-separated integers, got `{text}`"))
        })
        .collect()
}
