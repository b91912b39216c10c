//! `key=value` config files and the flag > file > default resolution.

use std::collections::BTreeMap;
use std::path::Path;

use tgv_core::solver::Metric;

use crate::CliError;

/// Keys a config file may set. Underscores are accepted in place of hyphens.
pub const KEYS: &[&str] = &[
    "n",
    "alpha",
    "beta",
    "p",
    "tol",
    "max-iter",
    "seed",
    "sigma",
    "out",
    "jobs",
    "step-ratio",
    "adaptive",
    "spacing",
    "metric",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", lineno + 1)))?;
            let key = k.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("config line {}: unknown key {:?}", lineno + 1, k.trim())));
            }
            entries.insert(key, v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// The explicit flag if given, else the file entry parsed with `parse`.
    pub fn pick<T>(
        &self,
        key: &str,
        flag: Option<T>,
        parse: fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.get(key) {
            Some(v) => parse(v).map(Some).map_err(|e| CliError::Usage(format!("config key {key}: {e}"))),
            None => Ok(None),
        }
    }
}

/// Decimal or scientific notation.
pub fn real(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v.is_nan() {
        return Err("NaN is not allowed".into());
    }
    Ok(v)
}

/// Non-negative integer; `5e4` style is accepted.
pub fn count(s: &str) -> Result<usize, String> {
    if let Ok(v) = s.trim().parse::<usize>() {
        return Ok(v);
    }
    let v = real(s)?;
    if v < 0.0 || v.fract() != 0.0 || v > (1u64 << 53) as f64 {
        return Err(format!("{s:?} is not a non-negative integer"));
    }
    Ok(v as usize)
}

pub fn seed(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.trim().parse::<u64>() {
        return Ok(v);
    }
    count(s).map(|v| v as u64)
}

pub fn boolean(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("{s:?} is not a boolean")),
    }
}

pub fn metric(s: &str) -> Result<Metric, String> {
    match s.trim() {
        "gap" => Ok(Metric::PrimalDualGap),
        "change" => Ok(Metric::RelativeIterateChange),
        _ => Err(format!("{s:?}: expected gap or change")),
    }
}

pub fn text(s: &str) -> Result<String, String> {
    Ok(s.to_string())
}

/// A parsed sweep list.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep(pub Vec<f64>);

pub fn sweep(s: &str) -> Result<Sweep, String> {
    geometric_list(s).map(Sweep)
}

/// Geometric list `a:b` (one point per decade) or `a:b:k` (k points).
pub fn geometric_list(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let (a, b, k) = match parts.as_slice() {
        [a, b] => {
            let (a, b) = (real(a)?, real(b)?);
            check_ends(a, b)?;
            let decades = (b / a).log10().abs();
            (a, b, decades.round().max(1.0) as usize + 1)
        }
        [a, b, k] => (real(a)?, real(b)?, count(k)?),
        _ => return Err(format!("{s:?}: expected a:b or a:b:k")),
    };
    check_ends(a, b)?;
    if k < 2 {
        return Err("a list needs at least 2 points".into());
    }
    let (la, lb) = (a.log10(), b.log10());
    Ok((0..k)
        .map(|i| match i {
            0 => a,
            _ if i == k - 1 => b,
            _ => 10f64.powf(la + (lb - la) * i as f64 / (k - 1) as f64),
        })
        .collect())
}

fn check_ends(a: f64, b: f64) -> Result<(), String> {
    if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err("list ends must be positive and finite".into())
    }
}

/// `x,y` pair.
pub fn pair(s: &str) -> Result<[f64; 2], String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("{s:?}: expected x,y"))?;
    Ok([real(x)?, real(y)?])
}
