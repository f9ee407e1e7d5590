//! Flat `key=value` configuration with typed accessors and a canonical echo.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{invalid, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    /// One `key=value` per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return invalid(format!("line {}: expected key=value, got `{line}`", lineno + 1));
            };
            let key = key.trim();
            if cfg.values.contains_key(key) {
                return invalid(format!("line {}: duplicate key `{key}`", lineno + 1));
            }
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
            return invalid(format!("invalid key `{key}`"));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies `key=value` overrides in order; later ones win.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<()> {
        for pair in pairs {
            let pair = pair.as_ref();
            let Some((key, value)) = pair.split_once('=') else {
                return invalid(format!("override `{pair}` is not key=value"));
            };
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Rejects keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => invalid(format!("unknown key `{k}` (allowed: {})", allowed.join(", "))),
            None => Ok(()),
        }
    }

    /// Fills `key` with `value` unless already present.
    pub fn default_value(&mut self, key: &str, value: &str) {
        self.values.entry(key.to_string()).or_insert_with(|| value.to_string());
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_number(v).map_err(|e| annotate(key, e))).transpose()
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.f64(key)?.map_or_else(|| invalid(format!("missing key `{key}`")), Ok)
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|v| parse_list(v).map_err(|e| annotate(key, e))).transpose()
    }

    pub fn require_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.f64_list(key)?.map_or_else(|| invalid(format!("missing key `{key}`")), Ok)
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| v.parse::<usize>().or_else(|_| invalid(format!("`{key}`: `{v}` is not a non-negative integer"))))
            .transpose()
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => invalid(format!("`{key}`: `{v}` is not a boolean")),
            })
            .transpose()
    }

    pub fn str_list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
    }

    /// Sorted `key=value` pairs on one line; values containing whitespace
    /// or quotes are double-quoted.
    pub fn canonical(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| {
                if v.is_empty() || v.contains(char::is_whitespace) || v.contains('"') {
                    format!("{k}=\"{}\"", v.replace('"', "\\\""))
                } else {
                    format!("{k}={v}")
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn annotate(key: &str, e: crate::Error) -> crate::Error {
    crate::Error::InvalidInput(format!("`{key}`: {e}"))
}

/// A decimal number, or a multiple of π such as `pi`, `pi/8`, `2pi`, `0.5*pi/3`.
pub fn parse_number(text: &str) -> Result<f64> {
    let s = text.trim().to_ascii_lowercase();
    let value = if let Some(idx) = s.find("pi") {
        let coef = s[..idx].trim().trim_end_matches('*').trim();
        let rest = s[idx + 2..].trim();
        let coef = match coef {
            "" => 1.0,
            "-" => -1.0,
            c => c.parse::<f64>().or_else(|_| invalid(format!("bad coefficient in `{text}`")))?,
        };
        let den = if rest.is_empty() {
            1.0
        } else {
            let Some(d) = rest.strip_prefix('/') else {
                return invalid(format!("cannot parse `{text}`"));
            };
            d.trim().parse::<f64>().or_else(|_| invalid(format!("bad denominator in `{text}`")))?
        };
        coef * PI / den
    } else {
        s.parse::<f64>().or_else(|_| invalid(format!("`{text}` is not a number")))?
    };
    if !value.is_finite() {
        return invalid(format!("`{text}` is not finite"));
    }
    Ok(value)
}

/// Comma-separated numbers.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    let items: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return invalid("empty list");
    }
    items.into_iter().map(parse_number).collect()
}

/// Shortest decimal text for grid coordinates: at most ten decimals,
/// trailing zeros removed.
pub fn format_coordinate(x: f64) -> String {
    let s = format!("{x:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_echo() {
        let text = "# comment\n\neta = 1e-3\ngraph = n=3; edges=1-2,2-3\nbeta=pi\n";
        let mut cfg = Config::parse(text).unwrap();
        assert_eq!(cfg.get("graph"), Some("n=3; edges=1-2,2-3"));
        assert_eq!(cfg.require_f64("beta").unwrap(), PI);
        cfg.apply_overrides(&["eta=2e-3"]).unwrap();
        assert_eq!(cfg.canonical(), "beta=pi eta=2e-3 graph=\"n=3; edges=1-2,2-3\"");
        assert!(Config::parse("a=1\na=2").is_err());
        assert!(Config::parse("nonsense").is_err());
        assert!(cfg.check_keys(&["beta", "eta"]).is_err());
        assert!(cfg.apply_overrides(&["novalue"]).is_err());
    }

    #[test]
    fn numbers_and_lists() {
        assert_eq!(parse_number("pi/8").unwrap(), PI / 8.0);
        assert_eq!(parse_number("2pi").unwrap(), 2.0 * PI);
        assert_eq!(parse_number("0.5*pi/2").unwrap(), PI / 4.0);
        assert_eq!(parse_number("-pi").unwrap(), -PI);
        assert!(parse_number("pix").is_err());
        assert!(parse_number("inf").is_err());
        assert_eq!(parse_list("0, 0.9,3").unwrap(), vec![0.0, 0.9, 3.0]);
        assert!(parse_list(" , ").is_err());
    }

    #[test]
    fn coordinates() {
        assert_eq!(format_coordinate(0.30000000000000004), "0.3");
        assert_eq!(format_coordinate(25.0), "25");
        assert_eq!(format_coordinate(-0.0), "0");
        assert_eq!(format_coordinate(0.002), "0.002");
    }
}
