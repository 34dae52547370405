//! Line-oriented `key = value` configuration with command-line overrides.
//!
//! Values are parsed lazily by the task planner. Every lookup records the
//! value actually used (given or default) so the summary can embed the fully
//! resolved configuration, and every failure is collected so the user sees
//! all problems at once.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Keys understood by at least one task.
pub const KNOWN_KEYS: &[&str] = &[
    "curvature",
    "tau0",
    "f.center",
    "f.radius",
    "f.amplitude",
    "g.center",
    "g.radius",
    "g.amplitude",
    "order",
    "seed",
    "timing",
    "output.dir",
    "output.name",
    "taus",
    "tau",
    "points",
    "point",
    "variable",
    "model",
    "spacing",
    "tau_min",
    "tau_max",
    "samples",
    "directions",
    "expected",
    "tolerance",
    "start",
    "levels",
    "extent",
    "fractions",
    "radii",
    "axis",
    "n",
    "stencil",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Issue {
    pub key: String,
    pub message: String,
}

/// All problems found in one configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<Issue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem{}):", self.0.len(), if self.0.len() == 1 { "" } else { "s" })?;
        for issue in &self.0 {
            writeln!(f, "  {}: {}", issue.key, issue.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Default)]
pub struct Settings {
    given: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
    issues: Vec<Issue>,
}

fn strip_quotes(v: &str) -> &str {
    let v = v.trim();
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

impl Settings {
    /// Reads `text` (if any) and then applies `--key value` / `--key=value`
    /// overrides. Syntax errors and unknown keys are collected, not fatal.
    pub fn parse(text: Option<&str>, overrides: &[String]) -> Self {
        let mut s = Settings::default();
        if let Some(text) = text {
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                match line.split_once('=') {
                    Some((k, v)) => {
                        let k = k.trim();
                        if s.given.contains_key(k) {
                            s.issue(k, format!("set twice (line {})", lineno + 1));
                        }
                        s.insert(k, strip_quotes(v));
                    }
                    None => s.issue(&format!("line {}", lineno + 1), format!("expected `key = value`, got `{line}`")),
                }
            }
        }
        let mut args = overrides.iter();
        while let Some(arg) = args.next() {
            let Some(flag) = arg.strip_prefix("--") else {
                s.issue(arg, "overrides must look like `--key value`");
                continue;
            };
            if let Some((k, v)) = flag.split_once('=') {
                s.insert(k, strip_quotes(v));
            } else if let Some(v) = args.next() {
                s.insert(flag, strip_quotes(v));
            } else {
                s.issue(flag, "override is missing its value");
            }
        }
        s
    }

    fn insert(&mut self, key: &str, value: &str) {
        if !KNOWN_KEYS.contains(&key) {
            self.issue(key, "unknown key");
            return;
        }
        self.given.insert(key.to_string(), value.to_string());
    }

    pub fn issue(&mut self, key: &str, message: impl Into<String>) {
        self.issues.push(Issue { key: key.to_string(), message: message.into() });
    }

    pub fn is_given(&self, key: &str) -> bool {
        self.given.contains_key(key)
    }

    /// Value of `key`, or `default` when absent. A malformed given value is
    /// recorded as an issue and the default is returned so that planning can
    /// go on collecting problems.
    pub fn get<T>(&mut self, key: &str, default: &str) -> T
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        let fallback = || default.parse::<T>().unwrap_or_else(|e| panic!("default for {key} is malformed: {e}"));
        match self.given.get(key).cloned() {
            Some(raw) => {
                self.resolved.insert(key.to_string(), raw.clone());
                match raw.parse::<T>() {
                    Ok(v) => v,
                    Err(e) => {
                        self.issue(key, format!("cannot parse `{raw}`: {e}"));
                        fallback()
                    }
                }
            }
            None => {
                self.resolved.insert(key.to_string(), default.to_string());
                fallback()
            }
        }
    }

    /// Records an issue against `key` unless `ok`.
    pub fn require(&mut self, ok: bool, key: &str, message: impl Into<String>) {
        if !ok {
            self.issue(key, message);
        }
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    pub fn finish(&mut self) -> Result<(), ConfigErrors> {
        if self.issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(std::mem::take(&mut self.issues)))
        }
    }
}

fn parse_number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{}` is not a number", s.trim()))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{}` is not finite", s.trim()))
    }
}

/// Comma- or whitespace-separated numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct Floats(pub Vec<f64>);

impl FromStr for Floats {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(parse_number)
            .collect::<Result<Vec<_>, _>>()?;
        if v.is_empty() {
            return Err("expected at least one number".into());
        }
        Ok(Floats(v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triple(pub [f64; 3]);

impl FromStr for Triple {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let Floats(v) = s.parse()?;
        <[f64; 3]>::try_from(v.as_slice()).map(Triple).map_err(|_| format!("expected three numbers, got {}", v.len()))
    }
}

/// Semicolon-separated triples.
#[derive(Clone, Debug, PartialEq)]
pub struct Triples(pub Vec<[f64; 3]>);

impl FromStr for Triples {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = s
            .split(';')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.parse::<Triple>().map(|t| t.0))
            .collect::<Result<Vec<_>, _>>()?;
        if v.is_empty() {
            return Err("expected at least one point".into());
        }
        Ok(Triples(v))
    }
}

/// Finite number.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Real(pub f64);

impl FromStr for Real {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_number(s).map(Real)
    }
}

/// `true/false`, `on/off`, `yes/no`, `1/0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Flag(pub bool);

impl FromStr for Flag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "true" | "on" | "yes" | "1" => Ok(Flag(true)),
            "false" | "off" | "no" | "0" => Ok(Flag(false)),
            other => Err(format!("expected true or false, got `{other}`")),
        }
    }
}
