//! Flat `key = value` configuration files.
//!
//! Lines are `key = value`; `#` starts a comment. Keys may carry the
//! experiment name as a dotted prefix (`resonant.mu = 4` and `mu = 4` are the
//! same key inside the `resonant` experiment). Every experiment declares its
//! keys up front and [`Params`] rejects anything else before work starts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), key: None, message: message.into() }
    }

    pub fn key(key: &str, line: Option<usize>, message: impl Into<String>) -> Self {
        Self { line, key: Some(key.to_string()), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "key '{key}': ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

/// Raw parsed file: keys in file order are irrelevant, duplicates are errors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, Entry>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line, format!("expected 'key = value', got '{content}'")))?;
            let key = key.trim();
            let value = value.trim();
            let valid = !key.is_empty()
                && key.split('.').all(|part| {
                    !part.is_empty() && part.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
                });
            if !valid {
                return Err(ConfigError::at(line, format!("malformed key '{key}'")));
            }
            if value.is_empty() {
                return Err(ConfigError::key(key, Some(line), "empty value"));
            }
            let entry = Entry { value: value.to_string(), line };
            if let Some(prev) = entries.insert(key.to_string(), entry) {
                return Err(ConfigError::key(key, Some(line), format!("duplicate key (first set on line {})", prev.line)));
            }
        }
        Ok(Self { entries })
    }
}

/// Typed, validated view of a [`ConfigFile`] for one experiment. Every read
/// records the effective value for the report echo.
#[derive(Debug)]
pub struct Params {
    entries: BTreeMap<String, Entry>,
    echo: Vec<(String, String)>,
}

impl Params {
    /// Strips the `experiment.` prefix and rejects keys outside `allowed`.
    pub fn new(file: &ConfigFile, experiment: &str, allowed: &[&str]) -> Result<Self, ConfigError> {
        let prefix = format!("{experiment}.");
        let mut entries = BTreeMap::new();
        for (key, entry) in &file.entries {
            let short = key.strip_prefix(&prefix).unwrap_or(key);
            if !allowed.contains(&short) {
                return Err(ConfigError::key(
                    key,
                    Some(entry.line),
                    format!("unknown key for experiment '{experiment}' (allowed: {})", allowed.join(", ")),
                ));
            }
            if entries.insert(short.to_string(), entry.clone()).is_some() {
                return Err(ConfigError::key(key, Some(entry.line), "set both with and without the experiment prefix"));
            }
        }
        Ok(Self { entries, echo: Vec::new() })
    }

    pub fn echo(&self) -> &[(String, String)] {
        &self.echo
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    /// Parses `key` with `parse`, falling back to `default`, then applies
    /// `check` (an error message on failure).
    pub fn get_with<T: fmt::Display>(
        &mut self,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> Result<T, String>,
        check: impl Fn(&T) -> Result<(), String>,
    ) -> Result<T, ConfigError> {
        let (value, line) = match self.raw(key) {
            Some(e) => (parse(&e.value).map_err(|m| ConfigError::key(key, Some(e.line), m))?, Some(e.line)),
            None => (default, None),
        };
        check(&value).map_err(|m| ConfigError::key(key, line, m))?;
        self.echo.push((key.to_string(), value.to_string()));
        Ok(value)
    }

    pub fn get<T>(&mut self, key: &str, default: T, check: impl Fn(&T) -> Result<(), String>) -> Result<T, ConfigError>
    where
        T: FromStr + fmt::Display,
        T::Err: fmt::Display,
    {
        self.get_with(key, default, |s| s.parse::<T>().map_err(|e| format!("cannot parse '{s}': {e}")), check)
    }

    pub fn get_list(
        &mut self,
        key: &str,
        default: Vec<f64>,
        check: impl Fn(&[f64]) -> Result<(), String>,
    ) -> Result<Vec<f64>, ConfigError> {
        let list = self.get_with(key, FloatList(default), |s| parse_list(s).map(FloatList), |l| check(&l.0))?;
        Ok(list.0)
    }
}

struct FloatList(Vec<f64>);

impl fmt::Display for FloatList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| format!("{v:?}")).collect();
        f.write_str(&parts.join(","))
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<f64>().map_err(|e| format!("cannot parse list element '{p}': {e}"))
        })
        .collect()
}

pub fn positive(v: &f64) -> Result<(), String> {
    if v.is_finite() && *v > 0.0 {
        Ok(())
    } else {
        Err(format!("must be a positive finite number, got {v}"))
    }
}

pub fn nonnegative(v: &f64) -> Result<(), String> {
    if v.is_finite() && *v >= 0.0 {
        Ok(())
    } else {
        Err(format!("must be a nonnegative finite number, got {v}"))
    }
}

pub fn finite(v: &f64) -> Result<(), String> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(format!("must be finite, got {v}"))
    }
}

pub fn at_least(min: usize) -> impl Fn(&usize) -> Result<(), String> {
    move |v| if *v >= min { Ok(()) } else { Err(format!("must be at least {min}, got {v}")) }
}

pub fn any<T>(_: &T) -> Result<(), String> {
    Ok(())
}

pub fn increasing_positive(v: &[f64]) -> Result<(), String> {
    if v.is_empty() {
        return Err("list must be nonempty".into());
    }
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) || v.windows(2).any(|w| w[0] >= w[1]) {
        return Err("list must be positive and strictly increasing".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_prefixes_and_lists() {
        let file = ConfigFile::parse("# header\nresonant.mu = 4 # trailing\n\n g.frequencies = 1, 1.5\n").unwrap();
        let mut p = Params::new(&file, "resonant", &["mu", "g.frequencies", "modes"]).unwrap();
        assert_eq!(p.get("mu", 1.0, positive).unwrap(), 4.0);
        assert_eq!(p.get_list("g.frequencies", vec![], |_| Ok(())).unwrap(), vec![1.0, 1.5]);
        assert_eq!(p.get("modes", 16usize, at_least(2)).unwrap(), 16);
        assert_eq!(p.echo()[1], ("g.frequencies".to_string(), "1.0,1.5".to_string()));
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let file = ConfigFile::parse("mu = 4\nmode=7\n").unwrap();
        let err = Params::new(&file, "resonant", &["mu"]).unwrap_err();
        assert_eq!(err.line, Some(2));
        assert_eq!(err.key.as_deref(), Some("mode"));
    }

    #[test]
    fn malformed_lines_and_values() {
        assert_eq!(ConfigFile::parse("a = 1\njust words\n").unwrap_err().line, Some(2));
        assert!(ConfigFile::parse("a = 1\na = 2\n").is_err());
        assert!(ConfigFile::parse("a..b = 1\n").is_err());
        assert!(ConfigFile::parse("a =\n").is_err());
        let file = ConfigFile::parse("mu = four\nrho = -1\n").unwrap();
        let mut p = Params::new(&file, "x", &["mu", "rho"]).unwrap();
        assert!(p.get("mu", 1.0, positive).is_err());
        assert!(p.get("rho", 1.0, positive).is_err());
    }

    #[test]
    fn prefixed_and_bare_duplicates_conflict() {
        let file = ConfigFile::parse("mu = 1\nx.mu = 2\n").unwrap();
        assert!(Params::new(&file, "x", &["mu"]).is_err());
    }
}
