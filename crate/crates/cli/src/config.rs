//! Flat `key = value` configuration with `[section]` headers.
//!
//! Keys before the first header belong to `global`. Command-line flags
//! `--section.key=value` (or `--key=value` for `global`) override the file.
//! Every key must appear in the subcommand's schema.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::CliError;

/// `(section, key, default)` triples accepted by a subcommand.
pub type Schema = [(&'static str, &'static str, &'static str)];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Setting {
    pub section: String,
    pub key: String,
    pub value: String,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{} = {}", self.section, self.key, self.value)
    }
}

/// Parses config file text.
pub fn parse_text(text: &str) -> Result<Vec<Setting>, CliError> {
    let mut section = "global".to_string();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| CliError::Config(format!("line {}: unterminated section header", n + 1)))?
                .trim();
            if name.is_empty() || !name.chars().all(is_ident) {
                return Err(CliError::Config(format!("line {}: bad section name `{name}`", n + 1)));
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let key = k.trim();
        if key.is_empty() || !key.chars().all(is_ident) {
            return Err(CliError::Config(format!("line {}: bad key `{key}`", n + 1)));
        }
        out.push(Setting {
            section: section.clone(),
            key: key.to_string(),
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

/// Parses one `--section.key=value` flag (leading dashes already removed).
pub fn parse_flag(flag: &str) -> Result<Setting, CliError> {
    let (path, value) = flag
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("flag `--{flag}` needs `=value`")))?;
    let (section, key) = match path.split_once('.') {
        Some((s, k)) => (s, k),
        None => ("global", path),
    };
    if section.is_empty() || key.is_empty() || !section.chars().all(is_ident) || !key.chars().all(is_ident) {
        return Err(CliError::Config(format!("bad flag `--{flag}`")));
    }
    Ok(Setting {
        section: section.to_string(),
        key: key.to_string(),
        value: value.trim().to_string(),
    })
}

fn is_ident(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// A fully resolved configuration: every schema key has a value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<(String, String), String>,
}

impl Config {
    /// Defaults, then `file` settings, then `flags`; unknown keys are errors.
    pub fn resolve(schema: &Schema, file: &[Setting], flags: &[Setting]) -> Result<Self, CliError> {
        let mut values: BTreeMap<(String, String), String> = schema
            .iter()
            .map(|&(s, k, v)| ((s.to_string(), k.to_string()), v.to_string()))
            .collect();
        for s in file.iter().chain(flags) {
            let slot = values
                .get_mut(&(s.section.clone(), s.key.clone()))
                .ok_or_else(|| CliError::Config(format!("unknown key `{}.{}`", s.section, s.key)))?;
            *slot = s.value.clone();
        }
        Ok(Self { values })
    }

    pub fn raw(&self, section: &str, key: &str) -> &str {
        self.values
            .get(&(section.to_string(), key.to_string()))
            .map(String::as_str)
            .unwrap_or_else(|| panic!("`{section}.{key}` is not in the schema"))
    }

    pub fn get<V: FromStr>(&self, section: &str, key: &str) -> Result<V, CliError> {
        let raw = self.raw(section, key);
        raw.parse()
            .map_err(|_| CliError::Config(format!("`{section}.{key}`: cannot parse `{raw}`")))
    }

    /// `None` for an empty value or `auto`.
    pub fn get_opt<V: FromStr>(&self, section: &str, key: &str) -> Result<Option<V>, CliError> {
        match self.raw(section, key) {
            "" | "auto" | "none" => Ok(None),
            _ => self.get(section, key).map(Some),
        }
    }

    /// Comma-separated list.
    pub fn get_list<V: FromStr>(&self, section: &str, key: &str) -> Result<Vec<V>, CliError> {
        let raw = self.raw(section, key);
        if raw.trim().is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("`{section}.{key}`: cannot parse `{}`", p.trim())))
            })
            .collect()
    }

    /// `section.key=value` pairs in sorted order, for CSV comment headers.
    pub fn comments(&self) -> Vec<(String, String)> {
        self.values
            .iter()
            .map(|((s, k), v)| (format!("{s}.{k}"), v.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &Schema = &[
        ("global", "seed", "0"),
        ("sampler", "gamma_sq", "4"),
        ("sampler", "deltas", "0,10"),
        ("sampler", "delta_skip", "auto"),
    ];

    #[test]
    fn file_then_flags() {
        let file = parse_text("seed = 3\n\n[sampler]  # comment\ngamma_sq = 2.5\n").unwrap();
        let flags = vec![parse_flag("sampler.gamma_sq=9").unwrap()];
        let c = Config::resolve(SCHEMA, &file, &flags).unwrap();
        assert_eq!(c.get::<u64>("global", "seed").unwrap(), 3);
        assert_eq!(c.get::<f64>("sampler", "gamma_sq").unwrap(), 9.0);
        assert_eq!(c.get_list::<usize>("sampler", "deltas").unwrap(), vec![0, 10]);
        assert_eq!(c.get_opt::<usize>("sampler", "delta_skip").unwrap(), None);
    }

    #[test]
    fn bare_flag_is_global() {
        let s = parse_flag("seed=7").unwrap();
        assert_eq!((s.section.as_str(), s.key.as_str(), s.value.as_str()), ("global", "seed", "7"));
    }

    #[test]
    fn rejects_unknown_keys() {
        let file = parse_text("[sampler]\ngama = 2\n").unwrap();
        assert!(Config::resolve(SCHEMA, &file, &[]).is_err());
        let flags = vec![parse_flag("other.seed=1").unwrap()];
        assert!(Config::resolve(SCHEMA, &[], &flags).is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_text("[sampler\n").is_err());
        assert!(parse_text("just words\n").is_err());
        assert!(parse_text("a b = 1\n").is_err());
        assert!(parse_flag("sampler.gamma").is_err());
    }

    #[test]
    fn bad_value_names_the_key() {
        let c = Config::resolve(SCHEMA, &[], &[parse_flag("sampler.gamma_sq=x").unwrap()]).unwrap();
        let e = c.get::<f64>("sampler", "gamma_sq").unwrap_err().to_string();
        assert!(e.contains("sampler.gamma_sq"));
    }
}
