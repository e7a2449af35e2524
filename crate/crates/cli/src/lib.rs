//! Experiment runner for Boost-and-Skip sampling studies.
//!
//! `bnslab <subcommand> [--config FILE] [--section.key=value …] --out DIR`
//!
//! Exit status: 0 when every check passed, 2 when a check failed, 1 on an
//! execution error.

pub mod commands;
pub mod config;
pub mod svg;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use config::{Config, Setting};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] bnslab_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One pass/fail statement produced by a subcommand.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    /// Files written, relative to the output directory.
    pub files: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// Parsed command line.
#[derive(Clone, Debug)]
pub struct Invocation {
    pub subcommand: String,
    pub config_file: Option<PathBuf>,
    pub out: PathBuf,
    pub flags: Vec<Setting>,
}

pub const USAGE: &str = "bnslab <subcommand> [--config FILE] [--section.key=value ...] --out DIR\n\
subcommands: verify-gaussian, corollary-scan, toy2d, trajectory, contraction, spectral, ablation";

pub fn parse_args<S: AsRef<str>>(args: &[S]) -> Result<Invocation, CliError> {
    let mut it = args.iter().map(|s| s.as_ref());
    let subcommand = it
        .next()
        .filter(|s| !s.starts_with("--"))
        .ok_or_else(|| CliError::Usage(USAGE.into()))?
        .to_string();
    let mut config_file = None;
    let mut out = None;
    let mut flags = Vec::new();
    while let Some(a) = it.next() {
        let body = a
            .strip_prefix("--")
            .ok_or_else(|| CliError::Usage(format!("unexpected argument `{a}`")))?;
        let (name, inline) = match body.split_once('=') {
            Some((n, v)) => (n, Some(v)),
            None => (body, None),
        };
        match name {
            "config" | "out" => {
                let v = match inline {
                    Some(v) => v.to_string(),
                    None => it
                        .next()
                        .ok_or_else(|| CliError::Usage(format!("--{name} needs a value")))?
                        .to_string(),
                };
                if name == "config" {
                    config_file = Some(PathBuf::from(v));
                } else {
                    out = Some(PathBuf::from(v));
                }
            }
            _ => flags.push(config::parse_flag(body)?),
        }
    }
    let out = out.ok_or_else(|| CliError::Usage("--out DIR is required".into()))?;
    Ok(Invocation {
        subcommand,
        config_file,
        out,
        flags,
    })
}

/// Caps the global worker pool at `BNSLAB_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("BNSLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("BNSLAB_THREADS must be a positive integer, got `{v}`")))?;
    // A second initialization in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Resolves the configuration and runs the subcommand, writing into `inv.out`.
pub fn execute(inv: &Invocation) -> Result<Outcome, CliError> {
    let schema = commands::schema(&inv.subcommand)
        .ok_or_else(|| CliError::Usage(format!("unknown subcommand `{}`\n{USAGE}", inv.subcommand)))?;
    let file = match &inv.config_file {
        Some(p) => config::parse_text(&fs::read_to_string(p)?)?,
        None => Vec::new(),
    };
    let cfg = Config::resolve(schema, &file, &inv.flags)?;
    fs::create_dir_all(&inv.out)?;
    let mut outcome = commands::run(&inv.subcommand, &cfg, &inv.out)?;
    write_checks(&inv.out, &inv.subcommand, &cfg, &outcome)?;
    outcome.files.push("checks.csv".into());
    Ok(outcome)
}

fn write_checks(out: &Path, sub: &str, cfg: &Config, outcome: &Outcome) -> Result<(), CliError> {
    let mut w = std::io::BufWriter::new(fs::File::create(out.join("checks.csv"))?);
    let mut comments = vec![("subcommand".to_string(), sub.to_string())];
    comments.extend(cfg.comments());
    bnslab_core::export::write_comments(&mut w, &comments)?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["check", "passed", "detail"]).map_err(core_csv)?;
    for ch in &outcome.checks {
        c.write_record([ch.name.as_str(), if ch.passed { "true" } else { "false" }, ch.detail.as_str()])
            .map_err(core_csv)?;
    }
    c.flush()?;
    Ok(())
}

pub(crate) fn core_csv(e: csv::Error) -> CliError {
    CliError::Core(bnslab_core::Error::from(e))
}

/// Full CLI entry point; returns the process exit status.
pub fn run<S: AsRef<str>>(args: &[S], stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = init_threads().and_then(|_| parse_args(args)).and_then(|inv| execute(&inv));
    match result {
        Ok(outcome) => {
            for c in &outcome.checks {
                let _ = writeln!(stdout, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            match outcome.first_failure() {
                None => EXIT_OK,
                Some(c) => {
                    let _ = writeln!(stderr, "check failed: {}", c.name);
                    EXIT_CHECK_FAILED
                }
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flags_and_out() {
        let inv = parse_args(&["toy2d", "--config", "a.cfg", "--sampler.gamma_sq=4", "--out=o", "--seed=2"]).unwrap();
        assert_eq!(inv.subcommand, "toy2d");
        assert_eq!(inv.config_file.as_deref(), Some(Path::new("a.cfg")));
        assert_eq!(inv.out, PathBuf::from("o"));
        assert_eq!(inv.flags.len(), 2);
        assert_eq!(inv.flags[1].section, "global");
    }

    #[test]
    fn out_is_required() {
        assert!(matches!(parse_args(&["toy2d"]), Err(CliError::Usage(_))));
        assert!(matches!(parse_args::<&str>(&[]), Err(CliError::Usage(_))));
        assert!(parse_args(&["toy2d", "stray", "--out", "o"]).is_err());
    }

    #[test]
    fn unknown_subcommand_is_an_execution_error() {
        let dir = std::env::temp_dir().join("bnslab-unknown-sub");
        let mut o = Vec::new();
        let mut e = Vec::new();
        let code = run(&["nope", "--out", dir.to_str().unwrap()], &mut o, &mut e);
        assert_eq!(code, EXIT_ERROR);
        assert!(String::from_utf8(e).unwrap().contains("unknown subcommand"));
    }
}
