//! Subcommands. Each exposes a `SCHEMA` of accepted keys and a `run`.

pub mod ablation;
pub mod contraction;
pub mod corollary;
pub mod spectral;
pub mod toy;
pub mod toy2d;
pub mod trajectory;
pub mod verify;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use bnslab_core::{NoiseSchedule, Real};

use crate::config::{Config, Schema};
use crate::{CliError, Outcome};

pub const SUBCOMMANDS: [&str; 7] = [
    "verify-gaussian",
    "corollary-scan",
    "toy2d",
    "trajectory",
    "contraction",
    "spectral",
    "ablation",
];

pub fn schema(sub: &str) -> Option<&'static Schema> {
    Some(match sub {
        "verify-gaussian" => verify::SCHEMA,
        "corollary-scan" => corollary::SCHEMA,
        "toy2d" => toy2d::SCHEMA.as_slice(),
        "trajectory" => trajectory::SCHEMA.as_slice(),
        "contraction" => contraction::SCHEMA,
        "spectral" => spectral::SCHEMA,
        "ablation" => ablation::SCHEMA.as_slice(),
        _ => return None,
    })
}

pub fn run(sub: &str, cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    match sub {
        "verify-gaussian" => verify::run(cfg, out),
        "corollary-scan" => corollary::run(cfg, out),
        "toy2d" => toy2d::run(cfg, out),
        "trajectory" => trajectory::run(cfg, out),
        "contraction" => contraction::run(cfg, out),
        "spectral" => spectral::run(cfg, out),
        "ablation" => ablation::run(cfg, out),
        _ => Err(CliError::Usage(format!("unknown subcommand `{sub}`"))),
    }
}

/// Scalar type selected by `global.precision`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

pub fn precision(cfg: &Config) -> Result<Precision, CliError> {
    match cfg.raw("global", "precision") {
        "f64" => Ok(Precision::F64),
        "f32" => Ok(Precision::F32),
        other => Err(CliError::Config(format!("`global.precision` must be f32 or f64, got `{other}`"))),
    }
}

pub fn schedule<T: Real>(cfg: &Config) -> Result<NoiseSchedule<T>, CliError> {
    Ok(NoiseSchedule::linear(
        cfg.get("schedule", "n_steps")?,
        T::of(cfg.get("schedule", "beta_min")?),
        T::of(cfg.get("schedule", "beta_max")?),
    )?)
}

/// Creates `out/name` and hands a buffered writer to `f`.
pub fn write_file<F>(out: &Path, name: &str, outcome: &mut Outcome, f: F) -> Result<(), CliError>
where
    F: FnOnce(BufWriter<File>) -> Result<(), CliError>,
{
    f(BufWriter::new(File::create(out.join(name))?))?;
    outcome.files.push(name.to_string());
    Ok(())
}

pub fn write_text(out: &Path, name: &str, outcome: &mut Outcome, text: &str) -> Result<(), CliError> {
    std::fs::write(out.join(name), text)?;
    outcome.files.push(name.to_string());
    Ok(())
}

/// Mean and standard error.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Two-proportion z statistic.
pub fn proportion_z(p1: f64, n1: usize, p2: f64, n2: usize) -> f64 {
    let pooled = (p1 * n1 as f64 + p2 * n2 as f64) / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    if se == 0.0 {
        if p1 == p2 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (p1 - p2) / se
    }
}

pub fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
