//! Sample with the exact Gaussian score and compare output moments against
//! the closed-form Boost-and-Skip predictions.

use std::path::Path;

use bnslab_core::dynamics::Dynamics;
use bnslab_core::export::{write_comparison, ComparisonRow};
use bnslab_core::metrics::empirical_moments;
use bnslab_core::samplers::{sample_with, SamplerConfig};
use bnslab_core::theory::{boosted_init, predict_bns_ode, predict_bns_sde};
use bnslab_core::{GaussianSpec, Real, ScoreField};

use super::{precision, schedule, write_file, Precision};
use crate::config::{Config, Schema};
use crate::{CliError, Outcome};

pub const SCHEMA: &Schema = &[
    ("global", "seed", "0"),
    ("global", "precision", "f64"),
    ("schedule", "n_steps", "1000"),
    ("schedule", "beta_min", "1e-4"),
    ("schedule", "beta_max", "0.02"),
    ("gaussian", "dim", "1"),
    ("gaussian", "mean", "0"),
    ("gaussian", "sigma0_sq", "4"),
    ("sampler", "gamma_sq", "4"),
    ("sampler", "alpha_skip", "0.5"),
    ("sampler", "delta_skip", "auto"),
    ("sampler", "dynamics", "sde"),
    ("sampler", "n_samples", "100000"),
    ("sampler", "init", "boosted"),
    ("check", "z_max", "4"),
];

pub fn run(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    match precision(cfg)? {
        Precision::F64 => run_t::<f64>(cfg, out),
        Precision::F32 => run_t::<f32>(cfg, out),
    }
}

fn run_t<T: Real>(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let sched = schedule::<T>(cfg)?;
    let d: usize = cfg.get("gaussian", "dim")?;
    let mut mean: Vec<f64> = cfg.get_list("gaussian", "mean")?;
    if mean.len() == 1 {
        mean = vec![mean[0]; d];
    }
    if mean.len() != d {
        return Err(CliError::Config(format!("`gaussian.mean` needs 1 or {d} values")));
    }
    let mean: Vec<T> = mean.into_iter().map(T::of).collect();
    let spec = GaussianSpec::isotropic(&mean, T::of(cfg.get("gaussian", "sigma0_sq")?))?;

    let gamma_sq: f64 = cfg.get("sampler", "gamma_sq")?;
    if !(gamma_sq > 0.0) {
        return Err(CliError::Config("`sampler.gamma_sq` must be positive".into()));
    }
    let plan = match cfg.get_opt::<usize>("sampler", "delta_skip")? {
        Some(delta) => sched.plan_skip(delta)?,
        None => sched.plan_for_alpha(T::of(cfg.get("sampler", "alpha_skip")?))?,
    };
    let dynamics: Dynamics = cfg.raw("sampler", "dynamics").parse()?;
    let n: usize = cfg.get("sampler", "n_samples")?;
    let seed: u64 = cfg.get("global", "seed")?;
    let z_max: f64 = cfg.get("check", "z_max")?;

    let (init_mean, init_cov, init_law) = match cfg.raw("sampler", "init") {
        "boosted" => {
            let (m, c) = boosted_init(d, T::of(gamma_sq.sqrt()));
            (m, c, None)
        }
        "marginal" => {
            let (m, c) = spec.marginal_at_alpha(plan.alpha_at_skip);
            let law = GaussianSpec::new(m.clone(), c.clone())?;
            (m, c, Some(law))
        }
        other => {
            return Err(CliError::Config(format!(
                "`sampler.init` must be boosted or marginal, got `{other}`"
            )))
        }
    };
    let gamma = if init_law.is_some() { 1.0 } else { gamma_sq.sqrt() };
    let sampler = SamplerConfig::boost_skip(gamma, plan.delta_skip, n, seed).with_dynamics(dynamics);
    let predicted = match dynamics {
        Dynamics::Stochastic => predict_bns_sde(&spec, &plan, &init_mean, &init_cov)?,
        Dynamics::Ode => predict_bns_ode(&spec, &plan, &init_mean, &init_cov)?,
    };

    let field = ScoreField::Gaussian(spec.clone());
    let batch = sample_with(&field, &sched, &sampler, init_law.as_ref(), None)?;
    let m = empirical_moments(&batch.points)?;

    let mut rows = Vec::new();
    for k in 0..d {
        let q = if d == 1 { String::new() } else { format!("[{k}]") };
        rows.push(ComparisonRow::new(
            format!("mean{q}"),
            predicted.mean[k].as_f64(),
            m.mean[k],
            m.mean_stderr[k],
        ));
        rows.push(ComparisonRow::new(
            format!("var{q}"),
            predicted.cov[(k, k)].as_f64(),
            m.cov[(k, k)],
            m.var_stderr[k],
        ));
    }

    let mut outcome = Outcome::default();
    for r in &rows {
        let z = r.z_score();
        outcome.check(
            r.quantity.clone(),
            z.is_finite() && z.abs() <= z_max,
            format!(
                "predicted {:.6} empirical {:.6} stderr {:.2e} z {:.3}",
                r.predicted, r.empirical, r.mc_stderr, z
            ),
        );
    }

    let mut comments = cfg.comments();
    comments.extend(batch.config.describe().into_iter().map(|(k, v)| (format!("run.{k}"), v)));
    comments.push(("run.n_skip".into(), plan.n_skip.to_string()));
    comments.push(("run.alpha_at_skip".into(), plan.alpha_at_skip.as_f64().to_string()));
    comments.push(("run.low_signal".into(), plan.low_signal.to_string()));
    write_file(out, "comparison.csv", &mut outcome, |w| {
        Ok(write_comparison(w, &rows, &comments)?)
    })?;
    Ok(outcome)
}
