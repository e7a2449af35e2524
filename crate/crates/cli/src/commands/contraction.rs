//! Coupled reference/boosted trajectories against the stochastic contraction
//! bound.

use std::path::Path;

use bnslab_core::rng::derive_seed;
use bnslab_core::samplers::coupled_errors;
use bnslab_core::theory::contraction_bound;
use bnslab_core::{GaussianSpecF64, ScoreField};

use super::{schedule, write_file};
use crate::config::{Config, Schema};
use crate::{core_csv, CliError, Outcome};

pub const SCHEMA: &Schema = &[
    ("global", "seed", "0"),
    ("schedule", "n_steps", "1000"),
    ("schedule", "beta_min", "1e-4"),
    ("schedule", "beta_max", "0.02"),
    ("gaussian", "dim", "1"),
    ("gaussian", "mean", "0"),
    ("gaussian", "sigma0_sq", "4"),
    ("contraction", "gammas", "1,2,3"),
    ("contraction", "alpha_skip", "0.5"),
    ("contraction", "delta_skip", "auto"),
    ("contraction", "n_pairs", "10000"),
    ("contraction", "n_pilot", "2000"),
    ("contraction", "pilot_margin", "1.5"),
    ("contraction", "initial_tolerance", "0.1"),
];

pub fn run(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let sched = schedule::<f64>(cfg)?;
    let d: usize = cfg.get("gaussian", "dim")?;
    let mut mean: Vec<f64> = cfg.get_list("gaussian", "mean")?;
    if mean.len() == 1 {
        mean = vec![mean[0]; d];
    }
    if mean.len() != d {
        return Err(CliError::Config(format!("`gaussian.mean` needs 1 or {d} values")));
    }
    let spec = GaussianSpecF64::isotropic(&mean, cfg.get("gaussian", "sigma0_sq")?)?;
    let field = ScoreField::Gaussian(spec);
    let plan = match cfg.get_opt::<usize>("contraction", "delta_skip")? {
        Some(delta) => sched.plan_skip(delta)?,
        None => sched.plan_for_alpha(cfg.get("contraction", "alpha_skip")?)?,
    };
    let gammas: Vec<f64> = cfg.get_list("contraction", "gammas")?;
    let n_pairs: usize = cfg.get("contraction", "n_pairs")?;
    let n_pilot: usize = cfg.get("contraction", "n_pilot")?;
    let margin: f64 = cfg.get("contraction", "pilot_margin")?;
    if !(margin >= 1.0) {
        return Err(CliError::Config("`contraction.pilot_margin` must be at least 1".into()));
    }
    let tol: f64 = cfg.get("contraction", "initial_tolerance")?;
    let seed: u64 = cfg.get("global", "seed")?;
    let n_skip = plan.n_skip;

    // B bounds the reference norm; estimate it from an independent pilot run.
    let pilot = coupled_errors(&field, &sched, 1.0, n_skip, n_pilot, derive_seed(seed, u64::MAX))?;
    let b = margin * pilot.max_reference_norm;

    let mut outcome = Outcome::default();
    let mut rows = Vec::new();
    for (k, &g) in gammas.iter().enumerate() {
        let run = coupled_errors(&field, &sched, g, n_skip, n_pairs, derive_seed(seed, k as u64))?;
        let mut violation = None;
        for &(i, m, se) in &run.curve {
            let bound = contraction_bound(&sched, i, n_skip, g, b, d)?;
            if violation.is_none() && m > bound.bound {
                violation = Some((i, m, bound.bound));
            }
            rows.push((g, i, m, se, bound));
        }
        outcome.check(
            format!("bound[gamma={g}]"),
            violation.is_none(),
            match violation {
                None => format!("error below the bound at all {} steps (B = {b:.4})", run.curve.len()),
                Some((i, m, bd)) => format!("bound violated at step i={i}: error {m:.6} > bound {bd:.6}"),
            },
        );
        let (_, e0, se0) = run.curve[0];
        let expected = run.reference_sq_norm_at_skip + g * g * d as f64;
        let cap = b * b + g * g * d as f64;
        outcome.check(
            format!("initial[gamma={g}]"),
            (e0 - expected).abs() <= tol * expected && e0 <= cap,
            format!(
                "initial error {e0:.5} (stderr {se0:.2e}); E|x|^2 + gamma^2 d = {expected:.5}; B^2 + gamma^2 d = {cap:.5}"
            ),
        );
    }

    let mut comments = cfg.comments();
    comments.push(("run.n_skip".into(), n_skip.to_string()));
    comments.push(("run.alpha_at_skip".into(), plan.alpha_at_skip.to_string()));
    comments.push(("run.B".into(), b.to_string()));
    write_file(out, "contraction.csv", &mut outcome, |w| {
        let mut w = w;
        bnslab_core::export::write_comments(&mut w, &comments)?;
        let mut c = csv::Writer::from_writer(w);
        c.write_record([
            "gamma", "i", "error_mean", "error_stderr", "bound", "floor", "transient", "lambda",
        ])
        .map_err(core_csv)?;
        for (g, i, m, se, bd) in &rows {
            c.write_record([
                g.to_string(),
                i.to_string(),
                m.to_string(),
                se.to_string(),
                bd.bound.to_string(),
                bd.floor.to_string(),
                bd.transient.to_string(),
                bd.lambda.to_string(),
            ])
            .map_err(core_csv)?;
        }
        c.flush()?;
        Ok(())
    })?;
    Ok(outcome)
}
