//! Mean norm, Tweedie-denoised norm and estimation error along the reverse
//! trajectories of several samplers.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{LazyLock, Mutex};

use bnslab_core::dynamics::{estimation_error_batch, posterior_mean_batch, Dynamics};
use bnslab_core::export::{write_trajectory_rows, TrajectoryRow};
use bnslab_core::real::norm;
use bnslab_core::rng::{derive_seed, RngStream};
use bnslab_core::samplers::{sample_with, SamplerConfig};
use bnslab_core::{NoiseSchedule, Real, ScoreField};

use super::toy::{compose, setup, Entry, BASE_KEYS, CIRCLES_KEYS, FIELD_KEYS, TRAIN_KEYS};
use super::{precision, schedule, write_file, write_text, Precision};
use crate::config::Config;
use crate::svg::{color, render, Panel};
use crate::{CliError, Outcome};

pub static SCHEMA: LazyLock<Vec<Entry>> = LazyLock::new(|| {
    compose(&[
        BASE_KEYS,
        CIRCLES_KEYS,
        FIELD_KEYS,
        TRAIN_KEYS,
        &[
            ("field", "kind", "oracle"),
            ("trajectory", "n_trajectories", "1000"),
            ("trajectory", "taus", "1.1"),
            ("trajectory", "gammas", "2,3,5"),
            ("trajectory", "delta_skip", "46"),
            ("trajectory", "ode", "true"),
            ("trajectory", "record_errors", "true"),
            ("check", "max_gap", "0.1"),
        ],
    ])
});

/// Per-index means over trajectories.
#[derive(Clone, Debug, Default)]
pub struct Curves {
    pub name: String,
    /// Indices from the start index down to 0.
    pub indices: Vec<usize>,
    pub norm: Vec<f64>,
    pub err: Vec<Option<f64>>,
    pub denoise_norm: Vec<Option<f64>>,
}

impl Curves {
    pub fn norm_at(&self, i: usize) -> Option<f64> {
        self.indices.iter().position(|&j| j == i).map(|k| self.norm[k])
    }
}

pub fn run(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    match precision(cfg)? {
        Precision::F64 => run_t::<f64>(cfg, out),
        Precision::F32 => run_t::<f32>(cfg, out),
    }
}

fn run_t<T: Real>(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let sched = schedule::<T>(cfg)?;
    let mut outcome = Outcome::default();
    let toy = setup::<T>(cfg, &sched, out, &mut outcome)?;
    let n: usize = cfg.get("trajectory", "n_trajectories")?;
    let seed: u64 = cfg.get("global", "seed")?;
    let taus: Vec<f64> = cfg.get_list("trajectory", "taus")?;
    let gammas: Vec<f64> = cfg.get_list("trajectory", "gammas")?;
    let delta: usize = cfg.get("trajectory", "delta_skip")?;
    let record_errors: bool = cfg.get("trajectory", "record_errors")?;
    let max_gap: f64 = cfg.get("check", "max_gap")?;

    let mut samplers = vec![("ddpm".to_string(), SamplerConfig::standard(n, seed))];
    samplers.push(("bns_g1_d0".to_string(), SamplerConfig::boost_skip(1.0, 0, n, seed)));
    for &t in &taus {
        samplers.push((format!("temp_{t}"), SamplerConfig::temperature(t, n, seed)));
    }
    for &g in &gammas {
        samplers.push((format!("bns_g{g}_d{delta}"), SamplerConfig::boost_skip(g, delta, n, seed)));
    }
    if cfg.get::<bool>("trajectory", "ode")? {
        samplers.push(("ode".to_string(), SamplerConfig::standard(n, seed).with_dynamics(Dynamics::Ode)));
    }

    let mut curves = Vec::new();
    for (name, c) in &samplers {
        curves.push(record(&toy.field, &sched, c, name, record_errors, seed)?);
    }

    let ddpm = &curves[0];
    let identical = curves[1].norm == ddpm.norm;
    outcome.check(
        "neutral_boost_skip_matches_ddpm",
        identical,
        if identical { "gamma=1, delta=0 curve is identical".into() } else { "curves differ".to_string() },
    );
    let n_skip = sched.n_steps() - delta;
    let mid = n_skip / 2;
    for c in curves.iter().filter(|c| c.name.starts_with("bns_g") && c.name != "bns_g1_d0") {
        let worst = (0..=mid)
            .filter_map(|i| Some(rel_gap(c.norm_at(i)?, ddpm.norm_at(i)?)))
            .fold(0.0, f64::max);
        outcome.check(
            format!("converges[{}]", c.name),
            worst < max_gap,
            format!("max relative norm gap for i <= {mid}: {worst:.4}"),
        );
    }
    let n_steps = sched.n_steps();
    let checkpoints: Vec<usize> = (0..=10).rev().map(|k| k * n_steps / 10).collect();
    for c in curves.iter().filter(|c| c.name.starts_with("temp_")) {
        let gaps: Vec<f64> = checkpoints
            .iter()
            .map(|&i| rel_gap(c.norm_at(i).unwrap_or(f64::NAN), ddpm.norm_at(i).unwrap_or(f64::NAN)))
            .collect();
        let monotone = gaps.windows(2).all(|w| w[1] >= w[0]) && gaps.last().copied().unwrap_or(0.0) > 0.0;
        outcome.check(
            format!("diverges[{}]", c.name),
            monotone,
            format!(
                "relative gap at i = {:?}: {}",
                checkpoints,
                gaps.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>().join(" ")
            ),
        );
    }

    let rows: Vec<TrajectoryRow> = curves
        .iter()
        .flat_map(|c| {
            (0..c.indices.len()).map(move |k| TrajectoryRow {
                traj_id: c.name.clone(),
                i: c.indices[k],
                norm: c.norm[k],
                err: c.err[k],
                denoise_norm: c.denoise_norm[k],
            })
        })
        .collect();
    let comments = cfg.comments();
    write_file(out, "trajectories.csv", &mut outcome, |w| {
        Ok(write_trajectory_rows(w, &rows, &comments)?)
    })?;

    let nf = n_steps as f64;
    let mut norm_panel = Panel::new("mean norm", (1.0, 0.0), (0.0, 1.0)).labels("t / T", "E|x_t|");
    let mut err_panel = Panel::new("estimation error", (1.0, 0.0), (0.0, 1.0)).labels("t / T", "error");
    for (k, c) in curves.iter().enumerate() {
        let t = |i: usize| i as f64 / nf;
        norm_panel.line(color(k), c.name == "bns_g1_d0", c.indices.iter().zip(&c.norm).map(|(&i, &v)| (t(i), v)).collect());
        norm_panel.legend(color(k), c.name.clone());
        let e: Vec<(f64, f64)> = c.indices.iter().zip(&c.err).filter_map(|(&i, v)| Some((t(i), (*v)?))).collect();
        if !e.is_empty() {
            err_panel.line(color(k), false, e);
        }
    }
    norm_panel.fit_y();
    err_panel.fit_y();
    write_text(out, "trajectory.svg", &mut outcome, &render(&[norm_panel, err_panel], 2))?;
    Ok(outcome)
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

type Partial = [f64; 3];

/// Runs one sampler and averages per-index statistics over trajectories.
pub fn record<T: Real>(
    field: &ScoreField<T>,
    sched: &NoiseSchedule<T>,
    config: &SamplerConfig,
    name: &str,
    errors: bool,
    seed: u64,
) -> Result<Curves, CliError> {
    let sums: Mutex<BTreeMap<(usize, usize), Partial>> = Mutex::new(BTreeMap::new());
    let failure: Mutex<Option<bnslab_core::Error>> = Mutex::new(None);
    let probe_seed = derive_seed(seed, 0x70_72_6f_62_65);
    let d = field.dim();
    let observer = |i: usize, first: usize, xs: &[T]| {
        let mut p = [0.0; 3];
        p[0] = xs.chunks_exact(d).map(|x| norm(x).as_f64()).sum();
        if errors && i > 0 {
            let stats = posterior_mean_batch(field, sched, xs, i).and_then(|den| {
                let mut rngs: Vec<RngStream> = (0..xs.len() / d)
                    .map(|j| RngStream::new(derive_seed(probe_seed, i as u64), (first + j) as u64))
                    .collect();
                let e = estimation_error_batch(field, sched, xs, i, &mut rngs)?;
                Ok((den, e))
            });
            match stats {
                Ok((den, e)) => {
                    p[1] = e.iter().map(|v| v.as_f64()).sum();
                    p[2] = den.chunks_exact(d).map(|x| norm(x).as_f64()).sum();
                }
                Err(err) => {
                    failure.lock().unwrap().get_or_insert(err);
                }
            }
        }
        sums.lock().unwrap().insert((i, first), p);
    };
    sample_with(field, sched, config, None, Some(&observer))?;
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e.into());
    }
    let sums = sums.into_inner().unwrap();
    let mut by_index: BTreeMap<usize, Partial> = BTreeMap::new();
    for ((i, _), p) in sums {
        let acc = by_index.entry(i).or_insert([0.0; 3]);
        for k in 0..3 {
            acc[k] += p[k];
        }
    }
    let n = config.n_samples as f64;
    let mut c = Curves {
        name: name.to_string(),
        ..Curves::default()
    };
    for (i, p) in by_index.into_iter().rev() {
        c.indices.push(i);
        c.norm.push(p[0] / n);
        let has = errors && i > 0;
        c.err.push(has.then(|| p[1] / n));
        c.denoise_norm.push(has.then(|| p[2] / n));
    }
    Ok(c)
}
