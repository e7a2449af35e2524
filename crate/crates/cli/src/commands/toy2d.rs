//! Two-circles panels: ground truth, standard, temperature, boost-only,
//! ODE with boost, and Boost-and-Skip.

use std::path::Path;
use std::sync::LazyLock;

use bnslab_core::dynamics::Dynamics;
use bnslab_core::export::{write_metrics, write_points, write_sample_batch, MetricRow};
use bnslab_core::metrics::{avg_knn, circles_report, CirclesReport};
use bnslab_core::rng::derive_seed;
use bnslab_core::samplers::{sample, SamplerConfig};
use bnslab_core::toydata::sample_circles;
use bnslab_core::{CirclesSpec, PointCloud, Real};

use super::toy::{compose, scatter, setup, Entry, BASE_KEYS, CIRCLES_KEYS, FIELD_KEYS, TRAIN_KEYS};
use super::{precision, proportion_z, schedule, write_file, write_text, Precision};
use crate::config::Config;
use crate::svg::render;
use crate::{CliError, Outcome};

pub static SCHEMA: LazyLock<Vec<Entry>> = LazyLock::new(|| {
    compose(&[
        BASE_KEYS,
        CIRCLES_KEYS,
        FIELD_KEYS,
        TRAIN_KEYS,
        &[
            ("toy2d", "n_samples", "5000"),
            ("toy2d", "gamma_sq", "4"),
            ("toy2d", "delta_skip", "700"),
            ("toy2d", "ode_delta_skip", "0"),
            ("toy2d", "tau", "1.1"),
            ("toy2d", "knn_k", "5"),
            ("check", "max_off_manifold", "0.05"),
            ("check", "min_minority_gain", "1.5"),
            ("check", "ci_z", "1.96"),
            ("check", "ode_off_ratio", "3"),
        ],
    ])
});

pub const PANELS: [&str; 6] = [
    "a_ground_truth",
    "b_standard",
    "c_temperature",
    "d_boost_only",
    "e_ode_boost",
    "f_boost_skip",
];

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
    if let Some((head, tail)) = toy.loss {
        outcome.check(
            "training_loss",
            tail < head,
            format!("mean loss first tenth {head:.5}, last tenth {tail:.5}"),
        );
    }

    let n: usize = cfg.get("toy2d", "n_samples")?;
    let seed: u64 = cfg.get("global", "seed")?;
    let gamma = cfg.get::<f64>("toy2d", "gamma_sq")?.sqrt();
    let delta: usize = cfg.get("toy2d", "delta_skip")?;
    let ode_delta: usize = cfg.get("toy2d", "ode_delta_skip")?;
    let tau: f64 = cfg.get("toy2d", "tau")?;
    let k: usize = cfg.get("toy2d", "knn_k")?;

    let truth = sample_circles::<T>(&CirclesSpec {
        n_points: n,
        seed: derive_seed(toy.spec.seed, 1),
        ..toy.spec.clone()
    })?;
    let configs = [
        SamplerConfig::standard(n, seed),
        SamplerConfig::temperature(tau, n, seed),
        SamplerConfig::boost_skip(gamma, 0, n, seed),
        SamplerConfig::boost_skip(gamma, ode_delta, n, seed).with_dynamics(Dynamics::Ode),
        SamplerConfig::boost_skip(gamma, delta, n, seed),
    ];
    let mut clouds: Vec<PointCloud<T>> = vec![truth.points.clone()];
    let mut reports: Vec<CirclesReport> = vec![circles_report(&truth.points, &toy.geometry)?];
    for (name, c) in PANELS[1..].iter().zip(&configs) {
        let batch = sample(&toy.field, &sched, c)?;
        reports.push(circles_report(&batch.points, &toy.geometry)?);
        write_file(out, &format!("{name}.csv"), &mut outcome, |w| {
            Ok(write_sample_batch(w, &batch)?)
        })?;
        clouds.push(batch.points);
    }
    let comments = cfg.comments();
    write_file(out, "a_ground_truth.csv", &mut outcome, |w| {
        Ok(write_points(w, &truth.points, &comments)?)
    })?;

    let mut rows = Vec::new();
    let mut knn = Vec::new();
    for ((name, r), cloud) in PANELS.iter().zip(&reports).zip(&clouds) {
        rows.push(MetricRow::scalar(format!("{name}.minority_fraction"), r.minority_fraction, r.n));
        rows.push(MetricRow::scalar(format!("{name}.majority_fraction"), r.majority_fraction, r.n));
        rows.push(MetricRow::scalar(format!("{name}.off_manifold_fraction"), r.off_manifold_fraction, r.n));
        let s = avg_knn(cloud, &truth.points, k)?;
        rows.push(MetricRow::from_stats(format!("{name}.avg_knn"), &s));
        knn.push(s.mean);
    }

    let (std, ode, bns, boost) = (&reports[1], &reports[4], &reports[5], &reports[3]);
    let truth_frac = toy.spec.minor_fraction();
    outcome.check(
        "standard_underrepresents_minority",
        std.minority_fraction < truth_frac,
        format!("standard {:.4} vs ground truth {:.4}", std.minority_fraction, truth_frac),
    );
    let gain: f64 = cfg.get("check", "min_minority_gain")?;
    let off_max: f64 = cfg.get("check", "max_off_manifold")?;
    outcome.check(
        "boost_skip_promotes_minority",
        bns.minority_fraction >= gain * std.minority_fraction && bns.off_manifold_fraction < off_max,
        format!(
            "boost-skip minority {:.4} ({:.2}x standard), off-manifold {:.4}",
            bns.minority_fraction,
            bns.minority_fraction / std.minority_fraction,
            bns.off_manifold_fraction
        ),
    );
    let z = proportion_z(boost.minority_fraction, boost.n, std.minority_fraction, std.n);
    let ci_z: f64 = cfg.get("check", "ci_z")?;
    outcome.check(
        "boost_only_null_effect",
        z.abs() <= ci_z,
        format!(
            "boost-only minority {:.4} vs standard {:.4}, z = {z:.3}",
            boost.minority_fraction, std.minority_fraction
        ),
    );
    let ratio: f64 = cfg.get("check", "ode_off_ratio")?;
    outcome.check(
        "ode_boost_off_manifold",
        ode.off_manifold_fraction >= ratio * bns.off_manifold_fraction && ode.off_manifold_fraction > 0.0,
        format!(
            "ODE+boost off-manifold {:.4} vs boost-skip {:.4}",
            ode.off_manifold_fraction, bns.off_manifold_fraction
        ),
    );
    outcome.check(
        "avg_knn_direction",
        knn[5] > knn[1],
        format!("mean AvgkNN boost-skip {:.5} vs standard {:.5}", knn[5], knn[1]),
    );

    write_file(out, "metrics.csv", &mut outcome, |w| Ok(write_metrics(w, &rows, &comments)?))?;
    let titles = [
        "(a) ground truth".to_string(),
        "(b) standard".to_string(),
        format!("(c) temperature tau={tau}"),
        format!("(d) boost only gamma^2={}", gamma * gamma),
        "(e) ODE + boost".to_string(),
        format!("(f) boost-and-skip delta={delta}"),
    ];
    let panels: Vec<_> = titles
        .iter()
        .zip(&clouds)
        .zip(&reports)
        .map(|((t, c), r)| {
            let mut p = scatter(t, c, &toy.geometry, 3000);
            p.legend("#d62728", format!("minority {:.3}", r.minority_fraction));
            p.legend("#444", format!("off-manifold {:.3}", r.off_manifold_fraction));
            p
        })
        .collect();
    write_text(out, "toy2d.svg", &mut outcome, &render(&panels, 3))?;
    Ok(outcome)
}
