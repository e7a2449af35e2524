//! (γ², Δ) grid on the two-circles data: boost-only, skip-only and combined
//! cells, plus an ODE-versus-stochastic comparison at one boost level.

use std::path::Path;
use std::sync::LazyLock;

use bnslab_core::dynamics::Dynamics;
use bnslab_core::metrics::{avg_knn, circles_report, CirclesReport};
use bnslab_core::rng::derive_seed;
use bnslab_core::samplers::{sample, sample_grid, SamplerConfig};
use bnslab_core::toydata::sample_circles;
use bnslab_core::{CirclesSpec, Real};

use super::toy::{compose, setup, Entry, BASE_KEYS, CIRCLES_KEYS, FIELD_KEYS, TRAIN_KEYS};
use super::{precision, proportion_z, schedule, write_file, Precision};
use crate::config::Config;
use crate::{core_csv, CliError, Outcome};

pub static SCHEMA: LazyLock<Vec<Entry>> = LazyLock::new(|| {
    compose(&[
        BASE_KEYS,
        CIRCLES_KEYS,
        FIELD_KEYS,
        TRAIN_KEYS,
        &[
            ("ablation", "gamma_sq", "1,2,4,9"),
            ("ablation", "deltas", "0,300,600,700,900"),
            ("ablation", "n_samples", "2000"),
            ("ablation", "ode_gamma_sq", "4"),
            ("ablation", "knn_k", "5"),
            ("check", "ci_z", "3"),
            ("check", "ode_off_ratio", "3"),
        ],
    ])
});

#[derive(Clone, Debug)]
pub struct CellResult {
    pub block: &'static str,
    pub gamma_sq: f64,
    pub delta_skip: usize,
    pub seed: u64,
    pub dynamics: Dynamics,
    pub report: Option<CirclesReport>,
    pub avg_knn: Option<f64>,
    pub error: Option<String>,
}

fn block(gamma_sq: f64, delta: usize) -> &'static str {
    match (gamma_sq == 1.0, delta == 0) {
        (true, true) => "standard",
        (false, true) => "boost_only",
        (true, false) => "skip_only",
        (false, false) => "combined",
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
    let gamma_sq: Vec<f64> = cfg.get_list("ablation", "gamma_sq")?;
    let deltas: Vec<usize> = cfg.get_list("ablation", "deltas")?;
    let n: usize = cfg.get("ablation", "n_samples")?;
    let k: usize = cfg.get("ablation", "knn_k")?;
    let seed: u64 = cfg.get("global", "seed")?;
    if gamma_sq.iter().any(|&g| !(g > 0.0)) {
        return Err(CliError::Config("`ablation.gamma_sq` values must be positive".into()));
    }
    let reference = sample_circles::<T>(&CirclesSpec {
        n_points: n,
        seed: derive_seed(toy.spec.seed, 1),
        ..toy.spec.clone()
    })?;

    let gammas: Vec<f64> = gamma_sq.iter().map(|g| g.sqrt()).collect();
    let base = SamplerConfig::boost_skip(1.0, 0, n, seed);
    let grid = sample_grid(&toy.field, &sched, &base, &gammas, &deltas)?;
    let mut cells = Vec::new();
    for (c, cell) in grid.into_iter().enumerate() {
        let g2 = gamma_sq[c / deltas.len()];
        let mut r = CellResult {
            block: block(g2, cell.delta_skip),
            gamma_sq: g2,
            delta_skip: cell.delta_skip,
            seed: cell.seed,
            dynamics: Dynamics::Stochastic,
            report: None,
            avg_knn: None,
            error: None,
        };
        match cell.result {
            Ok(batch) => {
                r.report = Some(circles_report(&batch.points, &toy.geometry)?);
                r.avg_knn = Some(avg_knn(&batch.points, &reference.points, k)?.mean);
            }
            Err(e) => r.error = Some(e.to_string()),
        }
        cells.push(r);
    }

    let ode_g2: f64 = cfg.get("ablation", "ode_gamma_sq")?;
    let mut paired = Vec::new();
    for (tag, dynamics) in [("sde_pair", Dynamics::Stochastic), ("ode_pair", Dynamics::Ode)] {
        let cfg_s = SamplerConfig::boost_skip(ode_g2.sqrt(), 0, n, derive_seed(seed, u64::MAX)).with_dynamics(dynamics);
        let mut r = CellResult {
            block: tag,
            gamma_sq: ode_g2,
            delta_skip: 0,
            seed: cfg_s.seed,
            dynamics,
            report: None,
            avg_knn: None,
            error: None,
        };
        match sample(&toy.field, &sched, &cfg_s) {
            Ok(b) => {
                r.report = Some(circles_report(&b.points, &toy.geometry)?);
                r.avg_knn = Some(avg_knn(&b.points, &reference.points, k)?.mean);
            }
            Err(e) => r.error = Some(e.to_string()),
        }
        paired.push(r);
    }

    checks(cfg, &cells, &paired, &mut outcome)?;

    let comments = cfg.comments();
    write_file(out, "ablation.csv", &mut outcome, |w| {
        let mut w = w;
        bnslab_core::export::write_comments(&mut w, &comments)?;
        let mut c = csv::Writer::from_writer(w);
        c.write_record([
            "block",
            "gamma_sq",
            "delta_skip",
            "dynamics",
            "seed",
            "n",
            "minority_fraction",
            "majority_fraction",
            "off_manifold_fraction",
            "avg_knn",
            "error",
        ])
        .map_err(core_csv)?;
        for r in cells.iter().chain(&paired) {
            let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let rep = r.report.as_ref();
            c.write_record([
                r.block.to_string(),
                r.gamma_sq.to_string(),
                r.delta_skip.to_string(),
                r.dynamics.name().to_string(),
                r.seed.to_string(),
                rep.map(|x| x.n.to_string()).unwrap_or_default(),
                f(rep.map(|x| x.minority_fraction)),
                f(rep.map(|x| x.majority_fraction)),
                f(rep.map(|x| x.off_manifold_fraction)),
                f(r.avg_knn),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(core_csv)?;
        }
        c.flush()?;
        Ok(())
    })?;
    Ok(outcome)
}

fn checks(cfg: &Config, cells: &[CellResult], paired: &[CellResult], outcome: &mut Outcome) -> Result<(), CliError> {
    let ci_z: f64 = cfg.get("check", "ci_z")?;
    let ok = |r: &&CellResult| r.report.is_some();
    let standard = cells.iter().filter(ok).find(|r| r.block == "standard");
    if let Some(s) = standard {
        let sr = s.report.as_ref().unwrap();
        let worst = cells
            .iter()
            .filter(ok)
            .filter(|r| r.block == "boost_only")
            .map(|r| {
                let rr = r.report.as_ref().unwrap();
                proportion_z(rr.minority_fraction, rr.n, sr.minority_fraction, sr.n).abs()
            })
            .fold(0.0, f64::max);
        outcome.check(
            "boost_only_flat",
            worst <= ci_z,
            format!("max |z| of boost-only minority fraction vs standard: {worst:.3}"),
        );
        if let Some(far) = cells
            .iter()
            .filter(ok)
            .filter(|r| r.block == "skip_only")
            .max_by_key(|r| r.delta_skip)
        {
            let (a, b) = (sr.off_manifold_fraction, far.report.as_ref().unwrap().off_manifold_fraction);
            outcome.check(
                "skip_only_degrades",
                b > 2.0 * a && b - a > 0.05,
                format!("off-manifold at delta={}: {b:.4} vs {a:.4} unskipped", far.delta_skip),
            );
        }
    }
    if let Some(best) = cells
        .iter()
        .filter(ok)
        .max_by(|a, b| {
            let (x, y) = (a.report.as_ref().unwrap(), b.report.as_ref().unwrap());
            x.minority_fraction.total_cmp(&y.minority_fraction)
        })
    {
        outcome.check(
            "best_cell_combined",
            best.block == "combined",
            format!(
                "highest minority fraction {:.4} at gamma^2={}, delta={} ({})",
                best.report.as_ref().unwrap().minority_fraction,
                best.gamma_sq,
                best.delta_skip,
                best.block
            ),
        );
    }
    if let [sde, ode] = paired {
        if let (Some(s), Some(o)) = (&sde.report, &ode.report) {
            let ratio: f64 = cfg.get("check", "ode_off_ratio")?;
            outcome.check(
                "ode_off_manifold",
                o.off_manifold_fraction >= ratio * s.off_manifold_fraction && o.off_manifold_fraction > 0.0,
                format!(
                    "gamma^2={}: ODE off-manifold {:.4} vs stochastic {:.4}",
                    sde.gamma_sq, o.off_manifold_fraction, s.off_manifold_fraction
                ),
            );
        }
    }
    let failed = cells.iter().chain(paired).filter(|r| r.error.is_some()).count();
    outcome.check("cells_completed", failed == 0, format!("{failed} cells failed"));
    Ok(())
}
