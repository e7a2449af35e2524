//! Output variance of a boosted scalar Gaussian as a function of the skip
//! start, with the closed-form amplification regions.

use std::path::Path;

use bnslab_core::theory::{amplification_region, boosted_init, predict_bns_sde_at, AmplificationRegion, RegionCase};
use bnslab_core::GaussianSpecF64;

use super::{schedule, write_file, write_text};
use crate::config::{Config, Schema};
use crate::svg::{color, render, Panel};
use crate::{core_csv, CliError, Outcome};

pub const SCHEMA: &Schema = &[
    ("global", "seed", "0"),
    ("schedule", "n_steps", "1000"),
    ("schedule", "beta_min", "1e-4"),
    ("schedule", "beta_max", "0.02"),
    ("corollary", "sigma0", "2"),
    ("corollary", "gammas", "0.5,1.5,2,3"),
];

pub struct Curve {
    pub gamma: f64,
    /// `σ̂₀²` at start index `i = 0..=N`.
    pub var_hat: Vec<f64>,
    pub region: AmplificationRegion,
}

pub fn run(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let sched = schedule::<f64>(cfg)?;
    let sigma0: f64 = cfg.get("corollary", "sigma0")?;
    let gammas: Vec<f64> = cfg.get_list("corollary", "gammas")?;
    if gammas.is_empty() {
        return Err(CliError::Config("`corollary.gammas` must not be empty".into()));
    }
    let s2 = sigma0 * sigma0;
    let spec = GaussianSpecF64::isotropic(&[0.0], s2)?;
    let n = sched.n_steps();

    let mut curves = Vec::new();
    for &g in &gammas {
        let (m, c) = boosted_init(1, g);
        let var_hat = (0..=n)
            .map(|i| Ok(predict_bns_sde_at(&spec, sched.alpha_bar(i).sqrt(), &m, &c)?.cov[(0, 0)]))
            .collect::<Result<Vec<f64>, CliError>>()?;
        curves.push(Curve {
            gamma: g,
            var_hat,
            region: amplification_region(sigma0, g, &sched)?,
        });
    }

    let mut outcome = Outcome::default();
    for c in &curves {
        let mismatches: Vec<usize> = (1..=n).filter(|&i| c.region.contains(i) != (c.var_hat[i] > s2)).collect();
        outcome.check(
            format!("region[gamma={}]", c.gamma),
            mismatches.is_empty(),
            match mismatches.first() {
                None => format!("{} case agrees with the prediction at all {n} indices", c.region.case.name()),
                Some(i) => format!("{} mismatches, first at i={i}", mismatches.len()),
            },
        );
        if let (Some(b), Some(x)) = (c.region.boundary, crossing(c, s2)) {
            outcome.check(
                format!("crossing[gamma={}]", c.gamma),
                b.abs_diff(x) <= 1,
                format!("region boundary {b}, curve crossing {x}"),
            );
        }
        if c.gamma > 1.0 {
            outcome.check(
                format!("exceeds[gamma={}]", c.gamma),
                c.var_hat[n] > s2,
                format!("var_hat at T_skip=T is {:.6}", c.var_hat[n]),
            );
        } else if c.region.case == RegionCase::Empty {
            let max = c.var_hat[1..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            outcome.check(
                format!("below[gamma={}]", c.gamma),
                max <= s2,
                format!("max var_hat {max:.6}"),
            );
        }
    }
    let mut order: Vec<&Curve> = curves.iter().collect();
    order.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
    let unordered = (0..=n)
        .filter(|&i| order.windows(2).any(|w| w[0].var_hat[i] > w[1].var_hat[i]))
        .count();
    outcome.check(
        "ordering",
        unordered == 0,
        format!("curves increase with gamma at {} of {} indices", n + 1 - unordered, n + 1),
    );

    let comments = cfg.comments();
    write_file(out, "curves.csv", &mut outcome, |w| {
        let mut w = w;
        bnslab_core::export::write_comments(&mut w, &comments)?;
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["gamma", "i", "t", "alpha", "var_hat", "amplified", "in_region"])
            .map_err(core_csv)?;
        for cv in &curves {
            for i in 0..=n {
                c.write_record([
                    cv.gamma.to_string(),
                    i.to_string(),
                    (i as f64 / n as f64).to_string(),
                    sched.alpha_bar(i).sqrt().to_string(),
                    cv.var_hat[i].to_string(),
                    (cv.var_hat[i] > s2).to_string(),
                    cv.region.contains(i).to_string(),
                ])
                .map_err(core_csv)?;
            }
        }
        c.flush()?;
        Ok(())
    })?;
    write_file(out, "regions.csv", &mut outcome, |w| {
        let mut w = w;
        bnslab_core::export::write_comments(&mut w, &comments)?;
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["gamma", "case", "kappa", "boundary", "crossing"]).map_err(core_csv)?;
        for cv in &curves {
            let opt = |v: Option<String>| v.unwrap_or_default();
            c.write_record([
                cv.gamma.to_string(),
                cv.region.case.name().to_string(),
                opt(cv.region.kappa.map(|k| k.to_string())),
                opt(cv.region.boundary.map(|b| b.to_string())),
                opt(crossing(cv, s2).map(|x| x.to_string())),
            ])
            .map_err(core_csv)?;
        }
        c.flush()?;
        Ok(())
    })?;

    let mut panel = Panel::new(format!("output variance, sigma0 = {sigma0}"), (0.0, 1.0), (0.0, 1.0))
        .labels("T_skip / T", "var_hat");
    panel.line("#444", true, vec![(0.0, s2), (1.0, s2)]);
    panel.legend("#444", format!("sigma0^2 = {s2}"));
    for (k, cv) in curves.iter().enumerate() {
        let pts = (0..=n).map(|i| (i as f64 / n as f64, cv.var_hat[i])).collect();
        panel.line(color(k), false, pts);
        panel.legend(color(k), format!("gamma = {}", cv.gamma));
    }
    panel.fit_y();
    panel.y_range.0 = panel.y_range.0.min(0.0);
    write_text(out, "corollary.svg", &mut outcome, &render(&[panel], 1))?;
    Ok(outcome)
}

/// First index `i ≥ 1` where amplification switches on or off.
fn crossing(c: &Curve, s2: f64) -> Option<usize> {
    let n = c.var_hat.len() - 1;
    (2..=n).find(|&i| (c.var_hat[i] > s2) != (c.var_hat[i - 1] > s2))
}
