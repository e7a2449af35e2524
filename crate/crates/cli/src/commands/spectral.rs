//! Band energies of white and boosted noise fields.

use std::path::Path;

use bnslab_core::export::{write_comparison, write_noise_field, ComparisonRow};
use bnslab_core::rng::RngStream;
use bnslab_core::spectral::{band_energy, filter_noise, low_band_count, BandEnergy, FilterKind, NoiseField};

use super::{mean_se, write_file};
use crate::config::{Config, Schema};
use crate::{core_csv, CliError, Outcome};

pub const SCHEMA: &Schema = &[
    ("global", "seed", "0"),
    ("spectral", "rows", "64"),
    ("spectral", "cols", "64"),
    ("spectral", "gamma", "2"),
    ("spectral", "cutoffs", "0,2,4,8,16,32"),
    ("spectral", "n_fields", "200"),
    ("spectral", "z_max", "4"),
];

pub fn run(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let rows: usize = cfg.get("spectral", "rows")?;
    let cols: usize = cfg.get("spectral", "cols")?;
    let gamma: f64 = cfg.get("spectral", "gamma")?;
    let cutoffs: Vec<f64> = cfg.get_list("spectral", "cutoffs")?;
    let n_fields: usize = cfg.get("spectral", "n_fields")?;
    let z_max: f64 = cfg.get("spectral", "z_max")?;
    let seed: u64 = cfg.get("global", "seed")?;
    if n_fields < 2 {
        return Err(CliError::Config("`spectral.n_fields` must be at least 2".into()));
    }
    if !(gamma > 0.0) {
        return Err(CliError::Config("`spectral.gamma` must be positive".into()));
    }

    let mut worst_plancherel: f64 = 0.0;
    let mut worst_scaling: f64 = 0.0;
    let mut fractions = vec![Vec::with_capacity(n_fields); cutoffs.len()];
    let mut table: Vec<(&str, f64, BandEnergy)> = Vec::new();
    let mut first = None;
    for k in 0..n_fields {
        let white = NoiseField::white(rows, cols, 1.0, &mut RngStream::new(seed, k as u64))?;
        let boosted = white.scaled(gamma);
        for (ci, &c) in cutoffs.iter().enumerate() {
            let e = band_energy(&white, c)?;
            let eb = band_energy(&boosted, c)?;
            worst_plancherel = worst_plancherel.max(e.plancherel_error()).max(eb.plancherel_error());
            let g2 = gamma * gamma;
            let dev = ((eb.low - g2 * e.low).abs() + (eb.high - g2 * e.high).abs()) / eb.total;
            worst_scaling = worst_scaling.max(dev);
            fractions[ci].push(e.low / e.total);
            if k == 0 {
                table.push(("white", c, e));
                table.push(("boosted", c, eb));
            }
        }
        if k == 0 {
            first = Some(boosted);
        }
    }

    let mut outcome = Outcome::default();
    outcome.check(
        "plancherel",
        worst_plancherel <= 1e-8,
        format!("max |low + high - total| / total = {worst_plancherel:.3e}"),
    );
    outcome.check(
        "gamma_scaling",
        worst_scaling <= 1e-9,
        format!("max relative deviation from gamma^2 scaling = {worst_scaling:.3e}"),
    );
    let total = (rows * cols) as f64;
    let mut comparison = Vec::new();
    for (ci, &c) in cutoffs.iter().enumerate() {
        let predicted = low_band_count(rows, cols, c) as f64 / total;
        let (m, se) = mean_se(&fractions[ci]);
        let row = ComparisonRow::new(format!("low_fraction[cutoff={c}]"), predicted, m, se);
        let z = row.z_score();
        let ok = if se > 0.0 { z.abs() <= z_max } else { (m - predicted).abs() <= 1e-9 };
        outcome.check(
            format!("flat_spectrum[cutoff={c}]"),
            ok,
            format!("bin fraction {predicted:.6}, mean energy fraction {m:.6} (stderr {se:.2e})"),
        );
        comparison.push(row);
    }

    let comments = cfg.comments();
    write_file(out, "band_energy.csv", &mut outcome, |w| {
        let mut w = w;
        bnslab_core::export::write_comments(&mut w, &comments)?;
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["field", "cutoff", "low", "high", "total", "plancherel_error"])
            .map_err(core_csv)?;
        for (name, cut, e) in &table {
            c.write_record([
                name.to_string(),
                cut.to_string(),
                e.low.to_string(),
                e.high.to_string(),
                e.total.to_string(),
                e.plancherel_error().to_string(),
            ])
            .map_err(core_csv)?;
        }
        c.flush()?;
        Ok(())
    })?;
    write_file(out, "proportionality.csv", &mut outcome, |w| {
        Ok(write_comparison(w, &comparison, &comments)?)
    })?;
    if let Some(b) = first {
        let mid = cutoffs.get(cutoffs.len() / 2).copied().unwrap_or(0.0);
        write_file(out, "noise_boosted.csv", &mut outcome, |w| Ok(write_noise_field(w, &b)?))?;
        let low = filter_noise(&b, mid, FilterKind::LowPass)?;
        write_file(out, "noise_boosted_lowpass.csv", &mut outcome, |w| {
            Ok(write_noise_field(w, &low)?)
        })?;
    }
    Ok(outcome)
}
