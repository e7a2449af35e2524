//! Shared configuration for the two-circles subcommands: dataset, score
//! field (trained network or ring-mixture oracle) and panel helpers.

use std::path::Path;

use bnslab_core::export::write_dataset;
use bnslab_core::score::{dsm_train, Optimizer, TrainConfig};
use bnslab_core::toydata::{circles_ring_mixture, sample_circles, LabeledPoints};
use bnslab_core::{CirclesGeometry, CirclesSpec, MlpScoreNet, NoiseSchedule, PointCloud, Real, ScoreField};

use super::write_file;
use crate::config::Config;
use crate::svg::Panel;
use crate::{CliError, Outcome};

pub type Entry = (&'static str, &'static str, &'static str);

pub const CIRCLES_KEYS: &[Entry] = &[
    ("circles", "radius_major", "0.5"),
    ("circles", "radius_minor", "1.0"),
    ("circles", "ring_noise_sigma", "0.02"),
    ("circles", "imbalance", "10"),
    ("circles", "n_points", "100000"),
    ("circles", "seed", "0"),
    ("circles", "eps_manifold", "auto"),
];

pub const FIELD_KEYS: &[Entry] = &[
    ("field", "kind", "net"),
    ("field", "components_per_ring", "64"),
    ("field", "net_file", "none"),
    ("field", "save_net", "true"),
];

pub const TRAIN_KEYS: &[Entry] = &[
    ("train", "n_iterations", "40000"),
    ("train", "batch_size", "512"),
    ("train", "learning_rate", "3e-3"),
    ("train", "final_learning_rate", "1e-5"),
    ("train", "ema_decay", "0.999"),
    ("train", "step_exponent", "3"),
    ("train", "time_init_gain", "10"),
    ("train", "optimizer", "adam"),
    ("train", "hidden", "128,128"),
    ("train", "activation", "silu"),
    ("train", "seed", "0"),
];

pub const BASE_KEYS: &[Entry] = &[
    ("global", "seed", "0"),
    ("global", "precision", "f32"),
    ("schedule", "n_steps", "1000"),
    ("schedule", "beta_min", "1e-4"),
    ("schedule", "beta_max", "0.02"),
];

pub fn compose(parts: &[&[Entry]]) -> Vec<Entry> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

pub fn circles_spec(cfg: &Config) -> Result<CirclesSpec, CliError> {
    let spec = CirclesSpec {
        radius_major: cfg.get("circles", "radius_major")?,
        radius_minor: cfg.get("circles", "radius_minor")?,
        ring_noise_sigma: cfg.get("circles", "ring_noise_sigma")?,
        imbalance: cfg.get("circles", "imbalance")?,
        n_points: cfg.get("circles", "n_points")?,
        seed: cfg.get("circles", "seed")?,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn geometry(cfg: &Config, spec: &CirclesSpec) -> Result<CirclesGeometry, CliError> {
    let mut g = spec.geometry();
    if let Some(eps) = cfg.get_opt::<f64>("circles", "eps_manifold")? {
        if !(eps > 0.0) {
            return Err(CliError::Config("`circles.eps_manifold` must be positive".into()));
        }
        g.eps_manifold = eps;
    }
    Ok(g)
}

pub fn train_config(cfg: &Config) -> Result<TrainConfig, CliError> {
    let optimizer = match cfg.raw("train", "optimizer") {
        "sgd" => Optimizer::Sgd,
        "adam" => Optimizer::adam(),
        other => return Err(CliError::Config(format!("`train.optimizer` must be sgd or adam, got `{other}`"))),
    };
    let c = TrainConfig {
        n_iterations: cfg.get("train", "n_iterations")?,
        batch_size: cfg.get("train", "batch_size")?,
        learning_rate: cfg.get("train", "learning_rate")?,
        seed: cfg.get("train", "seed")?,
        hidden: cfg.get_list("train", "hidden")?,
        activation: cfg.raw("train", "activation").parse()?,
        optimizer,
        final_learning_rate: cfg.get_opt("train", "final_learning_rate")?,
        time_init_gain: cfg.get("train", "time_init_gain")?,
        step_exponent: cfg.get("train", "step_exponent")?,
        ema_decay: cfg.get_opt("train", "ema_decay")?,
    };
    c.validate()?;
    Ok(c)
}

/// Training set plus the score field selected by `field.kind`.
pub struct ToySetup<T: Real> {
    pub spec: CirclesSpec,
    pub geometry: CirclesGeometry,
    pub data: LabeledPoints<T>,
    pub field: ScoreField<T>,
    /// `(first-tenth, last-tenth)` mean training loss when a net was trained.
    pub loss: Option<(f64, f64)>,
}

pub fn setup<T: Real>(
    cfg: &Config,
    sched: &NoiseSchedule<T>,
    out: &Path,
    outcome: &mut Outcome,
) -> Result<ToySetup<T>, CliError> {
    let spec = circles_spec(cfg)?;
    let geometry = geometry(cfg, &spec)?;
    let data = sample_circles::<T>(&spec)?;
    let mut loss = None;
    let field = match cfg.raw("field", "kind") {
        "oracle" => ScoreField::Mixture(circles_ring_mixture(&spec, cfg.get("field", "components_per_ring")?)?),
        "net" => match cfg.get_opt::<String>("field", "net_file")? {
            Some(path) => ScoreField::Net(MlpScoreNet::from_bytes(&std::fs::read(&path)?)?),
            None => {
                let trained = dsm_train(&data.points, sched, &train_config(cfg)?)?;
                loss = trained.loss_head_tail();
                if cfg.get::<bool>("field", "save_net")? {
                    let bytes = trained.net.to_bytes();
                    std::fs::write(out.join("net.bns"), bytes)?;
                    outcome.files.push("net.bns".into());
                }
                ScoreField::Net(trained.net)
            }
        },
        other => return Err(CliError::Config(format!("`field.kind` must be net or oracle, got `{other}`"))),
    };
    if field.dim() != 2 {
        return Err(CliError::Config(format!("score field has dimension {}, expected 2", field.dim())));
    }
    let comments = cfg.comments();
    write_file(out, "dataset.csv", outcome, |w| {
        Ok(write_dataset(w, &data.points, &data.labels, &comments)?)
    })?;
    Ok(ToySetup {
        spec,
        geometry,
        data,
        field,
        loss,
    })
}

/// Square scatter panel framing both rings.
pub fn scatter<T: Real>(title: &str, points: &PointCloud<T>, geometry: &CirclesGeometry, max_points: usize) -> Panel {
    let r = geometry.radius_major.max(geometry.radius_minor) * 1.6;
    let mut p = Panel::new(title, (-r, r), (-r, r));
    let step = points.len().div_ceil(max_points.max(1)).max(1);
    let pts = points
        .rows()
        .step_by(step)
        .map(|x| (x[0].as_f64(), x[1].as_f64()))
        .collect();
    p.points("#1f77b4", 1.2, pts);
    for (rad, color) in [(geometry.radius_major, "#888"), (geometry.radius_minor, "#d62728")] {
        let ring = (0..=96)
            .map(|k| {
                let t = k as f64 / 96.0 * std::f64::consts::TAU;
                (rad * t.cos(), rad * t.sin())
            })
            .collect();
        p.line(color, true, ring);
    }
    p
}
