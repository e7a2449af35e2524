//! The named samplers: standard, Boost-and-Skip, temperature, each with
//! stochastic or probability-flow dynamics.
//!
//! Trajectory `j` of a run with seed `s` owns `RngStream::new(s, j)`: the
//! initial draw comes first, then the per-step noise. Neutral parameters in
//! any mode therefore reproduce the standard sampler bit for bit.

use std::fmt;
use std::str::FromStr;

use crate::dynamics::{run_reverse_batch, BatchObserver, Dynamics};
use crate::error::{Error, Result};
use crate::points::PointCloud;
use crate::rng::{derive_seed, RngStream};
use crate::schedule::NoiseSchedule;
use crate::score::{GaussianSpec, ScoreField};
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Standard,
    BoostSkip,
    Temperature,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Standard => "standard",
            Mode::BoostSkip => "boost_skip",
            Mode::Temperature => "temperature",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Mode::Standard),
            "boost_skip" | "boost-skip" => Ok(Mode::BoostSkip),
            "temperature" => Ok(Mode::Temperature),
            _ => Err(Error::param("mode", format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub mode: Mode,
    pub dynamics: Dynamics,
    pub gamma: f64,
    pub delta_skip: usize,
    pub tau: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::standard(1000, 0)
    }
}

impl SamplerConfig {
    pub fn standard(n_samples: usize, seed: u64) -> Self {
        Self {
            mode: Mode::Standard,
            dynamics: Dynamics::Stochastic,
            gamma: 1.0,
            delta_skip: 0,
            tau: 1.0,
            n_samples,
            seed,
        }
    }

    pub fn boost_skip(gamma: f64, delta_skip: usize, n_samples: usize, seed: u64) -> Self {
        Self {
            mode: Mode::BoostSkip,
            gamma,
            delta_skip,
            ..Self::standard(n_samples, seed)
        }
    }

    pub fn temperature(tau: f64, n_samples: usize, seed: u64) -> Self {
        Self {
            mode: Mode::Temperature,
            tau,
            ..Self::standard(n_samples, seed)
        }
    }

    pub fn with_dynamics(mut self, dynamics: Dynamics) -> Self {
        self.dynamics = dynamics;
        self
    }

    /// `γ < 1` with a skip: trades diversity for fidelity instead of
    /// promoting minorities.
    pub fn is_quality_mode(&self) -> bool {
        self.mode == Mode::BoostSkip && self.gamma < 1.0 && self.delta_skip > 0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::param("gamma", "must be positive and finite"));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::param("tau", "must be positive and finite"));
        }
        if self.n_samples == 0 {
            return Err(Error::param("n_samples", "must be at least 1"));
        }
        match self.mode {
            Mode::Standard => {
                if self.gamma != 1.0 || self.delta_skip != 0 || self.tau != 1.0 {
                    return Err(Error::param(
                        "mode",
                        "standard sampling requires gamma = 1, delta_skip = 0 and tau = 1",
                    ));
                }
            }
            Mode::Temperature => {
                if self.gamma != 1.0 || self.delta_skip != 0 {
                    return Err(Error::param(
                        "mode",
                        "temperature sampling requires gamma = 1 and delta_skip = 0",
                    ));
                }
            }
            Mode::BoostSkip => {
                if self.tau != 1.0 {
                    return Err(Error::param("tau", "Boost-and-Skip requires tau = 1"));
                }
            }
        }
        Ok(())
    }

    /// `key=value` pairs describing the run.
    pub fn describe(&self) -> Vec<(String, String)> {
        [
            ("mode", self.mode.name().to_string()),
            ("dynamics", self.dynamics.name().to_string()),
            ("gamma", self.gamma.to_string()),
            ("delta_skip", self.delta_skip.to_string()),
            ("tau", self.tau.to_string()),
            ("n_samples", self.n_samples.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub schedule_fingerprint: u64,
    pub field_tag: String,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "schedule={:016x} field={}", self.schedule_fingerprint, self.field_tag)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch<T: Real> {
    pub points: PointCloud<T>,
    pub config: SamplerConfig,
    pub provenance: Provenance,
}

/// Initialization law `N(0, γ²I)`; `γ` is forced to 1 outside Boost-and-Skip.
pub fn draw_init<T: Real>(config: &SamplerConfig, d: usize, rng: &mut RngStream) -> Vec<T> {
    let mut x = vec![T::zero(); d];
    draw_init_into(config, rng, &mut x);
    x
}

fn draw_init_into<T: Real>(config: &SamplerConfig, rng: &mut RngStream, out: &mut [T]) {
    rng.fill_normal(out);
    if config.mode == Mode::BoostSkip {
        let g = T::of(config.gamma);
        for v in out {
            *v *= g;
        }
    }
}

pub fn sample<T: Real>(
    field: &ScoreField<T>,
    schedule: &NoiseSchedule<T>,
    config: &SamplerConfig,
) -> Result<SampleBatch<T>> {
    sample_with(field, schedule, config, None, None)
}

/// [`sample`] with an optional replacement initialization law and an
/// optional per-step observer of the batch state.
pub fn sample_with<T: Real>(
    field: &ScoreField<T>,
    schedule: &NoiseSchedule<T>,
    config: &SamplerConfig,
    init: Option<&GaussianSpec<T>>,
    observer: Option<&dyn BatchObserver<T>>,
) -> Result<SampleBatch<T>> {
    config.validate()?;
    let d = field.dim();
    if let Some(g) = init {
        g.check_dim(&vec![T::zero(); d])?;
    }
    let plan = schedule.plan_skip(config.delta_skip)?;
    let n = config.n_samples;
    let mut rngs: Vec<RngStream> = (0..n as u64).map(|j| RngStream::new(config.seed, j)).collect();
    let mut starts = vec![T::zero(); n * d];
    for (x, r) in starts.chunks_exact_mut(d).zip(rngs.iter_mut()) {
        match init {
            Some(g) => g.sample_into(r, x),
            None => draw_init_into(config, r, x),
        }
    }
    let starts = PointCloud::new(d, starts)?;
    let scale = T::one() / T::of(config.tau);
    let points = run_reverse_batch(
        field,
        schedule,
        &starts,
        plan.n_skip,
        config.dynamics,
        scale,
        &mut rngs,
        observer,
    )?;
    Ok(SampleBatch {
        points,
        config: config.clone(),
        provenance: Provenance {
            schedule_fingerprint: schedule.fingerprint(),
            field_tag: field.tag().to_string(),
        },
    })
}

#[derive(Debug)]
pub struct GridCell<T: Real> {
    pub gamma: f64,
    pub delta_skip: usize,
    pub seed: u64,
    pub result: Result<SampleBatch<T>>,
}

/// Samples every `(γ, Δ)` pair, γ-major. Cell `c` uses seed
/// `derive_seed(base.seed, c)`; a failing cell does not affect the others.
pub fn sample_grid<T: Real>(
    field: &ScoreField<T>,
    schedule: &NoiseSchedule<T>,
    base: &SamplerConfig,
    gammas: &[f64],
    deltas: &[usize],
) -> Result<Vec<GridCell<T>>> {
    if gammas.is_empty() {
        return Err(Error::param("gamma_values", "must not be empty"));
    }
    if deltas.is_empty() {
        return Err(Error::param("delta_values", "must not be empty"));
    }
    let mut cells = Vec::with_capacity(gammas.len() * deltas.len());
    for (gi, &gamma) in gammas.iter().enumerate() {
        for (di, &delta_skip) in deltas.iter().enumerate() {
            let seed = derive_seed(base.seed, (gi * deltas.len() + di) as u64);
            let config = SamplerConfig {
                mode: Mode::BoostSkip,
                gamma,
                delta_skip,
                tau: 1.0,
                seed,
                ..base.clone()
            };
            cells.push(GridCell {
                gamma,
                delta_skip,
                seed,
                result: sample(field, schedule, &config),
            });
        }
    }
    Ok(cells)
}

/// Second moments of `‖x_i − x̂_i‖²` for a synchronously coupled pair at
/// every index from `n_skip` down to 0.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledErrors {
    pub n_skip: usize,
    /// `(i, mean, standard error)` ordered by decreasing `i`.
    pub curve: Vec<(usize, f64, f64)>,
    /// Largest `‖x_i‖` along the reference trajectories.
    pub max_reference_norm: f64,
    /// Mean `‖x_{N_skip}‖²` of the reference trajectories.
    pub reference_sq_norm_at_skip: f64,
}

/// Reference trajectories start at `N` from `N(0, I)`; at `n_skip` a boosted
/// copy is drawn from `N(0, γ²I)` and both continue with shared noise.
pub fn coupled_errors<T: Real>(
    field: &ScoreField<T>,
    schedule: &NoiseSchedule<T>,
    gamma: f64,
    n_skip: usize,
    n_pairs: usize,
    seed: u64,
) -> Result<CoupledErrors> {
    use crate::dynamics::ancestral_update;
    use crate::real::norm_sq;

    let n = schedule.n_steps();
    if n_skip == 0 || n_skip > n {
        return Err(Error::param("n_skip", format!("must lie in 1..={n}")));
    }
    if n_pairs < 2 {
        return Err(Error::param("n_pairs", "need at least 2 pairs"));
    }
    let d = field.dim();
    let mut rngs: Vec<RngStream> = (0..n_pairs as u64).map(|j| RngStream::new(seed, j)).collect();
    let mut xs = vec![T::zero(); n_pairs * d];
    for (x, r) in xs.chunks_exact_mut(d).zip(rngs.iter_mut()) {
        r.fill_normal(x);
    }
    let mut max_norm_sq = xs.chunks_exact(d).map(|x| norm_sq(x).as_f64()).fold(0.0, f64::max);
    let mut s = vec![T::zero(); xs.len()];
    let mut next = vec![T::zero(); d];
    let mut z = vec![T::zero(); d];
    for i in (n_skip + 1..=n).rev() {
        field.score_batch(schedule, i, &xs, &mut s)?;
        for ((x, sj), r) in xs.chunks_exact_mut(d).zip(s.chunks_exact(d)).zip(rngs.iter_mut()) {
            r.fill_normal(&mut z);
            ancestral_update(x, sj, schedule.alpha(i), Some(&z), &mut next);
            x.copy_from_slice(&next);
            max_norm_sq = max_norm_sq.max(norm_sq(x).as_f64());
        }
    }
    let reference_sq_norm_at_skip =
        xs.chunks_exact(d).map(|x| norm_sq(x).as_f64()).sum::<f64>() / n_pairs as f64;
    let g = T::of(gamma);
    let mut ys = vec![T::zero(); xs.len()];
    for (y, r) in ys.chunks_exact_mut(d).zip(rngs.iter_mut()) {
        r.fill_normal(y);
        for v in y.iter_mut() {
            *v *= g;
        }
    }
    let stats = |xs: &[T], ys: &[T]| {
        let e: Vec<f64> = xs
            .chunks_exact(d)
            .zip(ys.chunks_exact(d))
            .map(|(a, b)| a.iter().zip(b).map(|(&p, &q)| (p - q).as_f64().powi(2)).sum())
            .collect();
        let m = e.iter().sum::<f64>() / e.len() as f64;
        let var = e.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (e.len() - 1) as f64;
        (m, (var / e.len() as f64).sqrt())
    };
    let mut curve = Vec::with_capacity(n_skip + 1);
    let mut sy = vec![T::zero(); ys.len()];
    let mut next_y = vec![T::zero(); d];
    for i in (1..=n_skip).rev() {
        let (m, se) = stats(&xs, &ys);
        curve.push((i, m, se));
        field.score_batch(schedule, i, &xs, &mut s)?;
        field.score_batch(schedule, i, &ys, &mut sy)?;
        let alpha = schedule.alpha(i);
        for (j, r) in rngs.iter_mut().enumerate() {
            let (x, y) = (&mut xs[j * d..(j + 1) * d], &mut ys[j * d..(j + 1) * d]);
            let noise = if i > 1 {
                r.fill_normal(&mut z);
                Some(z.as_slice())
            } else {
                None
            };
            ancestral_update(x, &s[j * d..(j + 1) * d], alpha, noise, &mut next);
            ancestral_update(y, &sy[j * d..(j + 1) * d], alpha, noise, &mut next_y);
            x.copy_from_slice(&next);
            y.copy_from_slice(&next_y);
            max_norm_sq = max_norm_sq.max(norm_sq(x).as_f64());
        }
        if !all_finite_pair(&xs, &ys) {
            return Err(Error::Integration {
                step: i,
                state: Vec::new(),
                reason: "non-finite coupled state".into(),
            });
        }
    }
    let (m, se) = stats(&xs, &ys);
    curve.push((0, m, se));
    Ok(CoupledErrors {
        n_skip,
        curve,
        max_reference_norm: max_norm_sq.sqrt(),
        reference_sq_norm_at_skip,
    })
}

fn all_finite_pair<T: Real>(a: &[T], b: &[T]) -> bool {
    crate::real::all_finite(a) && crate::real::all_finite(b)
}
