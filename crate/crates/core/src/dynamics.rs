//! Forward perturbation and reverse-time integrators on the discrete grid.
//!
//! The stochastic integrator is the ancestral update
//! `x_{i−1} = (x_i + (1−α_i)s)/√α_i + √(1−α_i) z`, with no noise on the last
//! (`i = 1`) step. The deterministic integrator is explicit Euler on the
//! probability-flow ODE over the same grid: `x_{i−1} = x_i + (β_i/2)(x_i + s)`.

use thiserror::Error;

use crate::error::{Error, Result};
use crate::points::PointCloud;
use crate::real::{all_finite, norm};
use crate::rng::RngStream;
use crate::schedule::NoiseSchedule;
use crate::score::ScoreField;
use crate::Real;

/// `ᾱ` below which the posterior mean is flagged as ill-conditioned.
pub const POSTERIOR_CONDITIONING_FLOOR: f64 = 1e-12;

/// Trajectories are advanced in fixed-size chunks so batched network
/// evaluation sees the same shapes regardless of threading.
pub const CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dynamics {
    Stochastic,
    Ode,
}

impl Dynamics {
    pub fn name(self) -> &'static str {
        match self {
            Dynamics::Stochastic => "stochastic",
            Dynamics::Ode => "ode",
        }
    }
}

impl std::str::FromStr for Dynamics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stochastic" | "sde" => Ok(Dynamics::Stochastic),
            "ode" => Ok(Dynamics::Ode),
            _ => Err(Error::param("dynamics", format!("unknown dynamics `{s}`"))),
        }
    }
}

/// `(x + (1−α)s)/√α + √(1−α) z`; `noise = None` drops the last term.
#[inline]
pub fn ancestral_update<T: Real>(x: &[T], score: &[T], alpha: T, noise: Option<&[T]>, out: &mut [T]) {
    let inv_sqrt = T::one() / alpha.sqrt();
    let beta = T::one() - alpha;
    let sig = beta.sqrt();
    for k in 0..x.len() {
        let mut v = (x[k] + beta * score[k]) * inv_sqrt;
        if let Some(z) = noise {
            v += sig * z[k];
        }
        out[k] = v;
    }
}

/// Reverse-time Euler step of `dx = −½β(x + s) dt`.
#[inline]
pub fn ode_update<T: Real>(x: &[T], score: &[T], beta: T, out: &mut [T]) {
    let h = beta * T::of(0.5);
    for k in 0..x.len() {
        out[k] = x[k] + h * (x[k] + score[k]);
    }
}

/// Tweedie estimate `(x + (1−ᾱ)s)/√ᾱ`.
#[inline]
pub fn tweedie_update<T: Real>(x: &[T], score: &[T], alpha_bar: T, out: &mut [T]) {
    let inv = T::one() / alpha_bar.sqrt();
    let w = T::one() - alpha_bar;
    for k in 0..x.len() {
        out[k] = (x[k] + w * score[k]) * inv;
    }
}

fn integration_error<T: Real>(i: usize, x: &[T], reason: &str) -> Error {
    Error::Integration {
        step: i,
        state: x.iter().map(|v| v.as_f64()).collect(),
        reason: reason.to_string(),
    }
}

fn checked_score<T: Real>(
    field: &ScoreField<T>,
    schedule: &NoiseSchedule<T>,
    i: usize,
    x: &[T],
) -> Result<Vec<T>> {
    let s = field.score(schedule, i, x)?;
    if !all_finite(&s) {
        return Err(integration_error(i, x, "non-finite score"));
    }
    Ok(s)
}

/// One-shot forward perturbation `√ᾱ_i x₀ + √(1−ᾱ_i) z`, `i ≥ 1`.
pub fn forward_perturb<T: Real>(
    x0: &[T],
    schedule: &NoiseSchedule<T>,
    i: usize,
    rng: &mut RngStream,
) -> Result<Vec<T>> {
    schedule.check_step_index(i)?;
    Ok(perturb_with(x0, schedule.alpha_bar(i), rng))
}

pub(crate) fn perturb_with<T: Real>(x0: &[T], alpha_bar: T, rng: &mut RngStream) -> Vec<T> {
    let (a, s) = (alpha_bar.sqrt(), (T::one() - alpha_bar).sqrt());
    x0.iter().map(|&x| a * x + s * rng.normal::<T>()).collect()
}

pub fn ancestral_step<T: Real>(
    field: &ScoreField<T>,
    schedule: &NoiseSchedule<T>,
    x: &[T],
    i: usize,
    rng: &mut RngStream,
) -> Result<Vec<T>> {
    schedule.check_step_index(i)?;
    let s = checked_score(field, schedule, i, x)?;
    let mut out = vec![T::zero(); x.len()];
    if i > 1 {
        let z: Vec<T> = rng.normal_vec(x.len());
        ancestral_update(x, &s, schedule.alpha(i), Some(&z), &mut out);
    } else {
        ancestral_update(x, &s, schedule.alpha(i), None, &mut out);
    }
    Ok(out)
}

pub fn ode_step<T: Real>(
    field: &ScoreField<T>,
    schedule: &NoiseSchedule<T>,
    x: &[T],
    i: usize,
) -> Result<Vec<T>> {
    schedule.check_step_index(i)?;
    let s = checked_score(field, schedule, i, x)?;
    let mut out = vec![T::zero(); x.len()];
    ode_update(x, &s, schedule.beta(i), &mut out);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorMean<T> {
    pub value: Vec<T>,
    /// `ᾱ_i` was below [`POSTERIOR_CONDITIONING_FLOOR`].
    pub ill_conditioned: bool,
}

pub fn posterior_mean<T: Real>(
    field: &ScoreField<T>,
    schedule: &NoiseSchedule<T>,
    x: &[T],
    i: usize,
) -> Result<PosteriorMean<T>> {
    schedule.check_step_index(i)?;
    let s = checked_score(field, schedule, i, x)?;
    let ab = schedule.alpha_bar(i);
    let mut value = vec![T::zero(); x.len()];
    tweedie_update(x, &s, ab, &mut value);
    Ok(PosteriorMean {
        value,
        ill_conditioned: ab < T::of(POSTERIOR_CONDITIONING_FLOOR),
    })
}

/// `‖ε̂(x′_i) − ε‖₂` with `x′_i = √ᾱ_i x̂₀|i + √(1−ᾱ_i) ε` for a fresh `ε`
/// and `ε̂ = −√(1−ᾱ_i)·s(x′_i, i)`.
pub fn estimation_error<T: Real>(
    field: &ScoreField<T>,
    schedule: &NoiseSchedule<T>,
    x: &[T],
    i: usize,
    rng: &mut RngStream,
) -> Result<T> {
    let x0 = posterior_mean(field, schedule, x, i)?.value;
    let ab = schedule.alpha_bar(i);
    let eps: Vec<T> = rng.normal_vec(x.len());
    let (a, sn) = (ab.sqrt(), (T::one() - ab).sqrt());
    let xp: Vec<T> = x0.iter().zip(&eps).map(|(&m, &e)| a * m + sn * e).collect();
    let s = checked_score(field, schedule, i, &xp)?;
    let err_sq = s
        .iter()
        .zip(&eps)
        .fold(T::zero(), |acc, (&sv, &e)| {
            let d = -sn * sv - e;
            acc + d * d
        });
    Ok(err_sq.sqrt())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RecordFlags {
    pub states: bool,
    pub denoised: bool,
    pub errors: bool,
}

impl RecordFlags {
    pub fn all() -> Self {
        Self {
            states: true,
            denoised: true,
            errors: true,
        }
    }
}

/// One reverse pass. `indices` runs from the start index down to 0; the
/// per-step records (`denoised`, `estimation_errors`) cover every index
/// except the final 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub indices: Vec<usize>,
    pub states: Vec<Vec<T>>,
    pub norms: Vec<T>,
    pub denoised: Option<Vec<Vec<T>>>,
    pub estimation_errors: Option<Vec<T>>,
    pub final_state: Vec<T>,
}

impl<T> Trajectory<T> {
    /// Number of integration steps taken.
    pub fn steps(&self) -> usize {
        self.indices.len().saturating_sub(1)
    }
}

/// A reverse pass that stopped early; `partial` holds everything recorded
/// up to the failing step.
#[derive(Debug, Error)]
#[error("reverse pass aborted: {error}")]
pub struct Aborted<T: std::fmt::Debug> {
    #[source]
    pub error: Error,
    pub partial: Trajectory<T>,
}

pub fn run_reverse<T: Real>(
    field: &ScoreField<T>,
    schedule: &NoiseSchedule<T>,
    start: &[T],
    start_index: usize,
    dynamics: Dynamics,
    rng: &mut RngStream,
    record: RecordFlags,
) -> std::result::Result<Trajectory<T>, Box<Aborted<T>>> {
    run_reverse_scaled(field, schedule, start, start_index, dynamics, T::one(), rng, None, record)
}

/// [`run_reverse`] with the score multiplied by `score_scale` (`1/τ` for
/// temperature sampling). Estimation-error probes draw from `probe_rng`
/// when given, otherwise from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn run_reverse_scaled<T: Real>(
    field: &ScoreField<T>,
    schedule: &NoiseSchedule<T>,
    start: &[T],
    start_index: usize,
    dynamics: Dynamics,
    score_scale: T,
    rng: &mut RngStream,
    mut probe_rng: Option<&mut RngStream>,
    record: RecordFlags,
) -> std::result::Result<Trajectory<T>, Box<Aborted<T>>> {
    let d = start.len();
    let mut traj = Trajectory {
        indices: Vec::new(),
        states: Vec::new(),
        norms: Vec::new(),
        denoised: record.denoised.then(Vec::new),
        estimation_errors: record.errors.then(Vec::new),
        final_state: Vec::new(),
    };
    let abort = |error: Error, traj: Trajectory<T>| Box::new(Aborted { error, partial: traj });
    if let Err(e) = schedule.check_step_index(start_index) {
        return Err(abort(e, traj));
    }
    if d != field.dim() {
        return Err(abort(
            Error::param("start", format!("dimension {d} does not match field {}", field.dim())),
            traj,
        ));
    }
    let mut x = start.to_vec();
    let mut s = vec![T::zero(); d];
    let mut next = vec![T::zero(); d];
    let mut z = vec![T::zero(); d];
    for i in (1..=start_index).rev() {
        traj.indices.push(i);
        traj.norms.push(norm(&x));
        if record.states {
            traj.states.push(x.clone());
        }
        if let Err(e) = field.score_batch(schedule, i, &x, &mut s) {
            return Err(abort(e, traj));
        }
        if !all_finite(&s) {
            return Err(abort(integration_error(i, &x, "non-finite score"), traj));
        }
        if record.denoised || record.errors {
            let mut x0 = vec![T::zero(); d];
            tweedie_update(&x, &s, schedule.alpha_bar(i), &mut x0);
            if record.errors {
                let probe = match probe_rng.as_deref_mut() {
                    Some(p) => estimation_error(field, schedule, &x, i, p),
                    None => estimation_error(field, schedule, &x, i, rng),
                };
                match probe {
                    Ok(e) => traj.estimation_errors.as_mut().unwrap().push(e),
                    Err(e) => return Err(abort(e, traj)),
                }
            }
            if let Some(dn) = traj.denoised.as_mut() {
                dn.push(x0);
            }
        }
        for v in s.iter_mut() {
            *v *= score_scale;
        }
        match dynamics {
            Dynamics::Stochastic => {
                if i > 1 {
                    rng.fill_normal(&mut z);
                    ancestral_update(&x, &s, schedule.alpha(i), Some(&z), &mut next);
                } else {
                    ancestral_update(&x, &s, schedule.alpha(i), None, &mut next);
                }
            }
            Dynamics::Ode => ode_update(&x, &s, schedule.beta(i), &mut next),
        }
        if !all_finite(&next) {
            return Err(abort(integration_error(i, &x, "non-finite state"), traj));
        }
        std::mem::swap(&mut x, &mut next);
    }
    traj.indices.push(0);
    traj.norms.push(norm(&x));
    if record.states {
        traj.states.push(x.clone());
    }
    traj.final_state = x;
    Ok(traj)
}

/// Observer invoked by [`run_reverse_batch`] with the batch state at each
/// index `i` (from the start index down to 0) and the trajectory id of the
/// first row of the chunk.
pub trait BatchObserver<T>: Send + Sync {
    fn observe(&self, i: usize, first_traj: usize, xs: &[T]);
}

impl<T, F: Fn(usize, usize, &[T]) + Send + Sync> BatchObserver<T> for F {
    fn observe(&self, i: usize, first_traj: usize, xs: &[T]) {
        self(i, first_traj, xs)
    }
}

/// Advances a batch of trajectories in lockstep from `start_index` to 0.
///
/// `rngs[j]` drives trajectory `j`; the draws each trajectory consumes are
/// the same as in [`run_reverse`], and for the analytic fields the results
/// are bitwise identical. Chunks of [`CHUNK`] trajectories run in parallel.
#[allow(clippy::too_many_arguments)]
pub fn run_reverse_batch<T: Real>(
    field: &ScoreField<T>,
    schedule: &NoiseSchedule<T>,
    starts: &PointCloud<T>,
    start_index: usize,
    dynamics: Dynamics,
    score_scale: T,
    rngs: &mut [RngStream],
    observer: Option<&dyn BatchObserver<T>>,
) -> Result<PointCloud<T>> {
    use rayon::prelude::*;

    schedule.check_step_index(start_index)?;
    let d = starts.dim();
    if d != field.dim() {
        return Err(Error::param(
            "starts",
            format!("dimension {d} does not match field {}", field.dim()),
        ));
    }
    if rngs.len() != starts.len() {
        return Err(Error::param("rngs", "need one random stream per trajectory"));
    }
    let mut data = starts.as_slice().to_vec();
    data.par_chunks_mut(CHUNK * d)
        .zip(rngs.par_chunks_mut(CHUNK))
        .enumerate()
        .try_for_each(|(c, (xs, rs))| {
            advance_chunk(field, schedule, xs, c * CHUNK, start_index, dynamics, score_scale, rs, observer)
        })?;
    PointCloud::new(d, data)
}

#[allow(clippy::too_many_arguments)]
fn advance_chunk<T: Real>(
    field: &ScoreField<T>,
    schedule: &NoiseSchedule<T>,
    xs: &mut [T],
    first: usize,
    start_index: usize,
    dynamics: Dynamics,
    score_scale: T,
    rngs: &mut [RngStream],
    observer: Option<&dyn BatchObserver<T>>,
) -> Result<()> {
    let d = field.dim();
    let mut s = vec![T::zero(); xs.len()];
    let mut next = vec![T::zero(); d];
    let mut z = vec![T::zero(); d];
    for i in (1..=start_index).rev() {
        if let Some(o) = observer {
            o.observe(i, first, xs);
        }
        field.score_batch(schedule, i, xs, &mut s)?;
        let (alpha, beta) = (schedule.alpha(i), schedule.beta(i));
        for (j, (x, sj)) in xs.chunks_exact_mut(d).zip(s.chunks_exact_mut(d)).enumerate() {
            let traj = first + j;
            if !all_finite(sj) {
                return Err(Error::Trajectory {
                    trajectory: traj,
                    source: Box::new(integration_error(i, x, "non-finite score")),
                });
            }
            for v in sj.iter_mut() {
                *v *= score_scale;
            }
            match dynamics {
                Dynamics::Stochastic if i > 1 => {
                    rngs[j].fill_normal(&mut z);
                    ancestral_update(x, sj, alpha, Some(&z), &mut next);
                }
                Dynamics::Stochastic => ancestral_update(x, sj, alpha, None, &mut next),
                Dynamics::Ode => ode_update(x, sj, beta, &mut next),
            }
            if !all_finite(&next) {
                return Err(Error::Trajectory {
                    trajectory: traj,
                    source: Box::new(integration_error(i, x, "non-finite state")),
                });
            }
            x.copy_from_slice(&next);
        }
    }
    if let Some(o) = observer {
        o.observe(0, first, xs);
    }
    Ok(())
}

/// Tweedie estimates for a row-major batch at index `i`.
pub fn posterior_mean_batch<T: Real>(
    field: &ScoreField<T>,
    schedule: &NoiseSchedule<T>,
    xs: &[T],
    i: usize,
) -> Result<Vec<T>> {
    schedule.check_step_index(i)?;
    let d = field.dim();
    let mut s = vec![T::zero(); xs.len()];
    field.score_batch(schedule, i, xs, &mut s)?;
    let mut out = vec![T::zero(); xs.len()];
    let ab = schedule.alpha_bar(i);
    for ((x, sj), o) in xs.chunks_exact(d).zip(s.chunks_exact(d)).zip(out.chunks_exact_mut(d)) {
        tweedie_update(x, sj, ab, o);
    }
    Ok(out)
}

/// Batched [`estimation_error`]; `rngs[j]` supplies the probe noise for row `j`.
pub fn estimation_error_batch<T: Real>(
    field: &ScoreField<T>,
    schedule: &NoiseSchedule<T>,
    xs: &[T],
    i: usize,
    rngs: &mut [RngStream],
) -> Result<Vec<T>> {
    let d = field.dim();
    let x0 = posterior_mean_batch(field, schedule, xs, i)?;
    let ab = schedule.alpha_bar(i);
    let (a, sn) = (ab.sqrt(), (T::one() - ab).sqrt());
    let mut eps = vec![T::zero(); xs.len()];
    for (e, r) in eps.chunks_exact_mut(d).zip(rngs.iter_mut()) {
        r.fill_normal(e);
    }
    let xp: Vec<T> = x0.iter().zip(&eps).map(|(&m, &e)| a * m + sn * e).collect();
    let mut s = vec![T::zero(); xs.len()];
    field.score_batch(schedule, i, &xp, &mut s)?;
    Ok(s.chunks_exact(d)
        .zip(eps.chunks_exact(d))
        .map(|(sj, ej)| {
            sj.iter()
                .zip(ej)
                .fold(T::zero(), |acc, (&sv, &e)| {
                    let r = -sn * sv - e;
                    acc + r * r
                })
                .sqrt()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::GaussianSpec;

    fn sched() -> NoiseSchedule<f64> {
        NoiseSchedule::ddpm_default()
    }

    #[test]
    fn degenerate_alpha_leaves_state_unchanged() {
        let x = [0.3, -2.0];
        let s = [100.0, -7.0];
        let mut out = [0.0; 2];
        ancestral_update(&x, &s, 1.0, Some(&[5.0, 5.0]), &mut out);
        assert_eq!(out, x);
        ode_update(&x, &s, 0.0, &mut out);
        assert_eq!(out, x);
    }

    #[test]
    fn standard_normal_oracle_deterministic_part() {
        let x = [1.5];
        let alpha: f64 = 0.98;
        let mut out = [0.0];
        ancestral_update(&x, &[-x[0]], alpha, None, &mut out);
        assert!((out[0] - alpha.sqrt() * x[0]).abs() < 1e-15);
    }

    #[test]
    fn ode_step_is_identity_for_standard_normal() {
        let field = ScoreField::Gaussian(GaussianSpec::standard(2));
        let x = [0.4, -1.1];
        for i in [1, 500, 1000] {
            assert_eq!(ode_step(&field, &sched(), &x, i).unwrap(), x.to_vec());
        }
    }

    #[test]
    fn posterior_mean_unit_variance_identity() {
        let field = ScoreField::Gaussian(GaussianSpec::standard(1));
        let s = sched();
        for i in [1, 200, 900] {
            let pm = posterior_mean(&field, &s, &[2.0], i).unwrap();
            let expect = 2.0 * s.alpha_bar(i).sqrt();
            assert!((pm.value[0] - expect).abs() < 1e-12);
            assert!(!pm.ill_conditioned);
        }
    }

    #[test]
    fn posterior_mean_matches_gaussian_conditioning() {
        // x0 ~ N(m, v), x_i = a x0 + sqrt(1-a²) z:
        // E[x0 | x_i] = m + v a (x_i − a m) / (a² v + 1 − a²).
        let (m, v) = (0.7, 4.0);
        let field = ScoreField::Gaussian(GaussianSpec::isotropic(&[m], v).unwrap());
        let s = sched();
        for i in [1, 50, 300, 700, 1000] {
            let a = s.alpha_bar(i).sqrt();
            for x in [-3.0, 0.0, 1.3, 5.0] {
                let exact = m + v * a * (x - a * m) / (a * a * v + 1.0 - a * a);
                let pm = posterior_mean(&field, &s, &[x], i).unwrap().value[0];
                assert!((pm - exact).abs() < 1e-10, "i={i} x={x}: {pm} vs {exact}");
            }
        }
    }

    #[test]
    fn estimation_error_is_reproducible() {
        let field = ScoreField::Gaussian(GaussianSpec::isotropic(&[0.0, 0.0], 2.0).unwrap());
        let s = sched();
        let a = estimation_error(&field, &s, &[0.5, 0.1], 300, &mut RngStream::new(4, 2)).unwrap();
        let b = estimation_error(&field, &s, &[0.5, 0.1], 300, &mut RngStream::new(4, 2)).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite() && a >= 0.0);
    }

    #[test]
    fn single_step_run_records_one_step() {
        let field = ScoreField::Gaussian(GaussianSpec::standard(1));
        let t = run_reverse(
            &field,
            &sched(),
            &[0.5],
            1,
            Dynamics::Stochastic,
            &mut RngStream::new(0, 0),
            RecordFlags::all(),
        )
        .unwrap();
        assert_eq!(t.steps(), 1);
        assert_eq!(t.indices, vec![1, 0]);
        assert_eq!(t.denoised.as_ref().unwrap().len(), 1);
        assert_eq!(t.estimation_errors.as_ref().unwrap().len(), 1);
    }

    #[test]
    fn ode_run_is_stationary_for_standard_normal() {
        let field = ScoreField::Gaussian(GaussianSpec::standard(2));
        let start = [0.9, -0.2];
        let t = run_reverse(
            &field,
            &sched(),
            &start,
            1000,
            Dynamics::Ode,
            &mut RngStream::new(0, 0),
            RecordFlags::default(),
        )
        .unwrap();
        assert_eq!(t.final_state, start.to_vec());
        assert!(t.indices.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn invalid_start_index_aborts_with_empty_partial() {
        let field = ScoreField::Gaussian(GaussianSpec::standard(1));
        let err = run_reverse(
            &field,
            &sched(),
            &[0.0],
            0,
            Dynamics::Ode,
            &mut RngStream::new(0, 0),
            RecordFlags::default(),
        )
        .unwrap_err();
        assert!(err.partial.indices.is_empty());
    }

    #[test]
    fn non_finite_state_aborts_with_partial_trajectory() {
        let field = ScoreField::Gaussian(GaussianSpec::standard(1));
        let err = run_reverse(
            &field,
            &sched(),
            &[f64::INFINITY],
            10,
            Dynamics::Ode,
            &mut RngStream::new(0, 0),
            RecordFlags::default(),
        )
        .unwrap_err();
        assert!(matches!(err.error, Error::Integration { step: 10, .. }));
        assert_eq!(err.partial.indices, vec![10]);
    }

    #[test]
    fn batch_matches_single_runs_bitwise() {
        let field = ScoreField::Gaussian(GaussianSpec::isotropic(&[0.3, -0.1], 3.0).unwrap());
        let s = sched();
        let n = 300;
        let mut init = RngStream::new(1, 99);
        let starts: Vec<f64> = init.normal_vec(2 * n);
        let cloud = PointCloud::new(2, starts.clone()).unwrap();
        for dynamics in [Dynamics::Stochastic, Dynamics::Ode] {
            let mut rngs: Vec<RngStream> = (0..n as u64).map(|j| RngStream::new(42, j)).collect();
            let batch =
                run_reverse_batch(&field, &s, &cloud, 400, dynamics, 1.0, &mut rngs, None).unwrap();
            for j in [0, 17, 255, 256, 299] {
                let t = run_reverse(
                    &field,
                    &s,
                    &starts[2 * j..2 * j + 2],
                    400,
                    dynamics,
                    &mut RngStream::new(42, j as u64),
                    RecordFlags::default(),
                )
                .unwrap();
                assert_eq!(t.final_state.as_slice(), batch.row(j));
            }
        }
    }

    #[test]
    fn batched_estimation_error_matches_single() {
        let field = ScoreField::Gaussian(GaussianSpec::isotropic(&[0.0], 2.0).unwrap());
        let s = sched();
        let xs = [0.3, -1.0, 2.2];
        let mut rngs: Vec<RngStream> = (0..3).map(|j| RngStream::new(8, j)).collect();
        let batch = estimation_error_batch(&field, &s, &xs, 250, &mut rngs).unwrap();
        for j in 0..3 {
            let single =
                estimation_error(&field, &s, &xs[j..j + 1], 250, &mut RngStream::new(8, j as u64))
                    .unwrap();
            assert!((single - batch[j]).abs() < 1e-14);
        }
    }
}
