//! Discrete noise schedules and their continuous-time reading.
//!
//! Index `i` runs over `0..=N`. `ᾱ_0 = 1`, and the continuous signal scale
//! `α(t)` is read off the grid as `√ᾱ_i`; there is no separate quadrature of
//! `β(t)`, so the samplers and the closed-form theory share one clock.

use crate::error::{Error, Result};
use crate::Real;

/// Signal-scale threshold below which a skipped start is considered
/// too noisy for the boost to matter.
pub const SKIP_ALPHA_THRESHOLD: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule<T> {
    betas: Vec<T>,
    alphas: Vec<T>,
    /// Length `N + 1`, with `alpha_bars[0] = 1`.
    alpha_bars: Vec<T>,
    horizon: T,
}

impl<T: Real> NoiseSchedule<T> {
    /// Linear schedule with `β` interpolating `beta_min → beta_max` inclusive.
    pub fn linear(n_steps: usize, beta_min: T, beta_max: T) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::param("n_steps", format!("need at least 2 steps, got {n_steps}")));
        }
        if !(beta_min > T::zero()) {
            return Err(Error::param("beta_min", format!("must be > 0, got {beta_min}")));
        }
        if !(beta_max < T::one()) {
            return Err(Error::param("beta_max", format!("must be < 1, got {beta_max}")));
        }
        if beta_min > beta_max {
            return Err(Error::param(
                "beta_max",
                format!("must be >= beta_min ({beta_min}), got {beta_max}"),
            ));
        }
        let span = beta_max - beta_min;
        let last = T::of_usize(n_steps - 1);
        let betas = (0..n_steps)
            .map(|k| {
                if k == n_steps - 1 {
                    beta_max
                } else {
                    beta_min + span * T::of_usize(k) / last
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    /// Default DDPM schedule: 1000 steps, `β` from 1e-4 to 0.02.
    pub fn ddpm_default() -> Self {
        Self::linear(1000, T::of(1e-4), T::of(0.02)).expect("default schedule is valid")
    }

    /// Builds a schedule from an explicit `β_1..β_N` sequence.
    pub fn from_betas(betas: Vec<T>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::param("betas", "need at least 2 steps"));
        }
        if let Some((k, b)) = betas
            .iter()
            .enumerate()
            .find(|(_, &b)| !(b > T::zero() && b < T::one()))
        {
            return Err(Error::param("betas", format!("beta_{} = {b} is outside (0, 1)", k + 1)));
        }
        let alphas: Vec<T> = betas.iter().map(|&b| T::one() - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(T::one());
        let mut acc = T::one();
        for &a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        Ok(Self {
            horizon: T::one(),
            betas,
            alphas,
            alpha_bars,
        })
    }

    /// Sets the continuous endpoint `T` mapped onto index `N`.
    pub fn with_horizon(mut self, horizon: T) -> Result<Self> {
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::param("horizon", format!("must be positive, got {horizon}")));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn n_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    /// `β_i` for `i` in `1..=N`.
    #[inline]
    pub fn beta(&self, i: usize) -> T {
        self.betas[i - 1]
    }

    /// `α_i = 1 − β_i` for `i` in `1..=N`.
    #[inline]
    pub fn alpha(&self, i: usize) -> T {
        self.alphas[i - 1]
    }

    /// `ᾱ_i` for `i` in `0..=N`.
    #[inline]
    pub fn alpha_bar(&self, i: usize) -> T {
        self.alpha_bars[i]
    }

    pub fn betas(&self) -> &[T] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[T] {
        &self.alpha_bars
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<()> {
        if i > self.n_steps() {
            return Err(Error::param(
                "i",
                format!("index {i} outside 0..={}", self.n_steps()),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_step_index(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.n_steps() {
            return Err(Error::param(
                "i",
                format!("step index {i} outside 1..={}", self.n_steps()),
            ));
        }
        Ok(())
    }

    /// Continuous signal scale `α` at grid index `i`, i.e. `√ᾱ_i`.
    pub fn alpha_continuous(&self, i: usize) -> Result<T> {
        self.check_index(i)?;
        Ok(self.alpha_bars[i].sqrt())
    }

    /// Grid index nearest to continuous time `t ∈ [0, T]`.
    pub fn index_at_time(&self, t: T) -> Result<usize> {
        if !(t >= T::zero() && t <= self.horizon) {
            return Err(Error::param(
                "t",
                format!("time {t} outside [0, {}]", self.horizon),
            ));
        }
        let pos = (t / self.horizon * T::of_usize(self.n_steps())).as_f64();
        Ok((pos.round() as usize).min(self.n_steps()))
    }

    /// `α(t)` at continuous time `t`, read at the nearest grid index.
    pub fn alpha_at_time(&self, t: T) -> Result<T> {
        let i = self.index_at_time(t)?;
        Ok(self.alpha_bars[i].sqrt())
    }

    pub fn plan_skip(&self, delta_skip: usize) -> Result<SkipPlan<T>> {
        let n = self.n_steps();
        if delta_skip >= n {
            return Err(Error::param(
                "delta_skip",
                format!("must be < n_steps ({n}), got {delta_skip}"),
            ));
        }
        let n_skip = n - delta_skip;
        let alpha_at_skip = self.alpha_bars[n_skip].sqrt();
        Ok(SkipPlan {
            delta_skip,
            n_skip,
            alpha_at_skip,
            low_signal: alpha_at_skip <= T::of(SKIP_ALPHA_THRESHOLD),
        })
    }

    /// Smallest `Δ_skip` whose start signal scale exceeds `threshold`.
    pub fn delta_for_alpha(&self, threshold: T) -> Option<usize> {
        (0..self.n_steps()).find(|&d| self.alpha_bars[self.n_steps() - d].sqrt() > threshold)
    }

    /// Skip plan whose start `α` is closest to `target`.
    pub fn plan_for_alpha(&self, target: T) -> Result<SkipPlan<T>> {
        let n = self.n_steps();
        let best = (0..n)
            .min_by(|&a, &b| {
                let da = (self.alpha_bars[n - a].sqrt() - target).abs();
                let db = (self.alpha_bars[n - b].sqrt() - target).abs();
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(0);
        self.plan_skip(best)
    }

    /// FNV-1a hash of the `β` bit patterns and the horizon; a provenance tag.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for b in &self.betas {
            eat(b.as_f64());
        }
        eat(self.horizon.as_f64());
        h
    }
}

/// Where a skipped reverse pass starts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkipPlan<T> {
    pub delta_skip: usize,
    /// Start index `N − Δ_skip`.
    pub n_skip: usize,
    /// `√ᾱ_{n_skip}`.
    pub alpha_at_skip: T,
    /// Set when `alpha_at_skip <= 0.01`: the boost will barely reach the output.
    pub low_signal: bool,
}
