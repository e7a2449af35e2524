//! Closed-form predictions to test simulations against.
//!
//! With data `N(μ₀, Σ₀)` the forward marginal at signal level `α` is
//! `N(αμ₀, Σ_α)` with `Σ_α = I + α²(Σ₀ − I)`. Starting the reverse process
//! at that level from `N(μ̂, Σ̂)` instead gives closed-form output moments
//! for both the ancestral sampler and the probability-flow ODE.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{sym_apply, sym_inverse, sym_sqrt, symmetrize};
use crate::schedule::{NoiseSchedule, SkipPlan};
use crate::score::GaussianSpec;
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Sde,
    Ode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentPrediction<T: Real> {
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
    pub regime: Regime,
}

fn check_init<T: Real>(spec: &GaussianSpec<T>, mean: &DVector<T>, cov: &DMatrix<T>) -> Result<()> {
    let d = spec.dim();
    if mean.len() != d {
        return Err(Error::param("init_mean", format!("expected length {d}")));
    }
    if cov.nrows() != d || cov.ncols() != d {
        return Err(Error::param("init_cov", format!("expected {d}x{d}")));
    }
    let tol = T::of(1e-9) * (T::one() + cov.amax());
    if !crate::linalg::is_symmetric(cov, tol) {
        return Err(Error::param("init_cov", "must be symmetric"));
    }
    Ok(())
}

/// Output moments of the ancestral sampler started at signal level `alpha`.
pub fn predict_bns_sde_at<T: Real>(
    spec: &GaussianSpec<T>,
    alpha: T,
    init_mean: &DVector<T>,
    init_cov: &DMatrix<T>,
) -> Result<MomentPrediction<T>> {
    check_init(spec, init_mean, init_cov)?;
    let (mu_ts, sigma_ts) = spec.marginal_at_alpha(alpha);
    let s0 = spec.cov();
    let inv = sym_inverse(&sigma_ts);
    let gain = s0 * &inv;
    let mean = spec.mean() + (&gain * (init_mean - &mu_ts)) * alpha;
    let mut cov = s0 + (&gain * (init_cov - &sigma_ts) * gain.transpose()) * (alpha * alpha);
    symmetrize(&mut cov);
    Ok(MomentPrediction {
        mean,
        cov,
        regime: Regime::Sde,
    })
}

pub fn predict_bns_sde<T: Real>(
    spec: &GaussianSpec<T>,
    skip: &SkipPlan<T>,
    init_mean: &DVector<T>,
    init_cov: &DMatrix<T>,
) -> Result<MomentPrediction<T>> {
    predict_bns_sde_at(spec, skip.alpha_at_skip, init_mean, init_cov)
}

/// Output moments of the probability-flow ODE started at signal level `alpha`.
pub fn predict_bns_ode_at<T: Real>(
    spec: &GaussianSpec<T>,
    alpha: T,
    init_mean: &DVector<T>,
    init_cov: &DMatrix<T>,
) -> Result<MomentPrediction<T>> {
    check_init(spec, init_mean, init_cov)?;
    let (mu_ts, sigma_ts) = spec.marginal_at_alpha(alpha);
    let s0 = spec.cov();
    // The ODE flow map is linear with matrix Σ₀^{1/2}Σ_α^{-1/2}; with Σ₀ and
    // Σ_α sharing eigenvectors it is symmetric.
    let map = sym_sqrt(s0) * sym_apply(&sigma_ts, |v| T::one() / v.sqrt());
    let mean = spec.mean() + &map * (init_mean - &mu_ts);
    let mut cov = &map * init_cov * map.transpose();
    symmetrize(&mut cov);
    Ok(MomentPrediction {
        mean,
        cov,
        regime: Regime::Ode,
    })
}

pub fn predict_bns_ode<T: Real>(
    spec: &GaussianSpec<T>,
    skip: &SkipPlan<T>,
    init_mean: &DVector<T>,
    init_cov: &DMatrix<T>,
) -> Result<MomentPrediction<T>> {
    predict_bns_ode_at(spec, skip.alpha_at_skip, init_mean, init_cov)
}

/// Boosted initialization `N(0, γ²I)` in dimension `d`.
pub fn boosted_init<T: Real>(d: usize, gamma: T) -> (DVector<T>, DMatrix<T>) {
    (DVector::zeros(d), DMatrix::identity(d, d) * (gamma * gamma))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionCase {
    Empty,
    Upper,
    Lower,
    All,
}

impl RegionCase {
    pub fn name(self) -> &'static str {
        match self {
            RegionCase::Empty => "empty",
            RegionCase::Upper => "upper-interval",
            RegionCase::Lower => "lower-interval",
            RegionCase::All => "all",
        }
    }
}

/// Set of start indices at which a scalar boosted start amplifies the
/// output variance beyond `σ₀²`.
///
/// * `Upper`: indices `i ≥ boundary` (signal level below `κ`).
/// * `Lower`: indices `i < boundary` (signal level above `κ`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmplificationRegion {
    pub case: RegionCase,
    pub kappa: Option<f64>,
    pub boundary: Option<usize>,
}

impl AmplificationRegion {
    /// Membership of start index `i ∈ 1..=N`.
    pub fn contains(&self, i: usize) -> bool {
        match (self.case, self.boundary) {
            (RegionCase::Empty, _) => false,
            (RegionCase::All, _) => true,
            (RegionCase::Upper, Some(b)) => i >= b,
            (RegionCase::Lower, Some(b)) => i < b,
            _ => false,
        }
    }
}

/// Amplification happens iff `γ² − 1 > α²(σ₀² − 1)` at the start level `α`.
pub fn amplification_region<T: Real>(
    sigma0: f64,
    gamma: f64,
    schedule: &NoiseSchedule<T>,
) -> Result<AmplificationRegion> {
    if !(sigma0 > 0.0 && sigma0.is_finite()) {
        return Err(Error::param("sigma0", "must be positive"));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param("gamma", "must be positive"));
    }
    let (s2, g2) = (sigma0 * sigma0, gamma * gamma);
    let kappa = (s2 != 1.0).then(|| ((g2 - 1.0) / (s2 - 1.0)).abs().sqrt());
    let n = schedule.n_steps();
    let alpha = |i: usize| schedule.alpha_bar(i).as_f64().sqrt();
    let (case, boundary) = if gamma <= 1.0 && sigma0 >= 1.0 {
        (RegionCase::Empty, None)
    } else if sigma0 <= 1.0 && gamma >= 1.0 {
        (RegionCase::All, None)
    } else if gamma > 1.0 {
        let k = kappa.expect("sigma0 > 1 here");
        let b = (0..=n).find(|&i| alpha(i) < k).unwrap_or(n + 1);
        (RegionCase::Upper, Some(b))
    } else {
        let k = kappa.expect("sigma0 < 1 here");
        let b = (0..=n).find(|&i| alpha(i) <= k).unwrap_or(n + 1);
        (RegionCase::Lower, Some(b))
    };
    Ok(AmplificationRegion {
        case,
        kappa,
        boundary,
    })
}

/// `max_{j ∈ i+1..=n_skip} √α_j (1 − ᾱ_{j−1}) / (1 − ᾱ_j)`.
pub fn contraction_rate<T: Real>(schedule: &NoiseSchedule<T>, i: usize, n_skip: usize) -> Result<T> {
    if n_skip > schedule.n_steps() {
        return Err(Error::param("n_skip", "exceeds the number of steps"));
    }
    if i >= n_skip {
        return Err(Error::param("i", "range i+1..=n_skip is empty"));
    }
    let mut lambda = T::zero();
    for j in i + 1..=n_skip {
        let f = schedule.alpha(j).sqrt() * (T::one() - schedule.alpha_bar(j - 1))
            / (T::one() - schedule.alpha_bar(j));
        if f > lambda {
            lambda = f;
        }
    }
    Ok(lambda)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionReport {
    pub lambda: f64,
    /// `2C/(1−λ²)`.
    pub floor: f64,
    /// `λ^{2(N_skip−i)}(B² + γ²d)`.
    pub transient: f64,
    pub bound: f64,
    pub c: f64,
    pub b: f64,
    pub gamma: f64,
    pub d: usize,
}

/// Bound on `E‖x_i − x̂_i‖²` for coupled trajectories started at `n_skip`.
/// At `i = n_skip` the rate is taken over the single step `n_skip`.
pub fn contraction_bound<T: Real>(
    schedule: &NoiseSchedule<T>,
    i: usize,
    n_skip: usize,
    gamma: f64,
    b: f64,
    d: usize,
) -> Result<ContractionReport> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::param("B", "must be positive"));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param("gamma", "must be positive"));
    }
    if d == 0 {
        return Err(Error::param("d", "must be at least 1"));
    }
    if i > n_skip {
        return Err(Error::param("i", "must not exceed n_skip"));
    }
    let lambda = if i == n_skip {
        if n_skip == 0 {
            return Err(Error::param("n_skip", "must be at least 1"));
        }
        contraction_rate(schedule, n_skip - 1, n_skip)?
    } else {
        contraction_rate(schedule, i, n_skip)?
    }
    .as_f64();
    if !(lambda < 1.0) {
        return Err(Error::Internal(format!("contraction rate {lambda} is not below 1")));
    }
    let c = d as f64 * (1.0 - schedule.alpha_bar(n_skip).as_f64());
    let floor = 2.0 * c / (1.0 - lambda * lambda);
    let transient = lambda.powi(2 * (n_skip - i) as i32) * (b * b + gamma * gamma * d as f64);
    Ok(ContractionReport {
        lambda,
        floor,
        transient,
        bound: floor + transient,
        c,
        b,
        gamma,
        d,
    })
}

/// Standard normal upper tail `Q(x) = erfc(x/√2)/2`.
pub fn normal_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// `ln Q(x)`, finite for every finite `x` (asymptotic series once `erfc`
/// underflows).
pub fn ln_normal_tail(x: f64) -> f64 {
    if x < 30.0 {
        normal_tail(x).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - (x * (2.0 * std::f64::consts::PI).sqrt()).ln()
            + (1.0 - 1.0 / x2 + 3.0 / x2.powi(2) - 15.0 / x2.powi(3) + 105.0 / x2.powi(4) - 945.0 / x2.powi(5)).ln()
    }
}

/// TV contraction factor together with its distance from 1, which is
/// often far below `f64` resolution near 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TvContraction {
    /// `1 − 2Q(·)·exp(·)`.
    pub factor: f64,
    /// `2Q(·)·exp(·)`.
    pub deficit: f64,
    /// `ln` of the deficit.
    pub ln_deficit: f64,
}

/// Total-variation contraction factor of the reverse SDE between
/// continuous times `t_min < t_max`.
pub fn tv_contraction_factor<T: Real>(
    b: f64,
    l1: f64,
    t_min: f64,
    t_max: f64,
    schedule: &NoiseSchedule<T>,
) -> Result<TvContraction> {
    let horizon = schedule.horizon().as_f64();
    if !(b > 0.0) {
        return Err(Error::param("B", "must be positive"));
    }
    if !(l1 > 0.0 && l1.is_finite()) {
        return Err(Error::param("L1", "must be positive"));
    }
    if !(t_min > 0.0 && t_min < t_max && t_max <= horizon) {
        return Err(Error::param("t_min", "need 0 < t_min < t_max <= T"));
    }
    let a_max = schedule.alpha_at_time(T::of(t_max))?.as_f64();
    let a_min = schedule.alpha_at_time(T::of(t_min))?.as_f64();
    let gap = a_max.powi(-2) - a_min.powi(-2);
    if !(gap > 0.0) {
        return Err(Error::Internal(format!(
            "t_min = {t_min} and t_max = {t_max} map to the same grid level"
        )));
    }
    let ln_deficit = std::f64::consts::LN_2 + ln_normal_tail(b / (2.0 * gap.sqrt()))
        - b * l1 / t_min
        - l1 * l1 * a_max.powi(-2) / (t_min * t_min);
    let deficit = ln_deficit.exp();
    Ok(TvContraction {
        factor: 1.0 - deficit,
        deficit,
        ln_deficit,
    })
}

/// Normalized `p_i^{1/τ}` for a Gaussian marginal: `N(μ_i, τΣ_i)`.
pub fn tempered_target_moments<T: Real>(
    spec: &GaussianSpec<T>,
    schedule: &NoiseSchedule<T>,
    tau: T,
    i: usize,
) -> Result<(DVector<T>, DMatrix<T>)> {
    if !(tau > T::zero() && tau.is_finite()) {
        return Err(Error::param("tau", "must be positive"));
    }
    let (m, c) = spec.marginal(schedule, i)?;
    Ok((m, c * tau))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> NoiseSchedule<f64> {
        NoiseSchedule::ddpm_default()
    }

    fn scalar(var: f64) -> GaussianSpec<f64> {
        GaussianSpec::isotropic(&[0.0], var).unwrap()
    }

    fn init(var: f64) -> (DVector<f64>, DMatrix<f64>) {
        (DVector::zeros(1), DMatrix::from_element(1, 1, var))
    }

    #[test]
    fn sde_worked_value() {
        let (m, c) = init(4.0);
        let p = predict_bns_sde_at(&scalar(4.0), 0.5, &m, &c).unwrap();
        assert!((p.cov[(0, 0)] - (4.0 + 0.25 * 16.0 / (1.75 * 1.75) * 2.25)).abs() < 1e-12);
        assert!((p.cov[(0, 0)] - 6.938_775_510_204_08).abs() < 1e-10);
        assert_eq!(p.mean[0], 0.0);
    }

    #[test]
    fn ode_worked_value() {
        let (m, c) = init(4.0);
        let p = predict_bns_ode_at(&scalar(4.0), 0.5, &m, &c).unwrap();
        assert!((p.cov[(0, 0)] - 16.0 / 1.75).abs() < 1e-12);
    }

    #[test]
    fn matched_init_recovers_data_law() {
        let spec = GaussianSpec::new(
            DVector::from_vec(vec![0.4, -1.0]),
            DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 0.8]),
        )
        .unwrap();
        for alpha in [0.1, 0.5, 0.9] {
            let (mt, ct) = spec.marginal_at_alpha(alpha);
            for p in [
                predict_bns_sde_at(&spec, alpha, &mt, &ct).unwrap(),
                predict_bns_ode_at(&spec, alpha, &mt, &ct).unwrap(),
            ] {
                assert!((&p.mean - spec.mean()).amax() < 1e-12);
                assert!((&p.cov - spec.cov()).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn boost_only_recovers_data_law() {
        let s = sched();
        let plan = s.plan_skip(0).unwrap();
        let (m, c) = boosted_init(1, 2.0);
        let p = predict_bns_sde(&scalar(4.0), &plan, &m, &c).unwrap();
        assert!((p.cov[(0, 0)] - 4.0).abs() < 1e-2);
        assert!(p.cov[(0, 0)] > 4.0);
    }

    #[test]
    fn ode_mean_shift_is_linear() {
        let spec = scalar(4.0);
        let (mut m, c) = (DVector::zeros(1), DMatrix::from_element(1, 1, 1.75));
        m[0] = 0.3;
        let p = predict_bns_ode_at(&spec, 0.5, &m, &c).unwrap();
        assert!((p.mean[0] - 2.0 / 1.75f64.sqrt() * 0.3).abs() < 1e-12);
        assert!((p.cov[(0, 0)] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn region_cases() {
        let s = sched();
        assert_eq!(amplification_region(2.0, 0.9, &s).unwrap().case, RegionCase::Empty);
        assert_eq!(amplification_region(0.5, 2.0, &s).unwrap().case, RegionCase::All);
        let r = amplification_region(2.0, 2.0, &s).unwrap();
        assert_eq!(r.case, RegionCase::Upper);
        assert_eq!(r.kappa, Some(1.0));
        assert_eq!(r.boundary, Some(1));
        assert!(!r.contains(0) && r.contains(1) && r.contains(1000));
        let r = amplification_region(0.5, 0.8, &s).unwrap();
        assert_eq!(r.case, RegionCase::Lower);
    }

    #[test]
    fn region_agrees_with_prediction_sign() {
        let s = sched();
        for (s0, g) in [(2.0, 1.5), (2.0, 3.0), (0.5, 0.8), (0.5, 0.3), (1.5, 0.5), (0.7, 1.2)] {
            let r = amplification_region(s0, g, &s).unwrap();
            let (m, c) = boosted_init(1, g);
            for i in 1..=s.n_steps() {
                let a = s.alpha_bar(i).sqrt();
                let p = predict_bns_sde_at(&scalar(s0 * s0), a, &m, &c).unwrap();
                let amplified = g * g - 1.0 > a * a * (s0 * s0 - 1.0);
                assert_eq!(r.contains(i), amplified, "s0={s0} g={g} i={i}");
                if (p.cov[(0, 0)] - s0 * s0).abs() > 1e-9 {
                    assert_eq!(p.cov[(0, 0)] > s0 * s0, amplified, "s0={s0} g={g} i={i}");
                }
            }
        }
    }

    #[test]
    fn contraction_rate_is_a_max_of_factors() {
        let s = sched();
        let factor = |j: usize| s.alpha(j).sqrt() * (1.0 - s.alpha_bar(j - 1)) / (1.0 - s.alpha_bar(j));
        let l = contraction_rate(&s, 0, 997).unwrap();
        let scan = (1..=997).map(factor).fold(0.0, f64::max);
        assert_eq!(l, scan);
        assert!(l > 0.0 && l < 1.0);
        assert_eq!(contraction_rate(&s, 41, 42).unwrap(), factor(42));
        assert!(contraction_rate(&s, 5, 5).is_err());
    }

    #[test]
    fn bound_at_start_and_monotone() {
        let s = sched();
        let r = contraction_bound(&s, 500, 500, 2.0, 3.0, 1).unwrap();
        assert!((r.transient - (9.0 + 4.0)).abs() < 1e-12);
        assert!(r.bound >= r.floor);
        let a = contraction_bound(&s, 100, 500, 2.0, 3.0, 1).unwrap().bound;
        assert!(contraction_bound(&s, 100, 500, 2.5, 3.0, 1).unwrap().bound > a);
        assert!(contraction_bound(&s, 100, 500, 2.0, 3.5, 1).unwrap().bound > a);
    }

    #[test]
    fn tv_factor_limits() {
        let s = sched();
        let f = tv_contraction_factor(1e9, 0.1, 0.2, 0.8, &s).unwrap();
        assert!((f.factor - 1.0).abs() < 1e-12);
        let f = tv_contraction_factor(1.0, 0.1, 0.2, 0.8, &s).unwrap();
        assert!(f.deficit > 0.0 && f.factor <= 1.0);
        assert!((f.ln_deficit + 163.691_596_533_801).abs() < 1e-9, "{}", f.ln_deficit);
        assert!(tv_contraction_factor(1.0, 0.1, 0.8, 0.2, &s).is_err());
    }

    #[test]
    fn ln_tail_is_continuous_at_the_switch() {
        for x in [30.0, 35.0] {
            let direct = normal_tail(x).ln();
            let series = ln_normal_tail(x);
            assert!((direct - series).abs() < 1e-9 * direct.abs(), "{direct} {series}");
        }
        assert!(ln_normal_tail(1e3).is_finite());
    }

    #[test]
    fn tempered_moments() {
        let s = sched();
        let spec = scalar(3.0);
        let (m1, c1) = tempered_target_moments(&spec, &s, 1.0, 200).unwrap();
        let (m, c) = spec.marginal(&s, 200).unwrap();
        assert_eq!((m1, c1), (m, c.clone()));
        let (_, c2) = tempered_target_moments(&spec, &s, 2.0, 200).unwrap();
        assert_eq!(c2[(0, 0)], 2.0 * c[(0, 0)]);
    }
}
