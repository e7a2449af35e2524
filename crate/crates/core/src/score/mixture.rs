use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::schedule::NoiseSchedule;
use crate::score::GaussianSpec;
use crate::Real;

/// Finite Gaussian mixture; each component diffuses independently, so the
/// noisy marginal stays a mixture with the same weights.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSpec<T: Real> {
    weights: Vec<T>,
    log_weights: Vec<T>,
    components: Vec<GaussianSpec<T>>,
}

impl<T: Real> MixtureSpec<T> {
    pub fn new(weights: Vec<T>, components: Vec<GaussianSpec<T>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::param("components", "mixture needs at least one component"));
        }
        if weights.len() != components.len() {
            return Err(Error::param(
                "weights",
                format!("{} weights for {} components", weights.len(), components.len()),
            ));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > T::zero())) {
            return Err(Error::param("weights", format!("weight {w} is not positive")));
        }
        let total = weights.iter().fold(T::zero(), |a, &w| a + w);
        let tol = T::of(1e-9).max(T::default_epsilon() * T::of_usize(4 * weights.len()));
        if (total - T::one()).abs() > tol {
            return Err(Error::param("weights", format!("sum to {total}, expected 1")));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(Error::param("components", "components differ in dimension"));
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            log_weights,
            components,
        })
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianSpec<T>] {
        &self.components
    }

    /// Posterior-weighted component scores at `alpha_bar = α(t)²`.
    ///
    /// Responsibilities are normalized with log-sum-exp. If every log term
    /// is non-finite the score of the component with the smallest
    /// Mahalanobis distance is returned instead.
    pub(crate) fn score_and_logpdf(
        &self,
        alpha_bar: T,
        x: &[T],
        out: &mut [T],
        buf: &mut MixtureScratch<T>,
    ) -> T {
        let d = self.dim();
        let k = self.components.len();
        buf.ensure(k, d);
        let mut max_log = T::min_value().unwrap_or(-T::max_value().unwrap());
        let mut nearest = 0;
        let mut nearest_maha = T::max_value().unwrap();
        let mut any_finite = false;
        for (c, comp) in self.components.iter().enumerate() {
            let (lp, maha) = comp.score_and_logpdf(
                alpha_bar,
                x,
                &mut buf.scores[c * d..(c + 1) * d],
                &mut buf.scratch,
            );
            let l = self.log_weights[c] + lp;
            buf.logs[c] = l;
            if l.is_finite() {
                any_finite = true;
                if l > max_log {
                    max_log = l;
                }
            }
            if maha < nearest_maha {
                nearest_maha = maha;
                nearest = c;
            }
        }
        out.iter_mut().for_each(|v| *v = T::zero());
        if !any_finite {
            out.copy_from_slice(&buf.scores[nearest * d..(nearest + 1) * d]);
            return T::min_value().unwrap_or(-T::max_value().unwrap());
        }
        let mut total = T::zero();
        for c in 0..k {
            let w = if buf.logs[c].is_finite() {
                (buf.logs[c] - max_log).exp()
            } else {
                T::zero()
            };
            buf.logs[c] = w;
            total += w;
        }
        for c in 0..k {
            let r = buf.logs[c] / total;
            if r == T::zero() {
                continue;
            }
            for j in 0..d {
                out[j] += r * buf.scores[c * d + j];
            }
        }
        max_log + total.ln()
    }

    pub fn log_density(&self, schedule: &NoiseSchedule<T>, i: usize, x: &[T]) -> Result<T> {
        schedule.check_index(i)?;
        self.components[0].check_dim(x)?;
        let mut out = vec![T::zero(); self.dim()];
        let mut buf = MixtureScratch::default();
        Ok(self.score_and_logpdf(schedule.alpha_bar(i), x, &mut out, &mut buf))
    }

    pub fn score(&self, schedule: &NoiseSchedule<T>, i: usize, x: &[T]) -> Result<Vec<T>> {
        schedule.check_index(i)?;
        self.components[0].check_dim(x)?;
        let mut out = vec![T::zero(); self.dim()];
        let mut buf = MixtureScratch::default();
        self.score_and_logpdf(schedule.alpha_bar(i), x, &mut out, &mut buf);
        Ok(out)
    }

    pub fn sample_into(&self, rng: &mut RngStream, out: &mut [T]) {
        let u = T::of(rng.uniform());
        let mut acc = T::zero();
        let mut pick = self.components.len() - 1;
        for (c, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = c;
                break;
            }
        }
        self.components[pick].sample_into(rng, out);
    }
}

#[derive(Debug)]
pub(crate) struct MixtureScratch<T> {
    scores: Vec<T>,
    logs: Vec<T>,
    scratch: Vec<T>,
}

impl<T> Default for MixtureScratch<T> {
    fn default() -> Self {
        Self {
            scores: Vec::new(),
            logs: Vec::new(),
            scratch: Vec::new(),
        }
    }
}

impl<T: Real> MixtureScratch<T> {
    fn ensure(&mut self, k: usize, d: usize) {
        self.scores.resize(k * d, T::zero());
        self.logs.resize(k, T::zero());
        self.scratch.resize(2 * d, T::zero());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn sched() -> NoiseSchedule<f64> {
        NoiseSchedule::ddpm_default()
    }

    #[test]
    fn single_component_is_bitwise_gaussian() {
        let g = GaussianSpec::new(
            DVector::from_vec(vec![0.5, -1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 0.7]),
        )
        .unwrap();
        let m = MixtureSpec::new(vec![1.0], vec![g.clone()]).unwrap();
        let s = sched();
        for i in [0, 1, 250, 999, 1000] {
            let x = [0.3, 1.7];
            assert_eq!(m.score(&s, i, &x).unwrap(), g.score(&s, i, &x).unwrap());
        }
    }

    #[test]
    fn symmetric_pair_has_zero_axial_score_on_the_axis() {
        let a = GaussianSpec::isotropic(&[-2.0, 0.0], 0.5).unwrap();
        let b = GaussianSpec::isotropic(&[2.0, 0.0], 0.5).unwrap();
        let m = MixtureSpec::new(vec![0.5, 0.5], vec![a, b]).unwrap();
        let s = sched();
        for i in [0, 100, 600] {
            let out = m.score(&s, i, &[0.0, 0.7]).unwrap();
            assert!(out[0].abs() < 1e-12, "axial component {}", out[0]);
        }
    }

    #[test]
    fn overflowing_densities_fall_back_to_a_component_score() {
        let a = GaussianSpec::isotropic(&[-1.0], 1e-6).unwrap();
        let b = GaussianSpec::isotropic(&[1.0], 1e-6).unwrap();
        let m = MixtureSpec::new(vec![0.5, 0.5], vec![a.clone(), b.clone()]).unwrap();
        let s = sched();
        // Squared Mahalanobis distance overflows, so every log term is -inf.
        let x = [1e160];
        let out = m.score(&s, 0, &x).unwrap();
        assert!(!out[0].is_nan());
        assert!(out == a.score(&s, 0, &x).unwrap() || out == b.score(&s, 0, &x).unwrap());
    }

    #[test]
    fn validates_weights() {
        let g = GaussianSpec::<f64>::standard(1);
        assert!(MixtureSpec::new(vec![0.5], vec![g.clone()]).is_err());
        assert!(MixtureSpec::new(vec![1.5, -0.5], vec![g.clone(), g.clone()]).is_err());
        let g2 = GaussianSpec::<f64>::standard(2);
        assert!(MixtureSpec::new(vec![0.5, 0.5], vec![g, g2]).is_err());
    }
}
