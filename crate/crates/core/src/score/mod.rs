//! Score fields `s(x, i) ≈ ∇ₓ log p_i(x)`.
//!
//! Exact oracles exist for Gaussian and Gaussian-mixture data; arbitrary
//! toy data goes through a small trained network.

mod gaussian;
mod mixture;
pub mod mlp;
pub mod train;

pub use gaussian::{sample_gaussian, GaussianSpec};
pub use mixture::MixtureSpec;
pub use mlp::{Activation, MlpScoreNet};
pub use train::{dsm_train, DataSampler, Optimizer, TrainConfig, TrainedNet};

use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::Real;

#[derive(Clone, Debug)]
pub enum ScoreField<T: Real> {
    Gaussian(GaussianSpec<T>),
    Mixture(MixtureSpec<T>),
    Net(MlpScoreNet<T>),
}

impl<T: Real> ScoreField<T> {
    pub fn dim(&self) -> usize {
        match self {
            ScoreField::Gaussian(g) => g.dim(),
            ScoreField::Mixture(m) => m.dim(),
            ScoreField::Net(n) => n.dim(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ScoreField::Gaussian(_) => "gaussian-oracle",
            ScoreField::Mixture(_) => "mixture-oracle",
            ScoreField::Net(_) => "trained-net",
        }
    }

    pub fn score(&self, schedule: &NoiseSchedule<T>, i: usize, x: &[T]) -> Result<Vec<T>> {
        match self {
            ScoreField::Gaussian(g) => g.score(schedule, i, x),
            ScoreField::Mixture(m) => m.score(schedule, i, x),
            ScoreField::Net(n) => n.score(schedule, i, x),
        }
    }

    /// Scores for a row-major batch `xs` (`n × dim`) at index `i`.
    pub fn score_batch(
        &self,
        schedule: &NoiseSchedule<T>,
        i: usize,
        xs: &[T],
        out: &mut [T],
    ) -> Result<()> {
        let d = self.dim();
        if xs.len() % d != 0 || out.len() != xs.len() {
            return Err(Error::param(
                "x",
                format!("batch of length {} does not fit dimension {d}", xs.len()),
            ));
        }
        match self {
            ScoreField::Gaussian(g) => {
                schedule.check_index(i)?;
                let ab = schedule.alpha_bar(i);
                let mut scratch = vec![T::zero(); 2 * d];
                for (x, o) in xs.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                    g.score_and_logpdf(ab, x, o, &mut scratch);
                }
                Ok(())
            }
            ScoreField::Mixture(m) => {
                schedule.check_index(i)?;
                let ab = schedule.alpha_bar(i);
                let mut buf = mixture::MixtureScratch::default();
                for (x, o) in xs.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                    m.score_and_logpdf(ab, x, o, &mut buf);
                }
                Ok(())
            }
            ScoreField::Net(n) => n.score_batch(schedule, i, xs, out),
        }
    }

    /// Log density of the noisy marginal, for the analytic variants.
    pub fn log_density(&self, schedule: &NoiseSchedule<T>, i: usize, x: &[T]) -> Option<Result<T>> {
        match self {
            ScoreField::Gaussian(g) => Some(g.log_density(schedule, i, x)),
            ScoreField::Mixture(m) => Some(m.log_density(schedule, i, x)),
            ScoreField::Net(_) => None,
        }
    }
}

impl<T: Real> From<GaussianSpec<T>> for ScoreField<T> {
    fn from(g: GaussianSpec<T>) -> Self {
        ScoreField::Gaussian(g)
    }
}

impl<T: Real> From<MixtureSpec<T>> for ScoreField<T> {
    fn from(m: MixtureSpec<T>) -> Self {
        ScoreField::Mixture(m)
    }
}

impl<T: Real> From<MlpScoreNet<T>> for ScoreField<T> {
    fn from(n: MlpScoreNet<T>) -> Self {
        ScoreField::Net(n)
    }
}
