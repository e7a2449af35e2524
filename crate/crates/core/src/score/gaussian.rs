use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::schedule::NoiseSchedule;
use crate::{linalg, Real};

/// Gaussian data law `N(μ₀, Σ₀)`.
///
/// The eigendecomposition of `Σ₀` is cached: every noisy marginal
/// `Σ_t = I + α²(Σ₀ − I)` shares its eigenvectors, so scores and densities
/// cost one rotation per evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSpec<T: Real> {
    mean: DVector<T>,
    cov: DMatrix<T>,
    eig_vals: DVector<T>,
    eig_vecs: DMatrix<T>,
    cov_sqrt: DMatrix<T>,
}

impl<T: Real> GaussianSpec<T> {
    pub fn new(mean: DVector<T>, cov: DMatrix<T>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::param("mean", "dimension must be at least 1"));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::param(
                "cov",
                format!("expected {d}x{d}, got {}x{}", cov.nrows(), cov.ncols()),
            ));
        }
        let scale = cov.iter().fold(T::one(), |m, v| m.max(v.abs()));
        let tol = T::of(1e-12).max(T::default_epsilon() * T::of(4.0) * scale);
        if !linalg::is_symmetric(&cov, tol) {
            return Err(Error::param("cov", "not symmetric"));
        }
        let eig = cov.clone().symmetric_eigen();
        if let Some(l) = eig.eigenvalues.iter().find(|l| !(**l > T::zero())) {
            return Err(Error::param("cov", format!("not positive definite (eigenvalue {l})")));
        }
        let cov_sqrt = linalg::sym_sqrt(&cov);
        Ok(Self {
            mean,
            cov,
            cov_sqrt,
            eig_vals: eig.eigenvalues,
            eig_vecs: eig.eigenvectors,
        })
    }

    /// `N(mean, var·I)`.
    pub fn isotropic(mean: &[T], var: T) -> Result<Self> {
        let d = mean.len();
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::from_diagonal_element(d, d, var),
        )
    }

    pub fn standard(d: usize) -> Self {
        Self::isotropic(&vec![T::zero(); d], T::one()).expect("identity covariance is valid")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<T> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<T> {
        &self.cov
    }

    /// Noisy marginal at signal scale `alpha`: `(αμ₀, I + α²(Σ₀ − I))`.
    pub fn marginal_at_alpha(&self, alpha: T) -> (DVector<T>, DMatrix<T>) {
        let d = self.dim();
        let a2 = alpha * alpha;
        let mean = &self.mean * alpha;
        let cov = DMatrix::identity(d, d) + (&self.cov - DMatrix::identity(d, d)) * a2;
        (mean, cov)
    }

    /// Forward marginal at grid index `i`.
    pub fn marginal(&self, schedule: &NoiseSchedule<T>, i: usize) -> Result<(DVector<T>, DMatrix<T>)> {
        let alpha = schedule.alpha_continuous(i)?;
        Ok(self.marginal_at_alpha(alpha))
    }

    /// Rotates `x − √ā μ₀` into the eigenbasis and divides by the marginal
    /// eigenvalues. Returns `Σ ln(marginal eigenvalue)` for density use.
    fn whiten(&self, alpha_bar: T, x: &[T], y: &mut [T], r: &mut [T]) -> T {
        let d = self.dim();
        let alpha = alpha_bar.sqrt();
        for k in 0..d {
            r[k] = x[k] - alpha * self.mean[k];
        }
        let mut logdet = T::zero();
        for k in 0..d {
            let mut acc = T::zero();
            for j in 0..d {
                acc += self.eig_vecs[(j, k)] * r[j];
            }
            let lam = T::one() + alpha_bar * (self.eig_vals[k] - T::one());
            y[k] = acc / lam;
            logdet += lam.ln();
        }
        logdet
    }

    /// Writes `−Σ_t⁻¹(x − μ_t)` into `out`; `alpha_bar` is `α(t)²`.
    /// Returns `(log density, squared Mahalanobis distance)`.
    pub(crate) fn score_and_logpdf(
        &self,
        alpha_bar: T,
        x: &[T],
        out: &mut [T],
        scratch: &mut [T],
    ) -> (T, T) {
        let d = self.dim();
        let (y, r) = scratch.split_at_mut(d);
        let logdet = self.whiten(alpha_bar, x, y, r);
        // Mahalanobis: r·Σ⁻¹r = Σ_k (Vᵀr)_k² / lam_k = Σ_k y_k² lam_k.
        let mut maha = T::zero();
        for k in 0..d {
            let lam = T::one() + alpha_bar * (self.eig_vals[k] - T::one());
            maha += y[k] * y[k] * lam;
        }
        for j in 0..d {
            let mut acc = T::zero();
            for k in 0..d {
                acc += self.eig_vecs[(j, k)] * y[k];
            }
            out[j] = -acc;
        }
        let log_2pi = (T::two_pi()).ln();
        let logpdf = -(T::of_usize(d) * log_2pi + logdet + maha) * T::of(0.5);
        (logpdf, maha)
    }

    /// Log density of the noisy marginal at index `i`.
    pub fn log_density(&self, schedule: &NoiseSchedule<T>, i: usize, x: &[T]) -> Result<T> {
        schedule.check_index(i)?;
        self.check_dim(x)?;
        let d = self.dim();
        let mut out = vec![T::zero(); d];
        let mut scratch = vec![T::zero(); 2 * d];
        Ok(self
            .score_and_logpdf(schedule.alpha_bar(i), x, &mut out, &mut scratch)
            .0)
    }

    pub fn score(&self, schedule: &NoiseSchedule<T>, i: usize, x: &[T]) -> Result<Vec<T>> {
        schedule.check_index(i)?;
        self.check_dim(x)?;
        let d = self.dim();
        let mut out = vec![T::zero(); d];
        let mut scratch = vec![T::zero(); 2 * d];
        self.score_and_logpdf(schedule.alpha_bar(i), x, &mut out, &mut scratch);
        Ok(out)
    }

    pub(crate) fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::param(
                "x",
                format!("dimension {} does not match {}", x.len(), self.dim()),
            ));
        }
        Ok(())
    }

    /// Draws `x = μ₀ + Σ₀^{1/2} z`.
    pub fn sample_into(&self, rng: &mut RngStream, out: &mut [T]) {
        sample_gaussian(&self.mean, &self.cov_sqrt, rng, out);
    }
}

/// Draws from `N(mean, cov)` for an arbitrary symmetric PSD `cov`.
pub fn sample_gaussian<T: Real>(
    mean: &DVector<T>,
    cov_sqrt: &DMatrix<T>,
    rng: &mut RngStream,
    out: &mut [T],
) {
    let d = mean.len();
    let z: Vec<T> = rng.normal_vec(d);
    for j in 0..d {
        let mut acc = mean[j];
        for k in 0..d {
            acc += cov_sqrt[(j, k)] * z[k];
        }
        out[j] = acc;
    }
}
