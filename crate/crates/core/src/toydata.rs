//! Toy datasets: two imbalanced concentric circles and their mixture surrogate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::points::PointCloud;
use crate::rng::RngStream;
use crate::score::{GaussianSpec, MixtureSpec};
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ring {
    Major,
    Minor,
}

impl Ring {
    pub fn label(self) -> &'static str {
        match self {
            Ring::Major => "major",
            Ring::Minor => "minor",
        }
    }
}

/// Two noisy circles with `imbalance : 1` majority to minority counts.
///
/// The default places the minority on the outer ring.
#[derive(Clone, Debug, PartialEq)]
pub struct CirclesSpec {
    pub radius_major: f64,
    pub radius_minor: f64,
    pub ring_noise_sigma: f64,
    pub imbalance: f64,
    pub n_points: usize,
    pub seed: u64,
}

impl Default for CirclesSpec {
    fn default() -> Self {
        Self {
            radius_major: 0.5,
            radius_minor: 1.0,
            ring_noise_sigma: 0.02,
            imbalance: 10.0,
            n_points: 11_000,
            seed: 0,
        }
    }
}

impl CirclesSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("radius_major", self.radius_major),
            ("radius_minor", self.radius_minor),
            ("ring_noise_sigma", self.ring_noise_sigma),
            ("imbalance", self.imbalance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        let gap = (self.radius_major - self.radius_minor).abs();
        if gap == 0.0 {
            return Err(Error::param("radius_minor", "radii must differ"));
        }
        if self.ring_noise_sigma >= gap / 4.0 {
            return Err(Error::param(
                "ring_noise_sigma",
                format!("must be below a quarter of the ring gap ({})", gap / 4.0),
            ));
        }
        Ok(())
    }

    pub fn minor_fraction(&self) -> f64 {
        1.0 / (1.0 + self.imbalance)
    }

    /// Geometry with the default off-manifold threshold `3σ`.
    pub fn geometry(&self) -> CirclesGeometry {
        CirclesGeometry {
            radius_major: self.radius_major,
            radius_minor: self.radius_minor,
            ring_noise_sigma: self.ring_noise_sigma,
            eps_manifold: 3.0 * self.ring_noise_sigma,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CirclesGeometry {
    pub radius_major: f64,
    pub radius_minor: f64,
    pub ring_noise_sigma: f64,
    pub eps_manifold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPoints<T: Real> {
    pub points: PointCloud<T>,
    pub labels: Vec<Ring>,
}

pub fn sample_circles<T: Real>(spec: &CirclesSpec) -> Result<LabeledPoints<T>> {
    spec.validate()?;
    let mut rng = RngStream::new(spec.seed, 0);
    let p_minor = spec.minor_fraction();
    let mut data = Vec::with_capacity(2 * spec.n_points);
    let mut labels = Vec::with_capacity(spec.n_points);
    for _ in 0..spec.n_points {
        let ring = if rng.uniform() < p_minor { Ring::Minor } else { Ring::Major };
        let r = match ring {
            Ring::Major => spec.radius_major,
            Ring::Minor => spec.radius_minor,
        };
        let theta = std::f64::consts::TAU * rng.uniform();
        let (nx, ny): (f64, f64) = (rng.normal(), rng.normal());
        data.push(T::of(r * theta.cos() + spec.ring_noise_sigma * nx));
        data.push(T::of(r * theta.sin() + spec.ring_noise_sigma * ny));
        labels.push(ring);
    }
    Ok(LabeledPoints {
        points: PointCloud::new(2, data)?,
        labels,
    })
}

/// Equally spaced isotropic Gaussians of variance `σ²` on each ring, ring
/// weights in ratio `imbalance : 1`.
pub fn circles_ring_mixture<T: Real>(spec: &CirclesSpec, components_per_ring: usize) -> Result<MixtureSpec<T>> {
    spec.validate()?;
    if components_per_ring < 8 {
        return Err(Error::param("components_per_ring", "must be at least 8"));
    }
    let k = components_per_ring;
    let var = T::of(spec.ring_noise_sigma * spec.ring_noise_sigma);
    let w_minor = spec.minor_fraction();
    let mut weights = Vec::with_capacity(2 * k);
    let mut comps = Vec::with_capacity(2 * k);
    for (r, w) in [(spec.radius_major, 1.0 - w_minor), (spec.radius_minor, w_minor)] {
        for c in 0..k {
            let theta = std::f64::consts::TAU * c as f64 / k as f64;
            let mean = DVector::from_vec(vec![T::of(r * theta.cos()), T::of(r * theta.sin())]);
            comps.push(GaussianSpec::new(mean, DMatrix::identity(2, 2) * var)?);
            weights.push(T::of(w / k as f64));
        }
    }
    MixtureSpec::new(weights, comps)
}

/// A mixture on a single ring of radius `radius`.
pub fn single_ring_mixture<T: Real>(radius: f64, sigma: f64, components: usize) -> Result<MixtureSpec<T>> {
    if components < 8 {
        return Err(Error::param("components_per_ring", "must be at least 8"));
    }
    let var = T::of(sigma * sigma);
    let comps = (0..components)
        .map(|c| {
            let theta = std::f64::consts::TAU * c as f64 / components as f64;
            let mean = DVector::from_vec(vec![T::of(radius * theta.cos()), T::of(radius * theta.sin())]);
            GaussianSpec::new(mean, DMatrix::identity(2, 2) * var)
        })
        .collect::<Result<Vec<_>>>()?;
    MixtureSpec::new(vec![T::of(1.0 / components as f64); components], comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::NoiseSchedule;

    #[test]
    fn labels_follow_imbalance() {
        let spec = CirclesSpec {
            n_points: 110_000,
            ..CirclesSpec::default()
        };
        let s = sample_circles::<f64>(&spec).unwrap();
        let minor = s.labels.iter().filter(|&&l| l == Ring::Minor).count() as f64;
        let p: f64 = 1.0 / 11.0;
        let sd = (110_000.0 * p * (1.0 - p)).sqrt();
        assert!((minor - 10_000.0).abs() < 4.0 * sd, "{minor}");
    }

    #[test]
    fn balanced_labels() {
        let spec = CirclesSpec {
            imbalance: 1.0,
            n_points: 20_000,
            ..CirclesSpec::default()
        };
        let s = sample_circles::<f64>(&spec).unwrap();
        let minor = s.labels.iter().filter(|&&l| l == Ring::Minor).count() as f64;
        assert!((minor - 10_000.0).abs() < 4.0 * 70.8);
    }

    #[test]
    fn tiny_noise_puts_points_on_circles() {
        let spec = CirclesSpec {
            ring_noise_sigma: 1e-12,
            n_points: 500,
            ..CirclesSpec::default()
        };
        let s = sample_circles::<f64>(&spec).unwrap();
        for (p, l) in s.points.rows().zip(&s.labels) {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            let want = if *l == Ring::Minor { spec.radius_minor } else { spec.radius_major };
            assert!((r - want).abs() < 1e-9);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = CirclesSpec::default();
        assert_eq!(sample_circles::<f64>(&spec).unwrap(), sample_circles::<f64>(&spec).unwrap());
    }

    #[test]
    fn rejects_overlapping_rings() {
        let spec = CirclesSpec {
            ring_noise_sigma: 0.2,
            ..CirclesSpec::default()
        };
        assert!(spec.validate().is_err());
        let spec = CirclesSpec {
            radius_minor: 0.5,
            ..CirclesSpec::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn mixture_weights_and_rotation_invariance() {
        let spec = CirclesSpec::default();
        let m = circles_ring_mixture::<f64>(&spec, 64).unwrap();
        let total: f64 = m.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let minor: f64 = m.weights()[64..].iter().sum();
        assert!((minor - 1.0 / 11.0).abs() < 1e-12);
        let s = NoiseSchedule::<f64>::ddpm_default();
        // At i = 0 the outer ring's components sit ~5σ apart; a few steps of
        // forward noise are enough to merge them.
        for r in [spec.radius_major, spec.radius_minor] {
            let a = s.alpha_bar(10).sqrt();
            let dens: Vec<f64> = (0..720)
                .map(|k| {
                    let t = std::f64::consts::TAU * k as f64 / 720.0;
                    let x = [a * r * t.cos(), a * r * t.sin()];
                    m.log_density(&s, 10, &x).unwrap().exp()
                })
                .collect();
            let (lo, hi) = dens.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
            assert!(hi / lo - 1.0 < 0.05, "r={r}: {lo} {hi}");
        }
    }

    #[test]
    fn single_ring_mixture_puts_all_weight_on_one_ring() {
        let m = single_ring_mixture::<f64>(1.0, 0.02, 16).unwrap();
        assert_eq!(m.components().len(), 16);
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
