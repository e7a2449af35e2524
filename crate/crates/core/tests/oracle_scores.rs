use bnslab_core::rng::RngStream;
use bnslab_core::toydata::circles_ring_mixture;
use bnslab_core::{CirclesSpec, GaussianSpec, MixtureSpec, NoiseSchedule, ScoreField};
use nalgebra::{DMatrix, DVector};

/// Five-point central difference of the log density.
fn fd_score(field: &ScoreField<f64>, s: &NoiseSchedule<f64>, i: usize, x: &[f64], h: f64) -> Vec<f64> {
    let f = |y: &[f64]| field.log_density(s, i, y).unwrap().unwrap();
    (0..x.len())
        .map(|k| {
            let at = |off: f64| {
                let mut y = x.to_vec();
                y[k] += off;
                f(&y)
            };
            (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
        })
        .collect()
}

fn check_field(field: &ScoreField<f64>, min_var: f64, spread: f64, seed: u64) {
    let s = NoiseSchedule::<f64>::ddpm_default();
    let mut rng = RngStream::new(seed, 0);
    let d = field.dim();
    for probe in 0..100 {
        let i = 1 + rng.index(s.n_steps());
        let var = min_var.max(1.0 - s.alpha_bar(i));
        let x: Vec<f64> = (0..d).map(|_| spread * rng.normal::<f64>()).collect();
        let h = 1e-3 * var.sqrt();
        let analytic = field.score(&s, i, &x).unwrap();
        let numeric = fd_score(field, &s, i, &x, h);
        let err = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
        assert!(
            err <= 1e-4 * scale,
            "probe {probe}: i={i} x={x:?} analytic={analytic:?} numeric={numeric:?}"
        );
    }
}

#[test]
fn gaussian_scores_match_finite_differences() {
    let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, -0.2, 0.0, -0.2, 0.5]);
    let g = GaussianSpec::new(DVector::from_vec(vec![1.0, -0.5, 0.25]), cov).unwrap();
    check_field(&ScoreField::Gaussian(g), 0.0, 2.0, 1);
    let narrow = GaussianSpec::isotropic(&[0.3], 1e-4).unwrap();
    check_field(&ScoreField::Gaussian(narrow), 1e-4, 0.5, 2);
}

#[test]
fn mixture_scores_match_finite_differences() {
    let comps = vec![
        GaussianSpec::isotropic(&[-1.0, 0.0], 0.1).unwrap(),
        GaussianSpec::isotropic(&[1.5, 0.5], 0.3).unwrap(),
        GaussianSpec::isotropic(&[0.0, 2.0], 0.05).unwrap(),
    ];
    let m = MixtureSpec::new(vec![0.5, 0.3, 0.2], comps).unwrap();
    check_field(&ScoreField::Mixture(m), 0.05, 1.5, 3);
}

#[test]
fn eight_component_ring_scores_match_finite_differences() {
    let sigma2 = 0.01;
    let comps = (0..8)
        .map(|k| {
            let t = k as f64 * std::f64::consts::TAU / 8.0;
            GaussianSpec::isotropic(&[t.cos(), t.sin()], sigma2).unwrap()
        })
        .collect();
    let m = MixtureSpec::new(vec![0.125; 8], comps).unwrap();
    check_field(&ScoreField::Mixture(m), sigma2, 1.0, 4);
}

#[test]
fn two_circles_oracle_scores_match_finite_differences() {
    let spec = CirclesSpec::default();
    let m = circles_ring_mixture::<f64>(&spec, 16).unwrap();
    check_field(&ScoreField::Mixture(m), spec.ring_noise_sigma.powi(2), 0.8, 5);
}
