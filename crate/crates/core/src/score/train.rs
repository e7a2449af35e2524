//! Denoising score matching for [`MlpScoreNet`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::points::PointCloud;
use crate::rng::RngStream;
use crate::schedule::NoiseSchedule;
use crate::score::mlp::{Activation, Gradients, Layer, MlpScoreNet, DEFAULT_HIDDEN};
use crate::score::{GaussianSpec, MixtureSpec};
use crate::Real;

/// Source of training points.
pub trait DataSampler<T: Real> {
    fn dim(&self) -> usize;

    /// Fills `out` (row-major, `out.len() / dim` points) with fresh draws.
    fn sample_into(&self, rng: &mut RngStream, out: &mut [T]);
}

impl<T: Real> DataSampler<T> for GaussianSpec<T> {
    fn dim(&self) -> usize {
        GaussianSpec::dim(self)
    }

    fn sample_into(&self, rng: &mut RngStream, out: &mut [T]) {
        let d = GaussianSpec::dim(self);
        for x in out.chunks_exact_mut(d) {
            GaussianSpec::sample_into(self, rng, x);
        }
    }
}

impl<T: Real> DataSampler<T> for MixtureSpec<T> {
    fn dim(&self) -> usize {
        MixtureSpec::dim(self)
    }

    fn sample_into(&self, rng: &mut RngStream, out: &mut [T]) {
        let d = MixtureSpec::dim(self);
        for x in out.chunks_exact_mut(d) {
            MixtureSpec::sample_into(self, rng, x);
        }
    }
}

/// Uniform resampling (with replacement) from a fixed dataset.
impl<T: Real> DataSampler<T> for PointCloud<T> {
    fn dim(&self) -> usize {
        PointCloud::dim(self)
    }

    fn sample_into(&self, rng: &mut RngStream, out: &mut [T]) {
        let d = PointCloud::dim(self);
        for x in out.chunks_exact_mut(d) {
            let k = rng.index(self.len());
            x.copy_from_slice(self.row(k));
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub n_iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: Optimizer,
    /// Cosine-anneal the learning rate down to this value by the last iteration.
    pub final_learning_rate: Option<f64>,
    /// Multiplier on the initial first-layer weights of the time input.
    pub time_init_gain: f64,
    /// Steps are drawn as `1 + ⌊N·u^p⌋` with `u` uniform; `p = 1` is uniform,
    /// larger `p` concentrates training on low noise levels.
    pub step_exponent: f64,
    /// Return an exponential moving average of the weights with this decay.
    pub ema_decay: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_iterations: 4000,
            batch_size: 256,
            learning_rate: 1e-2,
            seed: 0,
            hidden: vec![DEFAULT_HIDDEN, DEFAULT_HIDDEN],
            activation: Activation::Silu,
            optimizer: Optimizer::Sgd,
            final_learning_rate: None,
            step_exponent: 1.0,
            time_init_gain: 1.0,
            ema_decay: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::param("learning_rate", "must be positive and finite"));
        }
        if let Some(lr) = self.final_learning_rate {
            if !(lr >= 0.0) || !lr.is_finite() {
                return Err(Error::param("final_learning_rate", "must be non-negative and finite"));
            }
        }
        if !(self.step_exponent > 0.0) || !self.step_exponent.is_finite() {
            return Err(Error::param("step_exponent", "must be positive and finite"));
        }
        if !(self.time_init_gain > 0.0) || !self.time_init_gain.is_finite() {
            return Err(Error::param("time_init_gain", "must be positive and finite"));
        }
        if let Some(e) = self.ema_decay {
            if !(0.0..1.0).contains(&e) {
                return Err(Error::param("ema_decay", "must lie in [0, 1)"));
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::param("hidden", "need at least one non-empty hidden layer"));
        }
        Ok(())
    }

    /// Learning rate at iteration `it`, cosine-annealed when a final rate is set.
    pub fn learning_rate_at(&self, it: usize) -> f64 {
        match self.final_learning_rate {
            None => self.learning_rate,
            Some(end) => {
                let n = self.n_iterations.max(2) - 1;
                let u = (it.min(n) as f64) / n as f64;
                end + 0.5 * (self.learning_rate - end) * (1.0 + (std::f64::consts::PI * u).cos())
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedNet<T: Real> {
    pub net: MlpScoreNet<T>,
    /// Mean batch loss per iteration.
    pub losses: Vec<f64>,
}

impl<T: Real> TrainedNet<T> {
    /// Mean loss over the first and last tenth of training.
    pub fn loss_head_tail(&self) -> Option<(f64, f64)> {
        let n = self.losses.len();
        let w = (n / 10).max(1);
        if n < 2 {
            return None;
        }
        let head = self.losses[..w].iter().sum::<f64>() / w as f64;
        let tail = self.losses[n - w..].iter().sum::<f64>() / w as f64;
        Some((head, tail))
    }
}

/// One denoising score matching loss/gradient evaluation.
///
/// Loss is the batch mean of `‖ε̂(x_i, i/N) − ε‖²` with `x_i = √ᾱ_i x₀ + √(1−ᾱ_i) ε`.
pub fn dsm_loss_and_grad<T: Real>(
    net: &MlpScoreNet<T>,
    schedule: &NoiseSchedule<T>,
    x0: &[T],
    steps: &[usize],
    noise: &[T],
) -> (T, Gradients<T>) {
    let d = net.dim();
    let n = steps.len();
    let big_n = T::of_usize(schedule.n_steps());
    let mut input = DMatrix::zeros(d + 1, n);
    for j in 0..n {
        let i = steps[j];
        let ab = schedule.alpha_bar(i);
        let (sa, sn) = (ab.sqrt(), (T::one() - ab).sqrt());
        for k in 0..d {
            input[(k, j)] = sa * x0[j * d + k] + sn * noise[j * d + k];
        }
        input[(d, j)] = T::of_usize(i) / big_n;
    }
    let cache = net.forward_cached(input);
    let mut resid = cache.output.clone();
    for (r, e) in resid.as_mut_slice().iter_mut().zip(noise) {
        *r -= *e;
    }
    let inv_n = T::one() / T::of_usize(n);
    let loss = resid.iter().fold(T::zero(), |a, &v| a + v * v) * inv_n;
    let d_out = resid * (T::of(2.0) * inv_n);
    let grads = net.backward(&cache, d_out);
    (loss, grads)
}

struct AdamState<T: Real> {
    m: Vec<Layer<T>>,
    v: Vec<Layer<T>>,
    t: i32,
}

fn zeros_like<T: Real>(net: &MlpScoreNet<T>) -> Vec<Layer<T>> {
    net.layers()
        .iter()
        .map(|l| Layer {
            weights: DMatrix::zeros(l.weights.nrows(), l.weights.ncols()),
            bias: nalgebra::DVector::zeros(l.bias.len()),
        })
        .collect()
}

/// Trains a fresh network by denoising score matching.
///
/// Initialization draws from stream 0 of `config.seed`; minibatches, steps
/// and noise from stream 1. With zero iterations the initialization is
/// returned unchanged.
pub fn dsm_train<T: Real, S: DataSampler<T> + ?Sized>(
    data: &S,
    schedule: &NoiseSchedule<T>,
    config: &TrainConfig,
) -> Result<TrainedNet<T>> {
    config.validate()?;
    let d = data.dim();
    let mut init_rng = RngStream::new(config.seed, 0);
    let mut net = MlpScoreNet::new(d, &config.hidden, config.activation, &mut init_rng);
    if config.time_init_gain != 1.0 {
        let g = T::of(config.time_init_gain);
        let w = &mut net.layers_mut()[0].weights;
        for r in 0..w.nrows() {
            w[(r, d)] *= g;
        }
    }
    let mut rng = RngStream::new(config.seed, 1);
    let b = config.batch_size;
    let big_n = schedule.n_steps();

    let mut x0 = vec![T::zero(); b * d];
    let mut noise = vec![T::zero(); b * d];
    let mut steps = vec![0usize; b];
    let mut losses = Vec::with_capacity(config.n_iterations);
    let mut adam = match config.optimizer {
        Optimizer::Adam { .. } => Some(AdamState {
            m: zeros_like(&net),
            v: zeros_like(&net),
            t: 0,
        }),
        Optimizer::Sgd => None,
    };

    let mut ema = config.ema_decay.map(|_| net.clone());

    for it in 0..config.n_iterations {
        let lr = T::of(config.learning_rate_at(it));
        data.sample_into(&mut rng, &mut x0);
        for s in steps.iter_mut() {
            *s = if config.step_exponent == 1.0 {
                1 + rng.index(big_n)
            } else {
                let u = rng.uniform().powf(config.step_exponent);
                1 + ((u * big_n as f64) as usize).min(big_n - 1)
            };
        }
        rng.fill_normal(&mut noise);
        let (loss, grads) = dsm_loss_and_grad(&net, schedule, &x0, &steps, &noise);
        if !loss.is_finite() {
            return Err(Error::Training { iteration: it });
        }
        losses.push(loss.as_f64());
        match (&mut adam, config.optimizer) {
            (Some(state), Optimizer::Adam { beta1, beta2, eps }) => {
                adam_step(&mut net, state, &grads, lr, beta1, beta2, eps)
            }
            _ => net.apply_update(&grads, lr),
        }
        if let (Some(avg), Some(decay)) = (&mut ema, config.ema_decay) {
            blend(avg, &net, T::of(decay));
        }
    }
    Ok(TrainedNet {
        net: ema.unwrap_or(net),
        losses,
    })
}

fn blend<T: Real>(avg: &mut MlpScoreNet<T>, net: &MlpScoreNet<T>, decay: T) {
    let keep = T::one() - decay;
    for (a, l) in avg.layers_mut().iter_mut().zip(net.layers()) {
        for (p, &q) in a.weights.as_mut_slice().iter_mut().zip(l.weights.as_slice()) {
            *p = decay * *p + keep * q;
        }
        for (p, &q) in a.bias.as_mut_slice().iter_mut().zip(l.bias.as_slice()) {
            *p = decay * *p + keep * q;
        }
    }
}

fn adam_step<T: Real>(
    net: &mut MlpScoreNet<T>,
    state: &mut AdamState<T>,
    grads: &Gradients<T>,
    lr: T,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    state.t += 1;
    let (b1, b2, eps) = (T::of(beta1), T::of(beta2), T::of(eps));
    let c1 = T::one() - T::of(beta1.powi(state.t));
    let c2 = T::one() - T::of(beta2.powi(state.t));
    let step_size = lr * c2.sqrt() / c1;
    let update = |p: &mut [T], m: &mut [T], v: &mut [T], g: &[T]| {
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (T::one() - b1) * g[k];
            v[k] = b2 * v[k] + (T::one() - b2) * g[k] * g[k];
            p[k] -= step_size * m[k] / (v[k].sqrt() + eps);
        }
    };
    for (k, layer) in net.layers_mut().iter_mut().enumerate() {
        let g = &grads.layers[k];
        update(
            layer.weights.as_mut_slice(),
            state.m[k].weights.as_mut_slice(),
            state.v[k].weights.as_mut_slice(),
            g.weights.as_slice(),
        );
        update(
            layer.bias.as_mut_slice(),
            state.m[k].bias.as_mut_slice(),
            state.v[k].bias.as_mut_slice(),
            g.bias.as_slice(),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(iters: usize) -> TrainConfig {
        TrainConfig {
            n_iterations: iters,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 5,
            hidden: vec![8, 8],
            ..TrainConfig::default()
        }
    }

    /// Central finite differences of the DSM loss over every parameter.
    #[test]
    fn backprop_matches_finite_differences() {
        let schedule = NoiseSchedule::<f64>::linear(50, 1e-3, 0.1).unwrap();
        let mut rng = RngStream::new(9, 0);
        let net = MlpScoreNet::new(2, &[6, 5], Activation::Silu, &mut rng);
        let n = 10;
        let x0: Vec<f64> = rng.normal_vec(2 * n);
        let noise: Vec<f64> = rng.normal_vec(2 * n);
        let steps: Vec<usize> = (0..n).map(|_| 1 + rng.index(50)).collect();
        let (_, grads) = dsm_loss_and_grad(&net, &schedule, &x0, &steps, &noise);

        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for (li, layer) in net.layers().iter().enumerate() {
            for idx in 0..layer.weights.len() + layer.bias.len() {
                let mut plus = net.clone();
                let mut minus = net.clone();
                let bump = |m: &mut MlpScoreNet<f64>, delta: f64| {
                    let l = &mut m.layers_mut()[li];
                    if idx < l.weights.len() {
                        l.weights.as_mut_slice()[idx] += delta;
                    } else {
                        l.bias.as_mut_slice()[idx - l.weights.len()] += delta;
                    }
                };
                bump(&mut plus, h);
                bump(&mut minus, -h);
                let lp = dsm_loss_and_grad(&plus, &schedule, &x0, &steps, &noise).0;
                let lm = dsm_loss_and_grad(&minus, &schedule, &x0, &steps, &noise).0;
                let fd = (lp - lm) / (2.0 * h);
                let g = &grads.layers[li];
                let an = if idx < g.weights.len() {
                    g.weights.as_slice()[idx]
                } else {
                    g.bias.as_slice()[idx - g.weights.len()]
                };
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn tanh_backprop_matches_finite_differences() {
        let schedule = NoiseSchedule::<f64>::linear(20, 1e-3, 0.2).unwrap();
        let mut rng = RngStream::new(2, 0);
        let net = MlpScoreNet::new(1, &[4, 4], Activation::Tanh, &mut rng);
        let x0: Vec<f64> = rng.normal_vec(5);
        let noise: Vec<f64> = rng.normal_vec(5);
        let steps = vec![1, 5, 10, 15, 20];
        let (_, grads) = dsm_loss_and_grad(&net, &schedule, &x0, &steps, &noise);
        let h = 1e-6;
        for idx in 0..net.layers()[1].weights.len() {
            let mut p = net.clone();
            let mut m = net.clone();
            p.layers_mut()[1].weights.as_mut_slice()[idx] += h;
            m.layers_mut()[1].weights.as_mut_slice()[idx] -= h;
            let fd = (dsm_loss_and_grad(&p, &schedule, &x0, &steps, &noise).0
                - dsm_loss_and_grad(&m, &schedule, &x0, &steps, &noise).0)
                / (2.0 * h);
            let an = grads.layers[1].weights.as_slice()[idx];
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-3));
        }
    }

    #[test]
    fn zero_iterations_returns_initialization() {
        let g = GaussianSpec::<f64>::standard(2);
        let s = NoiseSchedule::ddpm_default();
        let cfg = small_config(0);
        let trained = dsm_train(&g, &s, &cfg).unwrap();
        let init = MlpScoreNet::new(2, &cfg.hidden, cfg.activation, &mut RngStream::new(cfg.seed, 0));
        assert_eq!(trained.net, init);
        assert!(trained.losses.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let g = GaussianSpec::<f64>::standard(2);
        let s = NoiseSchedule::ddpm_default();
        let a = dsm_train(&g, &s, &small_config(20)).unwrap();
        let b = dsm_train(&g, &s, &small_config(20)).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn divergence_reports_iteration() {
        let g = GaussianSpec::<f64>::isotropic(&[0.0], 1e6).unwrap();
        let s = NoiseSchedule::ddpm_default();
        let cfg = TrainConfig {
            learning_rate: 1e6,
            ..small_config(50)
        };
        match dsm_train(&g, &s, &cfg) {
            Err(Error::Training { iteration }) => assert!(iteration < 50),
            other => panic!("expected training error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_invalid_config() {
        let g = GaussianSpec::<f64>::standard(1);
        let s = NoiseSchedule::ddpm_default();
        let cfg = TrainConfig {
            batch_size: 0,
            ..small_config(1)
        };
        assert!(dsm_train(&g, &s, &cfg).is_err());
        for bad in [
            TrainConfig { step_exponent: 0.0, ..small_config(1) },
            TrainConfig { time_init_gain: -1.0, ..small_config(1) },
            TrainConfig { ema_decay: Some(1.0), ..small_config(1) },
            TrainConfig { final_learning_rate: Some(f64::NAN), ..small_config(1) },
            TrainConfig { hidden: vec![], ..small_config(1) },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            final_learning_rate: Some(1e-4),
            ..small_config(101)
        };
        assert_eq!(cfg.learning_rate_at(0), 1e-2);
        assert!((cfg.learning_rate_at(100) - 1e-4).abs() < 1e-15);
        assert!((cfg.learning_rate_at(50) - 0.5 * (1e-2 + 1e-4)).abs() < 1e-15);
        assert!((1..=100).all(|i| cfg.learning_rate_at(i) <= cfg.learning_rate_at(i - 1)));
        assert_eq!(small_config(10).learning_rate_at(7), 1e-3);
    }

    #[test]
    fn time_gain_scales_the_time_column_only() {
        let g = GaussianSpec::<f64>::standard(2);
        let s = NoiseSchedule::ddpm_default();
        let base = dsm_train(&g, &s, &small_config(0)).unwrap().net;
        let gained = dsm_train(&g, &s, &TrainConfig { time_init_gain: 3.0, ..small_config(0) }).unwrap().net;
        let (w0, w1) = (&base.layers()[0].weights, &gained.layers()[0].weights);
        for r in 0..w0.nrows() {
            assert_eq!(w1[(r, 0)], w0[(r, 0)]);
            assert_eq!(w1[(r, 1)], w0[(r, 1)]);
            assert_eq!(w1[(r, 2)], 3.0 * w0[(r, 2)]);
        }
    }

    #[test]
    fn ema_and_step_exponent_runs_are_deterministic_and_distinct() {
        let g = GaussianSpec::<f64>::standard(2);
        let s = NoiseSchedule::ddpm_default();
        let cfg = TrainConfig {
            ema_decay: Some(0.9),
            step_exponent: 3.0,
            optimizer: Optimizer::adam(),
            ..small_config(30)
        };
        let a = dsm_train(&g, &s, &cfg).unwrap();
        let b = dsm_train(&g, &s, &cfg).unwrap();
        assert_eq!(a.net, b.net);
        let raw = dsm_train(&g, &s, &TrainConfig { ema_decay: None, ..cfg.clone() }).unwrap();
        assert_eq!(a.losses, raw.losses);
        assert_ne!(a.net, raw.net);
        let uniform = dsm_train(&g, &s, &TrainConfig { step_exponent: 1.0, ..cfg }).unwrap();
        assert_ne!(a.losses, uniform.losses);
    }
}
