//! Small fully connected noise-prediction network.
//!
//! Input is `[x, i/N]`, output is the predicted standardized noise `ε̂`; the
//! score is recovered as `−ε̂ / √(1 − ᾱ_i)`. Batches are stored one sample
//! per column, which for a row-major `n × d` buffer means the matrix views
//! line up with the raw slices.
//!
//! Binary layout (all integers `u32` little-endian, floats `f64` LE):
//!
//! ```text
//! "BNS1" | dim | n_widths | widths[n_widths] | activation
//! per layer: weights (out × in, row-major) | bias (out)
//! ```

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::schedule::NoiseSchedule;
use crate::Real;

pub const MAGIC: &[u8; 4] = b"BNS1";
pub const DEFAULT_HIDDEN: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// `z·σ(z)`.
    Silu,
    Tanh,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "silu" => Ok(Activation::Silu),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(Error::param("activation", format!("unknown activation `{s}`"))),
        }
    }
}

impl Activation {
    fn code(self) -> u32 {
        match self {
            Activation::Silu => 0,
            Activation::Tanh => 1,
        }
    }

    fn from_code(c: u32) -> Result<Self> {
        match c {
            0 => Ok(Activation::Silu),
            1 => Ok(Activation::Tanh),
            _ => Err(Error::Format(format!("unknown activation code {c}"))),
        }
    }

    #[inline]
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Silu => z / (T::one() + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    #[inline]
    fn derivative<T: Real>(self, z: T) -> T {
        match self {
            Activation::Silu => {
                let s = T::one() / (T::one() + (-z).exp());
                s * (T::one() + z * (T::one() - s))
            }
            Activation::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T: Real> {
    /// `out × in`.
    pub weights: DMatrix<T>,
    pub bias: DVector<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpScoreNet<T: Real> {
    dim: usize,
    layers: Vec<Layer<T>>,
    activation: Activation,
}

/// Intermediate values kept from a forward pass for backpropagation.
pub struct ForwardCache<T: Real> {
    /// Inputs to each layer (the first is the network input).
    inputs: Vec<DMatrix<T>>,
    /// Pre-activations of hidden layers.
    pre: Vec<DMatrix<T>>,
    pub output: DMatrix<T>,
}

/// Parameter gradients, one entry per layer.
#[derive(Clone, Debug)]
pub struct Gradients<T: Real> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> MlpScoreNet<T> {
    /// Random initialization with `N(0, 1/fan_in)` weights and zero biases.
    pub fn new(dim: usize, hidden: &[usize], activation: Activation, rng: &mut RngStream) -> Self {
        let mut widths = vec![dim + 1];
        widths.extend_from_slice(hidden);
        widths.push(dim);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let scale = T::one() / T::of_usize(fan_in).sqrt();
                let weights = DMatrix::from_fn(fan_out, fan_in, |_, _| rng.normal::<T>() * scale);
                Layer {
                    weights,
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        Self {
            dim,
            layers,
            activation,
        }
    }

    /// Two hidden layers of width 128 with SiLU.
    pub fn default_for_dim(dim: usize, rng: &mut RngStream) -> Self {
        Self::new(dim, &[DEFAULT_HIDDEN, DEFAULT_HIDDEN], Activation::Silu, rng)
    }

    pub fn from_layers(dim: usize, layers: Vec<Layer<T>>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::param("layers", "network needs at least one layer"));
        }
        if layers[0].weights.ncols() != dim + 1 {
            return Err(Error::param("layers", "first layer must take dim + 1 inputs"));
        }
        if layers.last().unwrap().weights.nrows() != dim {
            return Err(Error::param("layers", "last layer must produce dim outputs"));
        }
        for w in layers.windows(2) {
            if w[0].weights.nrows() != w[1].weights.ncols() {
                return Err(Error::param("layers", "consecutive layer widths disagree"));
            }
        }
        if layers.iter().any(|l| l.bias.len() != l.weights.nrows()) {
            return Err(Error::param("layers", "bias length differs from layer width"));
        }
        if layers
            .iter()
            .any(|l| l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()))
        {
            return Err(Error::param("layers", "non-finite parameter"));
        }
        Ok(Self {
            dim,
            layers,
            activation,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].weights.ncols()];
        w.extend(self.layers.iter().map(|l| l.weights.nrows()));
        w
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Sets the output layer to zero, so the network predicts `ε̂ = 0`.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().unwrap();
        last.weights.fill(T::zero());
        last.bias.fill(T::zero());
    }

    /// Forward pass on a `(dim + 1) × n` input matrix.
    pub fn forward_cached(&self, input: DMatrix<T>) -> ForwardCache<T> {
        let n = input.ncols();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut a = input;
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = DMatrix::zeros(layer.weights.nrows(), n);
            z.gemm(T::one(), &layer.weights, &a, T::zero());
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            inputs.push(a);
            if k == last {
                return ForwardCache {
                    inputs,
                    pre,
                    output: z,
                };
            }
            let act = self.activation;
            a = z.map(|v| act.apply(v));
            pre.push(z);
        }
        unreachable!("loop returns at the last layer")
    }

    pub fn forward(&self, input: DMatrix<T>) -> DMatrix<T> {
        let n = input.ncols();
        let mut a = input;
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = DMatrix::zeros(layer.weights.nrows(), n);
            z.gemm(T::one(), &layer.weights, &a, T::zero());
            let act = self.activation;
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
                if k != last {
                    col.apply(|v| *v = act.apply(*v));
                }
            }
            a = z;
        }
        a
    }

    /// Backpropagates `d_output` (gradient of the loss w.r.t. the output).
    pub fn backward(&self, cache: &ForwardCache<T>, d_output: DMatrix<T>) -> Gradients<T> {
        let n_layers = self.layers.len();
        let mut grads: Vec<Option<Layer<T>>> = vec![None; n_layers];
        let mut delta = d_output;
        for k in (0..n_layers).rev() {
            let a_in = &cache.inputs[k];
            let mut dw = DMatrix::zeros(delta.nrows(), a_in.nrows());
            dw.gemm(T::one(), &delta, &a_in.transpose(), T::zero());
            let db = delta.column_sum();
            if k > 0 {
                let w = &self.layers[k].weights;
                let mut back = DMatrix::zeros(w.ncols(), delta.ncols());
                back.gemm(T::one(), &w.transpose(), &delta, T::zero());
                let act = self.activation;
                back.zip_apply(&cache.pre[k - 1], |b, z| *b *= act.derivative(z));
                delta = back;
            }
            grads[k] = Some(Layer {
                weights: dw,
                bias: db,
            });
        }
        Gradients {
            layers: grads.into_iter().map(|g| g.unwrap()).collect(),
        }
    }

    /// Packs a row-major batch `xs` (`n × dim`) with time input `t`.
    pub fn pack_input(&self, xs: &[T], t: T) -> DMatrix<T> {
        let d = self.dim;
        let n = xs.len() / d;
        let mut m = DMatrix::zeros(d + 1, n);
        for (j, x) in xs.chunks_exact(d).enumerate() {
            for k in 0..d {
                m[(k, j)] = x[k];
            }
            m[(d, j)] = t;
        }
        m
    }

    /// Predicted noise for a row-major batch at grid index `i`.
    pub fn predict_noise(&self, schedule: &NoiseSchedule<T>, i: usize, xs: &[T]) -> Result<Vec<T>> {
        self.check_batch(xs)?;
        schedule.check_index(i)?;
        let t = T::of_usize(i) / T::of_usize(schedule.n_steps());
        let out = self.forward(self.pack_input(xs, t));
        Ok(out.as_slice().to_vec())
    }

    /// Score estimate `−ε̂/√(1 − ᾱ_i)` for a row-major batch; `i ≥ 1`.
    pub fn score_batch(
        &self,
        schedule: &NoiseSchedule<T>,
        i: usize,
        xs: &[T],
        out: &mut [T],
    ) -> Result<()> {
        self.check_batch(xs)?;
        schedule.check_step_index(i)?;
        let t = T::of_usize(i) / T::of_usize(schedule.n_steps());
        let eps = self.forward(self.pack_input(xs, t));
        let scale = -T::one() / (T::one() - schedule.alpha_bar(i)).sqrt();
        for (o, e) in out.iter_mut().zip(eps.as_slice()) {
            *o = *e * scale;
        }
        Ok(())
    }

    pub fn score(&self, schedule: &NoiseSchedule<T>, i: usize, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim {
            return Err(Error::param(
                "x",
                format!("dimension {} does not match network input {}", x.len(), self.dim),
            ));
        }
        let mut out = vec![T::zero(); self.dim];
        self.score_batch(schedule, i, x, &mut out)?;
        Ok(out)
    }

    fn check_batch(&self, xs: &[T]) -> Result<()> {
        if xs.len() % self.dim != 0 {
            return Err(Error::param(
                "x",
                format!("batch length {} is not a multiple of {}", xs.len(), self.dim),
            ));
        }
        Ok(())
    }

    /// In-place `θ ← θ − lr·g`.
    pub fn apply_update(&mut self, grads: &Gradients<T>, lr: T) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            l.weights -= &g.weights * lr;
            l.bias -= &g.bias * lr;
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        let widths = self.widths();
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(widths.len() as u32).to_le_bytes())?;
        for width in &widths {
            w.write_all(&(*width as u32).to_le_bytes())?;
        }
        w.write_all(&self.activation.code().to_le_bytes())?;
        for l in &self.layers {
            for r in 0..l.weights.nrows() {
                for c in 0..l.weights.ncols() {
                    w.write_all(&l.weights[(r, c)].as_f64().to_le_bytes())?;
                }
            }
            for b in l.bias.iter() {
                w.write_all(&b.as_f64().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let read_u32 = |r: &mut R| -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let dim = read_u32(&mut r)? as usize;
        let n_widths = read_u32(&mut r)? as usize;
        if n_widths < 2 || n_widths > 64 {
            return Err(Error::Format(format!("implausible layer count {n_widths}")));
        }
        let mut widths = Vec::with_capacity(n_widths);
        for _ in 0..n_widths {
            widths.push(read_u32(&mut r)? as usize);
        }
        let activation = Activation::from_code(read_u32(&mut r)?)?;
        let read_f64 = |r: &mut R| -> Result<T> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(T::of(f64::from_le_bytes(b)))
        };
        let mut layers = Vec::with_capacity(n_widths - 1);
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut weights = DMatrix::zeros(fan_out, fan_in);
            for rr in 0..fan_out {
                for c in 0..fan_in {
                    weights[(rr, c)] = read_f64(&mut r)?;
                }
            }
            let mut bias = DVector::zeros(fan_out);
            for b in bias.iter_mut() {
                *b = read_f64(&mut r)?;
            }
            layers.push(Layer { weights, bias });
        }
        Self::from_layers(dim, layers, activation).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> MlpScoreNet<f64> {
        MlpScoreNet::new(2, &[16, 16], Activation::Silu, &mut RngStream::new(3, 0))
    }

    #[test]
    fn forward_is_deterministic() {
        let n = net();
        let s = NoiseSchedule::ddpm_default();
        let x = [0.3, -0.7];
        assert_eq!(n.score(&s, 400, &x).unwrap(), n.score(&s, 400, &x).unwrap());
    }

    #[test]
    fn zero_output_layer_gives_zero_score() {
        let mut n = net();
        n.zero_output_layer();
        let s = NoiseSchedule::ddpm_default();
        assert_eq!(n.score(&s, 10, &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn cached_and_plain_forward_agree() {
        let n = net();
        let input = n.pack_input(&[0.1, 0.2, -0.3, 0.4, 1.0, -1.0], 0.25);
        let a = n.forward(input.clone());
        let b = n.forward_cached(input).output;
        assert_eq!(a, b);
    }

    #[test]
    fn batch_and_single_scores_agree() {
        let n = net();
        let s = NoiseSchedule::ddpm_default();
        let xs = [0.1, 0.2, -0.3, 0.4, 1.0, -1.0];
        let mut out = vec![0.0; 6];
        n.score_batch(&s, 77, &xs, &mut out).unwrap();
        for j in 0..3 {
            let single = n.score(&s, 77, &xs[2 * j..2 * j + 2]).unwrap();
            assert!((single[0] - out[2 * j]).abs() < 1e-12);
            assert!((single[1] - out[2 * j + 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_and_bad_index() {
        let n = net();
        let s = NoiseSchedule::ddpm_default();
        assert!(n.score(&s, 10, &[1.0]).is_err());
        assert!(n.score(&s, 0, &[1.0, 1.0]).is_err());
        assert!(n.score(&s, 1001, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn serialization_layout() {
        let n = net();
        let bytes = n.to_bytes();
        assert_eq!(&bytes[..4], b"BNS1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
        let widths: Vec<u32> = (0..4)
            .map(|k| u32::from_le_bytes(bytes[12 + 4 * k..16 + 4 * k].try_into().unwrap()))
            .collect();
        assert_eq!(widths, vec![3, 16, 16, 2]);
        // First weight follows the activation code, row-major.
        let w00 = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
        let w01 = f64::from_le_bytes(bytes[40..48].try_into().unwrap());
        assert_eq!(w00, n.layers()[0].weights[(0, 0)]);
        assert_eq!(w01, n.layers()[0].weights[(0, 1)]);
        assert_eq!(bytes.len(), 32 + 8 * n.n_params());
        assert_eq!(MlpScoreNet::<f64>::from_bytes(&bytes).unwrap(), n);
    }

    #[test]
    fn rejects_corrupt_files() {
        let mut bytes = net().to_bytes();
        bytes[0] = b'X';
        assert!(MlpScoreNet::<f64>::from_bytes(&bytes).is_err());
        let bytes = net().to_bytes();
        assert!(MlpScoreNet::<f64>::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
