//! Ideal radial frequency filters and band energies of 2D noise fields.
//!
//! Frequencies are measured in index units: coefficient `(u, v)` of an
//! `H×W` transform sits at radius `√(min(u, H−u)² + min(v, W−v)²)`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterKind {
    LowPass,
    HighPass,
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low_pass" | "low" => Ok(FilterKind::LowPass),
            "high_pass" | "high" => Ok(FilterKind::HighPass),
            _ => Err(Error::param("kind", format!("unknown filter `{s}`"))),
        }
    }
}

/// A single-channel `rows × cols` noise image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseField {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    /// Boost factor the field was drawn with.
    pub gamma: f64,
}

impl NoiseField {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, gamma: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::param("shape", "rows and cols must be positive"));
        }
        if values.len() != rows * cols {
            return Err(Error::param("values", format!("expected {} entries", rows * cols)));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("values", "entries must be finite"));
        }
        Ok(Self {
            rows,
            cols,
            values,
            gamma,
        })
    }

    /// White Gaussian noise with standard deviation `gamma`.
    pub fn white(rows: usize, cols: usize, gamma: f64, rng: &mut RngStream) -> Result<Self> {
        let mut v: Vec<f64> = rng.normal_vec(rows * cols);
        for x in &mut v {
            *x *= gamma;
        }
        Self::new(rows, cols, v, gamma)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            gamma: self.gamma * factor,
            ..*self
        }
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Largest radial frequency present.
    pub fn nyquist_radius(&self) -> f64 {
        let (h, w) = ((self.rows / 2) as f64, (self.cols / 2) as f64);
        (h * h + w * w).sqrt()
    }

    fn radius(&self, u: usize, v: usize) -> f64 {
        let fu = u.min(self.rows - u) as f64;
        let fv = v.min(self.cols - v) as f64;
        (fu * fu + fv * fv).sqrt()
    }
}

fn fft2(rows: usize, cols: usize, data: &mut [Complex<f64>], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(cols), planner.plan_fft_inverse(rows))
    } else {
        (planner.plan_fft_forward(cols), planner.plan_fft_forward(rows))
    };
    for row in data.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            col[r] = data[r * cols + c];
        }
        col_fft.process(&mut col);
        for r in 0..rows {
            data[r * cols + c] = col[r];
        }
    }
}

fn spectrum(field: &NoiseField) -> Vec<Complex<f64>> {
    let mut data: Vec<Complex<f64>> = field.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2(field.rows, field.cols, &mut data, false);
    data
}

/// Ideal radial filter. Low-pass keeps radii `≤ cutoff`; high-pass keeps
/// radii `> cutoff`, except that `cutoff = 0` leaves the field uncut.
pub fn filter_noise(field: &NoiseField, cutoff: f64, kind: FilterKind) -> Result<NoiseField> {
    if !(cutoff >= 0.0) {
        return Err(Error::param("cutoff", "must be non-negative"));
    }
    if kind == FilterKind::HighPass && cutoff == 0.0 {
        return Ok(field.clone());
    }
    let mut data = spectrum(field);
    for u in 0..field.rows {
        for v in 0..field.cols {
            let low = field.radius(u, v) <= cutoff;
            if low != (kind == FilterKind::LowPass) {
                data[u * field.cols + v] = Complex::new(0.0, 0.0);
            }
        }
    }
    fft2(field.rows, field.cols, &mut data, true);
    let scale = 1.0 / (field.rows * field.cols) as f64;
    NoiseField::new(
        field.rows,
        field.cols,
        data.iter().map(|c| c.re * scale).collect(),
        field.gamma,
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandEnergy {
    pub low: f64,
    pub high: f64,
    /// Spatial energy `Σ x²`.
    pub total: f64,
}

impl BandEnergy {
    /// `|low + high − total| / total`.
    pub fn plancherel_error(&self) -> f64 {
        let t = self.total.max(f64::MIN_POSITIVE);
        ((self.low + self.high) - self.total).abs() / t
    }
}

/// Spectral energy at radii `≤ cutoff` and `> cutoff`, normalized so the
/// two bands add up to the spatial energy.
pub fn band_energy(field: &NoiseField, cutoff: f64) -> Result<BandEnergy> {
    if !(cutoff >= 0.0) {
        return Err(Error::param("cutoff", "must be non-negative"));
    }
    let data = spectrum(field);
    let scale = 1.0 / (field.rows * field.cols) as f64;
    let (mut low, mut high) = (0.0, 0.0);
    for u in 0..field.rows {
        for v in 0..field.cols {
            let e = data[u * field.cols + v].norm_sqr() * scale;
            if field.radius(u, v) <= cutoff {
                low += e;
            } else {
                high += e;
            }
        }
    }
    Ok(BandEnergy {
        low,
        high,
        total: field.energy(),
    })
}

/// Number of frequency bins at radius `≤ cutoff` for an `rows × cols` grid.
pub fn low_band_count(rows: usize, cols: usize, cutoff: f64) -> usize {
    let probe = NoiseField {
        rows,
        cols,
        values: Vec::new(),
        gamma: 1.0,
    };
    (0..rows)
        .flat_map(|u| (0..cols).map(move |v| (u, v)))
        .filter(|&(u, v)| probe.radius(u, v) <= cutoff)
        .count()
}
