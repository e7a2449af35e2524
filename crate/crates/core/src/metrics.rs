//! Batch statistics: moments, neighbourhood density scores, the circles
//! report and a binned total-variation distance.
//!
//! All statistics are accumulated in `f64` whatever the sample precision.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::points::PointCloud;
use crate::toydata::{CirclesGeometry, Ring};
use crate::Real;

/// Distance floor used when a neighbourhood is fully coincident.
pub const LOF_DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: DVector<f64>,
    /// Unbiased sample covariance.
    pub cov: DMatrix<f64>,
    /// Standard error of each mean component.
    pub mean_stderr: DVector<f64>,
    /// Delta-method standard error of each diagonal covariance entry.
    pub var_stderr: DVector<f64>,
}

pub fn empirical_moments<T: Real>(points: &PointCloud<T>) -> Result<Moments> {
    let n = points.len();
    if n < 2 {
        return Err(Error::param("batch", "need at least 2 points"));
    }
    let d = points.dim();
    let nf = n as f64;
    let mut mean = DVector::<f64>::zeros(d);
    for p in points.rows() {
        for k in 0..d {
            mean[k] += p[k].as_f64();
        }
    }
    mean /= nf;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut m4 = DVector::<f64>::zeros(d);
    let mut c = vec![0.0; d];
    for p in points.rows() {
        for k in 0..d {
            c[k] = p[k].as_f64() - mean[k];
        }
        for a in 0..d {
            m4[a] += c[a].powi(4);
            for b in a..d {
                cov[(a, b)] += c[a] * c[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / (nf - 1.0);
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    m4 /= nf;
    let mean_stderr = DVector::from_fn(d, |k, _| (cov[(k, k)] / nf).sqrt());
    let var_stderr = DVector::from_fn(d, |k, _| {
        let m2 = cov[(k, k)] * (nf - 1.0) / nf;
        ((m4[k] - m2 * m2).max(0.0) / nf).sqrt()
    });
    Ok(Moments {
        n,
        mean,
        cov,
        mean_stderr,
        var_stderr,
    })
}

/// Per-point values with summary statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityStats {
    pub k: usize,
    pub values: Vec<f64>,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
}

impl DensityStats {
    pub fn from_values(k: usize, values: Vec<f64>) -> Self {
        let mean = if values.is_empty() {
            f64::NAN
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        Self {
            k,
            p50: quantile_sorted(&sorted, 0.5),
            p90: quantile_sorted(&sorted, 0.9),
            mean,
            values,
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn dist<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).as_f64().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// The `k` nearest reference points to `q` as `(distance, index)`, sorted
/// ascending with ties broken by index; `skip` excludes one reference index.
fn knn<T: Real>(q: &[T], reference: &PointCloud<T>, k: usize, skip: Option<usize>) -> Vec<(f64, usize)> {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (j, r) in reference.rows().enumerate() {
        if Some(j) == skip {
            continue;
        }
        let dj = dist(q, r);
        if best.len() == k && dj >= best[k - 1].0 {
            continue;
        }
        let pos = best.partition_point(|&(d, _)| d <= dj);
        best.insert(pos, (dj, j));
        best.truncate(k);
    }
    best
}

fn check_knn_args<T: Real>(batch: &PointCloud<T>, reference: &PointCloud<T>, k: usize, self_ref: bool) -> Result<()> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    let usable = reference.len() - usize::from(self_ref);
    if k >= reference.len() || k > usable {
        return Err(Error::param(
            "k",
            format!("k = {k} needs more than {} reference points", reference.len()),
        ));
    }
    if batch.dim() != reference.dim() {
        return Err(Error::param("batch", "dimension differs from the reference"));
    }
    Ok(())
}

/// Mean distance from each batch point to its `k` nearest reference points.
pub fn avg_knn<T: Real>(batch: &PointCloud<T>, reference: &PointCloud<T>, k: usize) -> Result<DensityStats> {
    check_knn_args(batch, reference, k, false)?;
    Ok(avg_knn_impl(batch, reference, k, false))
}

/// [`avg_knn`] of a point set against itself, excluding each point.
pub fn avg_knn_self<T: Real>(points: &PointCloud<T>, k: usize) -> Result<DensityStats> {
    check_knn_args(points, points, k, true)?;
    Ok(avg_knn_impl(points, points, k, true))
}

fn avg_knn_impl<T: Real>(batch: &PointCloud<T>, reference: &PointCloud<T>, k: usize, self_ref: bool) -> DensityStats {
    let values = (0..batch.len())
        .into_par_iter()
        .map(|i| {
            let nn = knn(batch.row(i), reference, k, self_ref.then_some(i));
            nn.iter().map(|p| p.0).sum::<f64>() / k as f64
        })
        .collect();
    DensityStats::from_values(k, values)
}

/// Local outlier factor of batch points relative to a reference set
/// (reference densities computed with each reference point excluded from
/// its own neighbourhood).
pub fn lof<T: Real>(batch: &PointCloud<T>, reference: &PointCloud<T>, k: usize) -> Result<DensityStats> {
    check_knn_args(batch, reference, k, true)?;
    Ok(lof_impl(batch, reference, k, false))
}

/// LOF of a point set against itself.
pub fn lof_self<T: Real>(points: &PointCloud<T>, k: usize) -> Result<DensityStats> {
    check_knn_args(points, points, k, true)?;
    Ok(lof_impl(points, points, k, true))
}

fn lof_impl<T: Real>(batch: &PointCloud<T>, reference: &PointCloud<T>, k: usize, self_ref: bool) -> DensityStats {
    let ref_nn: Vec<Vec<(f64, usize)>> = (0..reference.len())
        .into_par_iter()
        .map(|j| knn(reference.row(j), reference, k, Some(j)))
        .collect();
    let k_dist: Vec<f64> = ref_nn.iter().map(|nn| nn[k - 1].0).collect();
    let lrd = |nn: &[(f64, usize)]| {
        let reach = nn.iter().map(|&(d, o)| d.max(k_dist[o])).sum::<f64>() / k as f64;
        1.0 / reach.max(LOF_DISTANCE_FLOOR)
    };
    let ref_lrd: Vec<f64> = ref_nn.iter().map(|nn| lrd(nn)).collect();
    let values = (0..batch.len())
        .into_par_iter()
        .map(|i| {
            let nn = if self_ref {
                ref_nn[i].clone()
            } else {
                knn(batch.row(i), reference, k, None)
            };
            let own = lrd(&nn);
            nn.iter().map(|&(_, o)| ref_lrd[o]).sum::<f64>() / (k as f64 * own)
        })
        .collect();
    DensityStats::from_values(k, values)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CirclesReport {
    pub n: usize,
    pub minority_fraction: f64,
    pub majority_fraction: f64,
    pub off_manifold_fraction: f64,
}

/// Assigns a 2D point to the nearer ring when its radial distance to that
/// ring is within `eps_manifold`.
pub fn classify_point(p: [f64; 2], geometry: &CirclesGeometry) -> Option<Ring> {
    let r = p[0].hypot(p[1]);
    let dm = (r - geometry.radius_major).abs();
    let dn = (r - geometry.radius_minor).abs();
    let (ring, d) = if dn < dm { (Ring::Minor, dn) } else { (Ring::Major, dm) };
    (d <= geometry.eps_manifold).then_some(ring)
}

pub fn circles_report<T: Real>(points: &PointCloud<T>, geometry: &CirclesGeometry) -> Result<CirclesReport> {
    if points.dim() != 2 {
        return Err(Error::param("batch", "circles report needs 2D points"));
    }
    if points.is_empty() {
        return Err(Error::param("batch", "must not be empty"));
    }
    let (mut minor, mut major) = (0usize, 0usize);
    for p in points.rows() {
        match classify_point([p[0].as_f64(), p[1].as_f64()], geometry) {
            Some(Ring::Minor) => minor += 1,
            Some(Ring::Major) => major += 1,
            None => {}
        }
    }
    let n = points.len();
    let nf = n as f64;
    Ok(CirclesReport {
        n,
        minority_fraction: minor as f64 / nf,
        majority_fraction: major as f64 / nf,
        off_manifold_fraction: (n - minor - major) as f64 / nf,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistogramTv {
    pub tv: f64,
    /// Smallest fraction of either batch that fell inside the bounds.
    pub coverage: f64,
    /// Coverage fell below 99%.
    pub coverage_warning: bool,
}

/// Half the L1 distance between normalized histograms on a regular grid
/// over the box `lo..hi`; points outside the box share one overflow bin.
pub fn histogram_tv<T: Real>(
    a: &PointCloud<T>,
    b: &PointCloud<T>,
    bins_per_axis: usize,
    lo: &[f64],
    hi: &[f64],
) -> Result<HistogramTv> {
    if bins_per_axis == 0 {
        return Err(Error::param("bins_per_axis", "must be at least 1"));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("batch", "both batches must be non-empty"));
    }
    let d = a.dim();
    if b.dim() != d || lo.len() != d || hi.len() != d {
        return Err(Error::param("bounds", "dimensions disagree"));
    }
    if lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
        return Err(Error::param("bounds", "need lo < hi on every axis"));
    }
    let total = bins_per_axis
        .checked_pow(d as u32)
        .filter(|&t| t <= 1 << 24)
        .ok_or_else(|| Error::param("bins_per_axis", "too many bins"))?;
    let overflow = total;
    let bin = |p: &[T]| -> usize {
        let mut idx = 0usize;
        for k in 0..d {
            let v = p[k].as_f64();
            if !(v >= lo[k] && v < hi[k]) {
                return overflow;
            }
            let c = (((v - lo[k]) / (hi[k] - lo[k])) * bins_per_axis as f64) as usize;
            idx = idx * bins_per_axis + c.min(bins_per_axis - 1);
        }
        idx
    };
    let hist = |pc: &PointCloud<T>| {
        let mut h = vec![0u64; total + 1];
        for p in pc.rows() {
            h[bin(p)] += 1;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let tv = 0.5
        * ha.iter()
            .zip(&hb)
            .map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs())
            .sum::<f64>();
    let coverage = (1.0 - ha[overflow] as f64 / na).min(1.0 - hb[overflow] as f64 / nb);
    Ok(HistogramTv {
        tv: tv.min(1.0),
        coverage,
        coverage_warning: coverage < 0.99,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn cloud(d: usize, v: Vec<f64>) -> PointCloud<f64> {
        PointCloud::new(d, v).unwrap()
    }

    #[test]
    fn moments_of_identical_points() {
        let m = empirical_moments(&cloud(2, [1.0, 2.0].repeat(10))).unwrap();
        assert_eq!(m.cov, DMatrix::zeros(2, 2));
        assert_eq!(m.mean, DVector::from_vec(vec![1.0, 2.0]));
        assert!(empirical_moments(&cloud(1, vec![1.0])).is_err());
    }

    #[test]
    fn moments_of_standard_normal_draws() {
        let mut r = RngStream::new(3, 0);
        let n = 100_000;
        let m = empirical_moments(&cloud(1, r.normal_vec(n))).unwrap();
        assert!(m.mean[0].abs() < 3.0 / (n as f64).sqrt());
        assert!((m.cov[(0, 0)] - 1.0).abs() < 0.03);
        assert!((m.var_stderr[0] - (2.0 / n as f64).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn moments_are_affine_equivariant() {
        let mut r = RngStream::new(5, 0);
        let x = cloud(2, r.normal_vec(2000));
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, -1.0, 0.3]);
        let bv = [0.7, -3.0];
        let y = x.map_rows(|p, o| {
            o[0] = a[(0, 0)] * p[0] + a[(0, 1)] * p[1] + bv[0];
            o[1] = a[(1, 0)] * p[0] + a[(1, 1)] * p[1] + bv[1];
        });
        let (mx, my) = (empirical_moments(&x).unwrap(), empirical_moments(&y).unwrap());
        let mean = &a * &mx.mean + DVector::from_row_slice(&bv);
        let cov = &a * &mx.cov * a.transpose();
        assert!((my.mean - mean).amax() < 1e-10);
        assert!((my.cov - cov).amax() < 1e-10);
    }

    #[test]
    fn avg_knn_fixtures() {
        let reference = cloud(2, [0.3, 0.4].repeat(6));
        let q = cloud(2, vec![0.3, 0.4]);
        assert_eq!(avg_knn(&q, &reference, 5).unwrap().values, vec![0.0]);
        let two = cloud(1, vec![0.0, 1.0]);
        assert_eq!(avg_knn_self(&two, 1).unwrap().values, vec![1.0, 1.0]);
        assert!(avg_knn(&q, &two, 2).is_err());
    }

    fn grid(n: usize, h: f64) -> PointCloud<f64> {
        let mut v = Vec::new();
        for a in 0..n {
            for b in 0..n {
                v.extend([a as f64 * h, b as f64 * h]);
            }
        }
        cloud(2, v)
    }

    #[test]
    fn grid_spacing_from_four_neighbours() {
        let g = grid(100, 0.25);
        let s = avg_knn_self(&g, 4).unwrap();
        assert_eq!(s.values[50 * 100 + 50], 0.25);
    }

    #[test]
    fn lof_coincident_points_is_one() {
        let pts = cloud(2, [1.0, 1.0].repeat(30));
        assert!(lof_self(&pts, 20).unwrap().values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn lof_interior_grid_near_one_and_outlier_large() {
        let g = grid(30, 1.0);
        let s = lof_self(&g, 8).unwrap();
        for a in 5..25 {
            for b in 5..25 {
                let v = s.values[a * 30 + b];
                assert!((0.9..=1.1).contains(&v), "{v}");
            }
        }
        let far = cloud(2, vec![100.0, 100.0]);
        assert!(lof(&far, &g, 20).unwrap().values[0] > 1.5);
    }

    #[test]
    fn knn_metrics_are_rigid_motion_invariant() {
        let mut r = RngStream::new(8, 0);
        let pts = cloud(2, r.normal_vec(400));
        let (c, s) = (0.6f64.cos(), 0.6f64.sin());
        let moved = pts.map_rows(|p, o| {
            o[0] = c * p[0] - s * p[1] + 3.0;
            o[1] = s * p[0] + c * p[1] - 1.0;
        });
        let a = avg_knn_self(&pts, 5).unwrap().values;
        let b = avg_knn_self(&moved, 5).unwrap().values;
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
        let a = lof_self(&pts, 20).unwrap().values;
        let b = lof_self(&moved, 20).unwrap().values;
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
    }

    #[test]
    fn circles_report_fractions() {
        let geo = crate::toydata::CirclesSpec::default().geometry();
        let on_minor = cloud(2, vec![1.0, 0.0, 0.0, -1.0, 0.6, 0.8]);
        let r = circles_report(&on_minor, &geo).unwrap();
        assert_eq!(r.minority_fraction, 1.0);
        let mixed = cloud(2, vec![1.0, 0.0, 0.5, 0.0, 0.75, 0.0, 0.0, 0.0]);
        let r = circles_report(&mixed, &geo).unwrap();
        assert_eq!((r.minority_fraction, r.majority_fraction, r.off_manifold_fraction), (0.25, 0.25, 0.5));
    }

    #[test]
    fn histogram_tv_extremes() {
        let a = cloud(2, vec![0.1, 0.1, 0.2, 0.3, -0.5, 0.9]);
        let lo = [-1.0, -1.0];
        let hi = [1.0, 1.0];
        assert_eq!(histogram_tv(&a, &a, 10, &lo, &hi).unwrap().tv, 0.0);
        let b = cloud(2, vec![0.9, -0.9, 0.95, -0.95]);
        assert_eq!(histogram_tv(&a, &b, 10, &lo, &hi).unwrap().tv, 1.0);
        assert!(histogram_tv(&a, &b, 0, &lo, &hi).is_err());
        let out = cloud(2, vec![5.0, 5.0]);
        assert!(histogram_tv(&a, &out, 10, &lo, &hi).unwrap().coverage_warning);
    }

    #[test]
    fn histogram_tv_of_two_normal_batches_is_small() {
        let mut r1 = RngStream::new(1, 0);
        let mut r2 = RngStream::new(2, 0);
        // Sampling noise alone gives TV ≈ Σ√p / √(πn) ≈ 0.028 here.
        let a = cloud(2, r1.normal_vec(800_000));
        let b = cloud(2, r2.normal_vec(800_000));
        let tv = histogram_tv(&a, &b, 50, &[-4.0, -4.0], &[4.0, 4.0]).unwrap().tv;
        assert!(tv < 0.035, "{tv}");
    }
}
