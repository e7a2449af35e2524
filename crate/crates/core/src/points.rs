use crate::error::{Error, Result};
use crate::Real;

/// Row-major set of `len` points in `dim` dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        if data.len() % dim != 0 {
            return Err(Error::param(
                "data",
                format!("length {} is not a multiple of dim {dim}", data.len()),
            ));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[T]>>(dim: usize, rows: impl IntoIterator<Item = R>) -> Result<Self> {
        let mut data = Vec::new();
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::param("rows", format!("row of length {} in dim {dim}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map_rows(&self, f: impl Fn(&[T], &mut [T])) -> Self {
        let mut data = vec![T::zero(); self.data.len()];
        for (x, y) in self.rows().zip(data.chunks_exact_mut(self.dim)) {
            f(x, y);
        }
        Self {
            dim: self.dim,
            data,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
