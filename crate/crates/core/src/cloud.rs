//! Point clouds: the common container for subgroups of scalar or vector
//! observations.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpcError};

/// A batch of `len()` points in `dim()` dimensions, stored row-major.
///
/// Univariate subgroups are clouds of dimension 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(SpcError::InvalidParameter("dimension must be at least 1".into()));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(SpcError::InvalidParameter(format!(
                "{} coordinates do not divide into points of dimension {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(SpcError::NonFinite);
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let dim = points
            .first()
            .map(|p| p.as_ref().len())
            .ok_or_else(|| SpcError::InsufficientData("empty point list".into()))?;
        let mut coords = Vec::with_capacity(dim * points.len());
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(SpcError::DimensionMismatch { expected: dim, found: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords)
    }

    pub fn univariate(values: Vec<f64>) -> Result<Self> {
        Self::new(1, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Flat coordinate buffer; for a univariate cloud these are the values.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.points() {
            for (acc, v) in m.iter_mut().zip(p) {
                *acc += v;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Apply `f` to every point, producing a new cloud of the same dimension.
    pub fn map_points(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let pts: Vec<Vec<f64>> = self.points().map(&mut f).collect();
        Self::from_points(&pts)
    }
}

pub(crate) fn require_same_shape(groups: &[PointCloud]) -> Result<(usize, usize)> {
    let first = groups
        .first()
        .ok_or_else(|| SpcError::InsufficientData("no subgroups".into()))?;
    let (n, dim) = (first.len(), first.dim());
    for g in groups {
        if g.dim() != dim {
            return Err(SpcError::DimensionMismatch { expected: dim, found: g.dim() });
        }
        if g.len() != n {
            return Err(SpcError::HeterogeneousSubgroups { expected: n, found: g.len() });
        }
    }
    Ok((n, dim))
}
