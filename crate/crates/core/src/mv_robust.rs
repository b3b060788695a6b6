//! Depth-trimmed mean vectors, depth-winsorized dispersion matrices and the
//! quadratic-form statistics built on them (τ², ψ² and Hotelling's T²).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cloud::PointCloud;
use crate::depth::{CutValue, DepthKind, depths_within};
use crate::error::{Result, SpcError};

/// Reciprocal condition number below which a dispersion matrix is treated
/// as singular.
pub const SINGULAR_RCOND: f64 = 1e-12;

/// Symmetric positive semi-definite `p × p` dispersion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionMatrix(DMatrix<f64>);

impl DispersionMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(SpcError::InvalidParameter("dispersion matrix must be square".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(SpcError::NonFinite);
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(SpcError::InvalidParameter("dispersion matrix must be square".into()));
        }
        Self::from_matrix(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
    }

    pub fn identity(p: usize) -> Self {
        Self(DMatrix::identity(p, p))
    }

    pub fn zeros(p: usize) -> Self {
        Self(DMatrix::zeros(p, p))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.0.row(i).iter().copied().collect()).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(&self.0 * factor)
    }

    /// Entrywise average of equally sized matrices.
    pub fn average(ms: &[DispersionMatrix]) -> Result<Self> {
        let first = ms
            .first()
            .ok_or_else(|| SpcError::InsufficientData("no matrices to average".into()))?;
        let mut acc = DMatrix::zeros(first.dim(), first.dim());
        for m in ms {
            if m.dim() != first.dim() {
                return Err(SpcError::DimensionMismatch { expected: first.dim(), found: m.dim() });
            }
            acc += &m.0;
        }
        Ok(Self(acc / ms.len() as f64))
    }

    /// `λ_min / λ_max` of the symmetric part; 0 when `λ_max ≤ 0`.
    pub fn reciprocal_condition(&self) -> f64 {
        let eig = self.0.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if max > 0.0 { (min / max).max(0.0) } else { 0.0 }
    }
}

impl Serialize for DispersionMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DispersionMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Self::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Sample covariance with divisor `n − 1`.
pub fn sample_covariance(cloud: &PointCloud) -> Result<DispersionMatrix> {
    let n = cloud.len();
    if n < 2 {
        return Err(SpcError::InsufficientData(format!("covariance needs 2 points, got {n}")));
    }
    let p = cloud.dim();
    let m = cloud.mean();
    let mut s = DMatrix::zeros(p, p);
    for pt in cloud.points() {
        let d = DVector::from_iterator(p, pt.iter().zip(&m).map(|(a, b)| a - b));
        s += &d * d.transpose();
    }
    Ok(DispersionMatrix(s / (n as f64 - 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimmedMeanMV {
    pub mean: Vec<f64>,
    pub retained_count: usize,
    pub trimmed_indices: Vec<usize>,
}

/// Location/dispersion pair for one subgroup.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustSummary {
    pub location: TrimmedMeanMV,
    pub dispersion: DispersionMatrix,
}

/// Trim and winsorize a subgroup given precomputed depths.
///
/// Points with depth strictly above `cut` are retained. Every trimmed point
/// is replaced, for the dispersion, by the retained point of minimum depth
/// (the first such point on ties).
pub fn summarize_with_depths(
    subgroup: &PointCloud,
    depths: &[f64],
    cut: CutValue,
) -> Result<RobustSummary> {
    let n = subgroup.len();
    if depths.len() != n {
        return Err(SpcError::DimensionMismatch { expected: n, found: depths.len() });
    }
    if n < 2 {
        return Err(SpcError::InsufficientData(format!("subgroup of {n} points")));
    }
    let c = cut.get();
    let mut substitute: Option<usize> = None;
    let mut trimmed = Vec::new();
    for (i, &d) in depths.iter().enumerate() {
        if d > c {
            if substitute.is_none_or(|s| d < depths[s]) {
                substitute = Some(i);
            }
        } else {
            trimmed.push(i);
        }
    }
    let sub = substitute.ok_or(SpcError::AllTrimmed { cut: c })?;
    let p = subgroup.dim();
    let retained_count = n - trimmed.len();
    let mut mean = vec![0.0; p];
    for (i, pt) in subgroup.points().enumerate() {
        if depths[i] > c {
            mean.iter_mut().zip(pt).for_each(|(m, v)| *m += v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= retained_count as f64);

    let mut winsorized = subgroup.clone();
    let replacement = subgroup.point(sub).to_vec();
    for &i in &trimmed {
        winsorized.point_mut(i).copy_from_slice(&replacement);
    }
    Ok(RobustSummary {
        location: TrimmedMeanMV { mean, retained_count, trimmed_indices: trimmed },
        dispersion: sample_covariance(&winsorized)?,
    })
}

pub fn summarize(subgroup: &PointCloud, kind: DepthKind, cut: CutValue) -> Result<RobustSummary> {
    let depths = depths_within(kind, subgroup)?;
    summarize_with_depths(subgroup, &depths, cut)
}

pub fn mv_trimmed_mean(
    subgroup: &PointCloud,
    kind: DepthKind,
    cut: CutValue,
) -> Result<TrimmedMeanMV> {
    Ok(summarize(subgroup, kind, cut)?.location)
}

pub fn mv_winsorized_dispersion(
    subgroup: &PointCloud,
    kind: DepthKind,
    cut: CutValue,
) -> Result<DispersionMatrix> {
    Ok(summarize(subgroup, kind, cut)?.dispersion)
}

/// Per-subgroup location and dispersion estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum MvEstimator {
    /// Ordinary mean vector and sample covariance.
    Classical,
    DepthTrimmed { depth: DepthKind, cut: CutValue },
}

impl MvEstimator {
    pub fn summarize(&self, subgroup: &PointCloud) -> Result<(Vec<f64>, DispersionMatrix)> {
        match *self {
            MvEstimator::Classical => Ok((subgroup.mean(), sample_covariance(subgroup)?)),
            MvEstimator::DepthTrimmed { depth, cut } => {
                let s = summarize(subgroup, depth, cut)?;
                Ok((s.location.mean, s.dispersion))
            }
        }
    }

    pub fn location(&self, subgroup: &PointCloud) -> Result<Vec<f64>> {
        match *self {
            MvEstimator::Classical => Ok(subgroup.mean()),
            MvEstimator::DepthTrimmed { depth, cut } => {
                Ok(mv_trimmed_mean(subgroup, depth, cut)?.mean)
            }
        }
    }
}

/// `(x − μ)ᵀ S⁻¹ (x − μ)` with a condition check on `S`.
pub fn quadratic_form(x: &[f64], mu: &[f64], s: &DispersionMatrix) -> Result<f64> {
    let p = s.dim();
    if x.len() != p {
        return Err(SpcError::DimensionMismatch { expected: p, found: x.len() });
    }
    if mu.len() != p {
        return Err(SpcError::DimensionMismatch { expected: p, found: mu.len() });
    }
    let rcond = s.reciprocal_condition();
    if rcond < SINGULAR_RCOND {
        return Err(SpcError::SingularDispersion { rcond });
    }
    let chol = s
        .0
        .clone()
        .cholesky()
        .ok_or(SpcError::SingularDispersion { rcond })?;
    let d = DVector::from_iterator(p, x.iter().zip(mu).map(|(a, b)| a - b));
    let w = chol.solve(&d);
    Ok(d.dot(&w).max(0.0))
}

pub fn tau_squared(xbar_t: &[f64], mu: &[f64], s_w: &DispersionMatrix) -> Result<f64> {
    quadratic_form(xbar_t, mu, s_w)
}

pub fn psi_squared(z_t: &[f64], mu_z: &[f64], s_zw: &DispersionMatrix) -> Result<f64> {
    quadratic_form(z_t, mu_z, s_zw)
}

pub fn hotelling_t2(xbar: &[f64], mu: &[f64], s: &DispersionMatrix) -> Result<f64> {
    quadratic_form(xbar, mu, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cut(v: f64) -> CutValue {
        CutValue::new(v).unwrap()
    }

    fn sample() -> PointCloud {
        PointCloud::from_points(&[
            [0.1, 0.2],
            [-0.4, 0.3],
            [0.8, -0.5],
            [0.0, 1.1],
            [-1.0, -0.9],
            [0.5, 0.4],
            [4.0, 5.0],
        ])
        .unwrap()
    }

    #[test]
    fn no_trimming_gives_classical_estimates() {
        let g = sample();
        let s = summarize(&g, DepthKind::Spatial, cut(0.0)).unwrap();
        assert!(s.location.trimmed_indices.is_empty());
        assert_eq!(s.location.retained_count, 7);
        let m = g.mean();
        for (a, b) in s.location.mean.iter().zip(&m) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(s.dispersion, sample_covariance(&g).unwrap());
    }

    #[test]
    fn everything_trimmed() {
        let g = sample();
        let depths = depths_within(DepthKind::Spatial, &g).unwrap();
        let max = depths.iter().cloned().fold(0.0, f64::max);
        assert!(matches!(
            mv_trimmed_mean(&g, DepthKind::Spatial, cut(max)),
            Err(SpcError::AllTrimmed { .. })
        ));
    }

    #[test]
    fn identical_points_have_zero_dispersion() {
        let g = PointCloud::from_points(&[[1.0, 2.0]; 6]).unwrap();
        let d = mv_winsorized_dispersion(&g, DepthKind::Oja, cut(0.5)).unwrap();
        assert_eq!(d, DispersionMatrix::zeros(2));
    }

    #[test]
    fn winsorization_substitutes_least_deep_retained_point() {
        let g = sample();
        let depths = [0.9, 0.8, 0.3, 0.7, 0.2, 0.6, 0.1];
        let s = summarize_with_depths(&g, &depths, cut(0.25)).unwrap();
        assert_eq!(s.location.trimmed_indices, vec![4, 6]);
        let mut manual: Vec<Vec<f64>> = g.points().map(<[f64]>::to_vec).collect();
        manual[4] = g.point(2).to_vec();
        manual[6] = g.point(2).to_vec();
        let expected = sample_covariance(&PointCloud::from_points(&manual).unwrap()).unwrap();
        assert_eq!(s.dispersion, expected);
        let kept = [0usize, 1, 2, 3, 5];
        for k in 0..2 {
            let m = kept.iter().map(|&i| g.point(i)[k]).sum::<f64>() / 5.0;
            assert!((s.location.mean[k] - m).abs() < 1e-15);
        }
    }

    #[test]
    fn trimmed_point_position_is_irrelevant_to_the_mean() {
        let mut g = sample();
        let depths = [0.9, 0.8, 0.3, 0.7, 0.2, 0.6, 0.1];
        let before = summarize_with_depths(&g, &depths, cut(0.25)).unwrap();
        g.point_mut(6).copy_from_slice(&[1e9, -1e9]);
        let after = summarize_with_depths(&g, &depths, cut(0.25)).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn quadratic_forms() {
        let i2 = DispersionMatrix::identity(2);
        assert_eq!(tau_squared(&[1., 1.], &[1., 1.], &i2).unwrap(), 0.0);
        assert!((tau_squared(&[1., 1.], &[0., 0.], &i2).unwrap() - 2.0).abs() < 1e-15);
        let two = i2.scaled(2.0);
        assert!((tau_squared(&[3., -4.], &[0., 0.], &two).unwrap() - 12.5).abs() < 1e-14);
        let diag = DispersionMatrix::from_rows(&[vec![1., 0.], vec![0., 4.]]).unwrap();
        assert!((psi_squared(&[0., 1.], &[0., 0.], &diag).unwrap() - 0.25).abs() < 1e-15);
        assert!((hotelling_t2(&[1., 0.], &[0., 0.], &i2).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_dispersion_is_rejected() {
        let s = DispersionMatrix::from_rows(&[vec![1., 1.], vec![1., 1.]]).unwrap();
        assert!(matches!(
            tau_squared(&[1., 0.], &[0., 0.], &s),
            Err(SpcError::SingularDispersion { .. })
        ));
        assert!(matches!(
            tau_squared(&[1., 0.], &[0., 0.], &DispersionMatrix::zeros(2)),
            Err(SpcError::SingularDispersion { .. })
        ));
        assert!(tau_squared(&[1.], &[0., 0.], &DispersionMatrix::identity(2)).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let s = sample_covariance(&sample()).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: DispersionMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
    }
}
