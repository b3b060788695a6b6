//! Data-depth functions and depth-quantile cutvalues.
//!
//! All four depths are scaled into `[0, 1]` so one [`CutValue`] works with
//! any of them. Tukey, simplicial and Oja depth are computed exactly in one
//! and two dimensions; sign decisions go through exact orientation
//! predicates.

use rayon::prelude::*;
use robust::{Coord, orient2d};
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Result, SpcError, invalid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthKind {
    /// L1 / spatial depth.
    Spatial,
    /// Halfspace depth.
    Tukey,
    /// Liu's simplicial depth; bivariate only.
    Simplicial,
    Oja,
}

impl DepthKind {
    pub const ALL: [DepthKind; 4] =
        [DepthKind::Spatial, DepthKind::Tukey, DepthKind::Simplicial, DepthKind::Oja];

    pub fn name(self) -> &'static str {
        match self {
            DepthKind::Spatial => "spatial",
            DepthKind::Tukey => "tukey",
            DepthKind::Simplicial => "simplicial",
            DepthKind::Oja => "oja",
        }
    }
}

impl std::str::FromStr for DepthKind {
    type Err = SpcError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spatial" | "l1" => Ok(DepthKind::Spatial),
            "tukey" | "halfspace" => Ok(DepthKind::Tukey),
            "simplicial" | "liu" => Ok(DepthKind::Simplicial),
            "oja" => Ok(DepthKind::Oja),
            other => Err(invalid(format!("unknown depth kind `{other}`"))),
        }
    }
}

/// Minimum depth a point must strictly exceed to survive trimming.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CutValue(f64);

impl CutValue {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(invalid(format!("cutvalue {value} outside [0, 1]")));
        }
        Ok(Self(value))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for CutValue {
    type Error = SpcError;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CutValue> for f64 {
    fn from(c: CutValue) -> f64 {
        c.0
    }
}

fn check_query(x: &[f64], cloud: &PointCloud) -> Result<()> {
    if cloud.is_empty() {
        return Err(SpcError::InsufficientData("empty point cloud".into()));
    }
    if x.len() != cloud.dim() {
        return Err(SpcError::DimensionMismatch { expected: cloud.dim(), found: x.len() });
    }
    Ok(())
}

#[inline]
fn coord(p: &[f64]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

/// `1 − ‖mean of (x − y)/‖x − y‖‖`; points equal to `x` contribute zero.
pub fn spatial_depth(x: &[f64], cloud: &PointCloud) -> Result<f64> {
    check_query(x, cloud)?;
    let mut acc = vec![0.0; x.len()];
    for y in cloud.points() {
        let norm = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for ((s, a), b) in acc.iter_mut().zip(x).zip(y) {
                *s += (a - b) / norm;
            }
        }
    }
    let n = cloud.len() as f64;
    let len = acc.iter().map(|v| (v / n) * (v / n)).sum::<f64>().sqrt();
    Ok((1.0 - len).clamp(0.0, 1.0))
}

/// Halfspace depth: the smallest fraction of the cloud in any closed
/// halfspace containing `x`.
pub fn tukey_depth(x: &[f64], cloud: &PointCloud) -> Result<f64> {
    check_query(x, cloud)?;
    let n = cloud.len();
    match cloud.dim() {
        1 => {
            let above = cloud.coords().iter().filter(|&&y| y >= x[0]).count();
            let below = cloud.coords().iter().filter(|&&y| y <= x[0]).count();
            Ok(above.min(below) as f64 / n as f64)
        }
        2 => Ok(tukey_depth_2d(x, cloud) as f64 / n as f64),
        dim => Err(SpcError::UnsupportedDimension { what: "exact Tukey depth", dim }),
    }
}

/// Count form of the bivariate halfspace depth.
///
/// The closed halfplanes realizing the minimum can be taken with no data
/// point other than `x` on their boundary, so the count equals the
/// coincident points plus everything outside the fullest open half-circle
/// of directions seen from `x`. A fullest open half-circle can be rotated
/// until one boundary ray touches a data direction, which leaves two
/// candidates per point.
fn tukey_depth_2d(x: &[f64], cloud: &PointCloud) -> usize {
    let xc = coord(x);
    let others: Vec<Coord<f64>> =
        cloud.points().filter(|p| *p != x).map(coord).collect();
    let coincident = cloud.len() - others.len();
    if others.is_empty() {
        return coincident;
    }
    let mut fullest = 0;
    for &vi in &others {
        let (mut cw, mut ccw, mut same, mut opposite) = (0, 0, 0, 0);
        for &vj in &others {
            let o = orient2d(xc, vi, vj);
            if o > 0.0 {
                ccw += 1;
            } else if o < 0.0 {
                cw += 1;
            } else if (vi.x - xc.x) * (vj.x - xc.x) + (vi.y - xc.y) * (vj.y - xc.y) > 0.0 {
                same += 1;
            } else {
                opposite += 1;
            }
        }
        fullest = fullest.max(cw + same).max(ccw + opposite);
    }
    coincident + others.len() - fullest
}

/// Whether `x` lies in the closed triangle `abc`, degenerate triangles
/// included.
pub fn triangle_contains(a: &[f64], b: &[f64], c: &[f64], x: &[f64]) -> bool {
    let (ac, bc, cc, xc) = (coord(a), coord(b), coord(c), coord(x));
    let o = [orient2d(ac, bc, xc), orient2d(bc, cc, xc), orient2d(cc, ac, xc)];
    let pos = o.iter().any(|&v| v > 0.0);
    let neg = o.iter().any(|&v| v < 0.0);
    if pos || neg {
        return !(pos && neg);
    }
    // Collinear with x on the common line: inside iff within the hull,
    // which for collinear points is the bounding box.
    let within = |k: usize| {
        let lo = a[k].min(b[k]).min(c[k]);
        let hi = a[k].max(b[k]).max(c[k]);
        (lo..=hi).contains(&x[k])
    };
    within(0) && within(1)
}

/// Fraction of the `C(n, 3)` closed data triangles that contain `x`.
pub fn simplicial_depth(x: &[f64], cloud: &PointCloud) -> Result<f64> {
    check_query(x, cloud)?;
    if cloud.dim() != 2 {
        return Err(SpcError::UnsupportedDimension { what: "simplicial depth", dim: cloud.dim() });
    }
    let n = cloud.len();
    if n < 3 {
        return Err(SpcError::InsufficientData(format!(
            "simplicial depth needs at least 3 points, got {n}"
        )));
    }
    let mut inside = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if triangle_contains(cloud.point(i), cloud.point(j), cloud.point(k), x) {
                    inside += 1;
                }
            }
        }
    }
    let total = (n * (n - 1) * (n - 2) / 6) as f64;
    Ok(inside as f64 / total)
}

/// Square root of the determinant of the sample covariance (divisor `n − 1`),
/// the volume scale that makes Oja depth affine invariant. Falls back to 1
/// for degenerate clouds.
fn oja_scale(cloud: &PointCloud) -> f64 {
    let n = cloud.len();
    if n < 2 {
        return 1.0;
    }
    let m = cloud.mean();
    let det = match cloud.dim() {
        1 => cloud.coords().iter().map(|v| (v - m[0]).powi(2)).sum::<f64>() / (n as f64 - 1.0),
        _ => {
            let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
            for p in cloud.points() {
                let (dx, dy) = (p[0] - m[0], p[1] - m[1]);
                sxx += dx * dx;
                syy += dy * dy;
                sxy += dx * dy;
            }
            // Collinear clouds can leave rounding noise in the determinant.
            let raw = sxx * syy - sxy * sxy;
            if raw <= 1e-12 * sxx * syy {
                return 1.0;
            }
            raw / (n as f64 - 1.0).powi(2)
        }
    };
    if det > 0.0 { det.sqrt() } else { 1.0 }
}

fn mean_simplex_volume(x: &[f64], cloud: &PointCloud) -> f64 {
    let n = cloud.len();
    match cloud.dim() {
        1 => cloud.coords().iter().map(|y| (x[0] - y).abs()).sum::<f64>() / n as f64,
        _ => {
            let xc = coord(x);
            let mut total = 0.0;
            for i in 0..n {
                let a = coord(cloud.point(i));
                for j in i + 1..n {
                    total += orient2d(xc, a, coord(cloud.point(j))).abs() / 2.0;
                }
            }
            total / (n * (n - 1) / 2) as f64
        }
    }
}

fn oja_with_scale(x: &[f64], cloud: &PointCloud, scale: f64) -> f64 {
    1.0 / (1.0 + mean_simplex_volume(x, cloud) / scale)
}

fn check_oja(cloud: &PointCloud) -> Result<()> {
    let (n, p) = (cloud.len(), cloud.dim());
    if p > 2 {
        return Err(SpcError::UnsupportedDimension { what: "exact Oja depth", dim: p });
    }
    if n < p.max(2) {
        return Err(SpcError::InsufficientData(format!("Oja depth needs at least {} points", p.max(2))));
    }
    Ok(())
}

/// `1 / (1 + V̄(x) / √det S)` where `V̄(x)` is the mean volume of the
/// simplices spanned by `x` and each `p`-subset of the cloud and `S` is the
/// cloud's sample covariance.
pub fn oja_depth(x: &[f64], cloud: &PointCloud) -> Result<f64> {
    check_query(x, cloud)?;
    check_oja(cloud)?;
    Ok(oja_with_scale(x, cloud, oja_scale(cloud)))
}

pub fn depth(kind: DepthKind, x: &[f64], cloud: &PointCloud) -> Result<f64> {
    match kind {
        DepthKind::Spatial => spatial_depth(x, cloud),
        DepthKind::Tukey => tukey_depth(x, cloud),
        DepthKind::Simplicial => simplicial_depth(x, cloud),
        DepthKind::Oja => oja_depth(x, cloud),
    }
}

/// Depth of every point of `cloud` relative to the cloud itself.
pub fn depths_within(kind: DepthKind, cloud: &PointCloud) -> Result<Vec<f64>> {
    if kind == DepthKind::Oja {
        check_oja(cloud)?;
        let scale = oja_scale(cloud);
        return Ok(cloud.points().map(|p| oja_with_scale(p, cloud, scale)).collect());
    }
    cloud.points().map(|p| depth(kind, p, cloud)).collect()
}

/// Pooled within-subgroup depth quantile at `trim_fraction`.
///
/// With `N` pooled depths and `k = floor(trim_fraction · N)`, the cutvalue is
/// the `k`-th smallest depth, so at least `k` points sit at or below it. When
/// `k = 0` the cutvalue is 0 and every point is retained.
pub fn estimate_cutvalue(
    subgroups: &[PointCloud],
    kind: DepthKind,
    trim_fraction: f64,
) -> Result<CutValue> {
    if subgroups.len() < 10 {
        return Err(SpcError::InsufficientData(format!(
            "cutvalue estimation needs at least 10 subgroups, got {}",
            subgroups.len()
        )));
    }
    if !(trim_fraction > 0.0 && trim_fraction < 0.5) {
        return Err(invalid(format!("trim fraction {trim_fraction} outside (0, 0.5)")));
    }
    let per_group: Vec<Vec<f64>> = subgroups
        .par_iter()
        .map(|g| depths_within(kind, g))
        .collect::<Result<_>>()?;
    let mut pooled: Vec<f64> = per_group.into_iter().flatten().collect();
    pooled.sort_by(f64::total_cmp);
    let k = (trim_fraction * pooled.len() as f64 + 1e-9).floor() as usize;
    let cut = if k == 0 { 0.0 } else { pooled[k - 1] };
    CutValue::new(cut.clamp(0.0, 1.0))
}
