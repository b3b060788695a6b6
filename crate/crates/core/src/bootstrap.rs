//! Bootstrap upper limits for the quadratic-form charts.
//!
//! Whole Phase-I subgroups are resampled with replacement. Per-subgroup
//! summaries are computed once and reused across resamples; a subgroup whose
//! summary is undefined (every point trimmed) is skipped and redrawn.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charts::ewma_update;
use crate::cloud::{PointCloud, require_same_shape};
use crate::error::{Result, SpcError, invalid};
use crate::mv_robust::{DispersionMatrix, MvEstimator, quadratic_form};

/// Sorted sample with the ceiling-rank quantile rule: `quantile(p)` is the
/// `⌈p·B⌉`-th smallest value, and `quantile(0)` is the minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    sorted: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SpcError::InsufficientData("empty bootstrap distribution".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SpcError::NonFinite);
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("quantile level {p} outside [0, 1]")));
        }
        let b = self.sorted.len();
        let rank = ((p * b as f64) - 1e-9).ceil().max(1.0) as usize;
        Ok(self.sorted[rank.min(b) - 1])
    }
}

/// Scale applied to the mean within-subgroup dispersion to get the
/// dispersion of the EWMA vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SzFactor {
    /// `λ / (1 − λ)`.
    #[default]
    Procedure,
    /// Steady-state `λ / (2 − λ)`.
    Asymptotic,
}

impl SzFactor {
    pub fn factor(self, lambda: f64) -> f64 {
        match self {
            SzFactor::Procedure => lambda / (1.0 - lambda),
            SzFactor::Asymptotic => lambda / (2.0 - lambda),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapPlan {
    pub resamples: usize,
    pub seed: u64,
    pub estimator: MvEstimator,
    /// EWMA weight; `None` for the non-smoothed statistics.
    pub lambda: Option<f64>,
    pub sz_factor: SzFactor,
}

impl BootstrapPlan {
    pub fn tau(resamples: usize, seed: u64, estimator: MvEstimator) -> Self {
        Self { resamples, seed, estimator, lambda: None, sz_factor: SzFactor::default() }
    }

    pub fn psi(
        resamples: usize,
        seed: u64,
        estimator: MvEstimator,
        lambda: f64,
        sz_factor: SzFactor,
    ) -> Self {
        Self { resamples, seed, estimator, lambda: Some(lambda), sz_factor }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauBootstrap {
    pub distribution: EmpiricalDistribution,
    /// Mean of the resampled subgroup locations.
    pub grand_mean: Vec<f64>,
    /// Mean of the resampled subgroup dispersions.
    pub mean_dispersion: DispersionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiBootstrap {
    pub distribution: EmpiricalDistribution,
    /// Phase-I grand location, also the EWMA starting value.
    pub grand_mean: Vec<f64>,
    pub mean_dispersion: DispersionMatrix,
    /// Mean of the resampled EWMA vectors.
    pub z_mean: Vec<f64>,
    /// Dispersion used for the EWMA vector.
    pub s_z: DispersionMatrix,
}

type Summary = (Vec<f64>, DispersionMatrix);

/// Summaries for every Phase-I subgroup; `None` marks an unusable one.
fn phase1_summaries(
    phase1: &[PointCloud],
    estimator: &MvEstimator,
) -> Result<Vec<Option<Summary>>> {
    let (_, dim) = require_same_shape(phase1)?;
    if dim < 2 {
        return Err(SpcError::UnsupportedDimension { what: "quadratic-form chart", dim });
    }
    phase1
        .par_iter()
        .map(|g| match estimator.summarize(g) {
            Ok(s) => Ok(Some(s)),
            Err(SpcError::AllTrimmed { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

fn draw_indices(summaries: &[Option<Summary>], plan: &BootstrapPlan) -> Result<Vec<usize>> {
    if plan.resamples == 0 {
        return Err(invalid("bootstrap needs at least one resample"));
    }
    let budget = plan.resamples.saturating_mul(10);
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut out = Vec::with_capacity(plan.resamples);
    let mut attempts = 0;
    while out.len() < plan.resamples {
        if attempts == budget {
            return Err(SpcError::ResampleExhausted { attempts, needed: plan.resamples });
        }
        attempts += 1;
        let i = rng.random_range(0..summaries.len());
        if summaries[i].is_some() {
            out.push(i);
        }
    }
    Ok(out)
}

/// The resample indices a plan would use for `phase1`.
pub fn resample_indices(phase1: &[PointCloud], plan: &BootstrapPlan) -> Result<Vec<usize>> {
    draw_indices(&phase1_summaries(phase1, &plan.estimator)?, plan)
}

fn picked<'a>(summaries: &'a [Option<Summary>], indices: &[usize]) -> Result<Vec<&'a Summary>> {
    indices
        .iter()
        .map(|&i| {
            summaries
                .get(i)
                .ok_or_else(|| invalid(format!("resample index {i} out of range")))?
                .as_ref()
                .ok_or(SpcError::AllTrimmed { cut: f64::NAN })
        })
        .collect()
}

fn mean_location(items: &[&Summary]) -> Vec<f64> {
    let p = items[0].0.len();
    let mut m = vec![0.0; p];
    for (loc, _) in items {
        for (a, v) in m.iter_mut().zip(loc) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|v| *v /= items.len() as f64);
    m
}

fn mean_dispersion(items: &[&Summary]) -> Result<DispersionMatrix> {
    let ds: Vec<DispersionMatrix> = items.iter().map(|(_, d)| d.clone()).collect();
    DispersionMatrix::average(&ds)
}

fn usable(summaries: &[Option<Summary>]) -> Result<Vec<&Summary>> {
    let items: Vec<&Summary> = summaries.iter().flatten().collect();
    if items.is_empty() {
        return Err(SpcError::ResampleExhausted { attempts: summaries.len(), needed: 1 });
    }
    Ok(items)
}

/// τ² (or T² for the classical estimator) bootstrap with explicit resample
/// indices into `phase1`.
pub fn bootstrap_tau_with_indices(
    phase1: &[PointCloud],
    estimator: MvEstimator,
    indices: &[usize],
) -> Result<TauBootstrap> {
    let summaries = phase1_summaries(phase1, &estimator)?;
    tau_from_summaries(&summaries, indices)
}

fn tau_from_summaries(summaries: &[Option<Summary>], indices: &[usize]) -> Result<TauBootstrap> {
    if indices.is_empty() {
        return Err(invalid("bootstrap needs at least one resample"));
    }
    let items = picked(summaries, indices)?;
    let grand_mean = mean_location(&items);
    let mean_dispersion = mean_dispersion(&items)?;
    let stats = items
        .iter()
        .map(|(loc, _)| quadratic_form(loc, &grand_mean, &mean_dispersion))
        .collect::<Result<Vec<_>>>()?;
    Ok(TauBootstrap {
        distribution: EmpiricalDistribution::new(stats)?,
        grand_mean,
        mean_dispersion,
    })
}

pub fn bootstrap_tau(phase1: &[PointCloud], plan: &BootstrapPlan) -> Result<TauBootstrap> {
    let summaries = phase1_summaries(phase1, &plan.estimator)?;
    let indices = draw_indices(&summaries, plan)?;
    tau_from_summaries(&summaries, &indices)
}

/// ψ² (or MEWMA for the classical estimator) bootstrap with explicit
/// resample indices. The EWMA runs over the resampled locations in order,
/// starting from the Phase-I grand location.
pub fn bootstrap_psi_with_indices(
    phase1: &[PointCloud],
    estimator: MvEstimator,
    lambda: f64,
    sz_factor: SzFactor,
    indices: &[usize],
) -> Result<PsiBootstrap> {
    let summaries = phase1_summaries(phase1, &estimator)?;
    psi_from_summaries(&summaries, lambda, sz_factor, indices)
}

fn psi_from_summaries(
    summaries: &[Option<Summary>],
    lambda: f64,
    sz_factor: SzFactor,
    indices: &[usize],
) -> Result<PsiBootstrap> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(invalid(format!("EWMA lambda {lambda} outside (0, 1)")));
    }
    if indices.is_empty() {
        return Err(invalid("bootstrap needs at least one resample"));
    }
    let all = usable(summaries)?;
    let grand_mean = mean_location(&all);
    let mean_dispersion = mean_dispersion(&all)?;

    let items = picked(summaries, indices)?;
    let mut z = grand_mean.clone();
    let mut path = Vec::with_capacity(items.len());
    for (loc, _) in &items {
        ewma_update(&mut z, loc, lambda);
        path.push(z.clone());
    }
    let p = grand_mean.len();
    let mut z_mean = vec![0.0; p];
    for zi in &path {
        for (a, v) in z_mean.iter_mut().zip(zi) {
            *a += v;
        }
    }
    z_mean.iter_mut().for_each(|v| *v /= path.len() as f64);

    let s_z = mean_dispersion.scaled(sz_factor.factor(lambda));
    let stats = path
        .iter()
        .map(|zi| quadratic_form(zi, &z_mean, &s_z))
        .collect::<Result<Vec<_>>>()?;
    Ok(PsiBootstrap {
        distribution: EmpiricalDistribution::new(stats)?,
        grand_mean,
        mean_dispersion,
        z_mean,
        s_z,
    })
}

pub fn bootstrap_psi(phase1: &[PointCloud], plan: &BootstrapPlan) -> Result<PsiBootstrap> {
    let lambda = plan.lambda.ok_or_else(|| invalid("ψ² bootstrap needs an EWMA lambda"))?;
    let summaries = phase1_summaries(phase1, &plan.estimator)?;
    let indices = draw_indices(&summaries, plan)?;
    psi_from_summaries(&summaries, lambda, plan.sz_factor, &indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::{CutValue, DepthKind};
    use rand_distr::{Distribution, StandardNormal};

    fn phase1(count: usize, n: usize, seed: u64) -> Vec<PointCloud> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let c: Vec<f64> = (0..2 * n).map(|_| StandardNormal.sample(&mut rng)).collect();
                PointCloud::new(2, c).unwrap()
            })
            .collect()
    }

    fn trimmed() -> MvEstimator {
        MvEstimator::DepthTrimmed { depth: DepthKind::Spatial, cut: CutValue::new(0.2).unwrap() }
    }

    #[test]
    fn quantile_rule() {
        let d = EmpiricalDistribution::new((1..=10).rev().map(f64::from).collect()).unwrap();
        assert_eq!(d.quantile(0.0).unwrap(), 1.0);
        assert_eq!(d.quantile(0.9).unwrap(), 9.0);
        assert_eq!(d.quantile(0.91).unwrap(), 10.0);
        assert_eq!(d.quantile(1.0).unwrap(), 10.0);
        assert_eq!(d.quantile(0.1).unwrap(), 1.0);
        assert!(d.quantile(1.5).is_err());
        let flat = EmpiricalDistribution::new(vec![2.0; 7]).unwrap();
        assert_eq!(flat.quantile(0.9).unwrap(), 2.0);
    }

    #[test]
    fn single_resample_gives_zero() {
        let groups = phase1(12, 10, 1);
        let b = bootstrap_tau_with_indices(&groups, trimmed(), &[3]).unwrap();
        assert_eq!(b.distribution.values(), &[0.0]);
    }

    #[test]
    fn identity_resample_matches_direct() {
        let groups = phase1(15, 12, 2);
        let est = trimmed();
        let idx: Vec<usize> = (0..groups.len()).collect();
        let b = bootstrap_tau_with_indices(&groups, est, &idx).unwrap();
        let sums: Vec<_> = groups.iter().map(|g| est.summarize(g).unwrap()).collect();
        let ds: Vec<_> = sums.iter().map(|s| s.1.clone()).collect();
        let s_w = DispersionMatrix::average(&ds).unwrap();
        let mut mu = [0.0, 0.0];
        for s in &sums {
            mu[0] += s.0[0] / 15.0;
            mu[1] += s.0[1] / 15.0;
        }
        let mut direct: Vec<f64> =
            sums.iter().map(|s| quadratic_form(&s.0, &mu, &s_w).unwrap()).collect();
        direct.sort_by(f64::total_cmp);
        for (a, b) in direct.iter().zip(b.distribution.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_limits() {
        let groups = phase1(30, 10, 3);
        let plan = BootstrapPlan::tau(200, 99, trimmed());
        let a = bootstrap_tau(&groups, &plan).unwrap();
        let b = bootstrap_tau(&groups, &plan).unwrap();
        assert_eq!(a, b);
        let other = bootstrap_tau(&groups, &BootstrapPlan { seed: 100, ..plan }).unwrap();
        assert_ne!(a.distribution, other.distribution);
    }

    #[test]
    fn psi_constant_locations_give_zero() {
        // Every subgroup has the same trimmed mean but a nondegenerate spread.
        let base = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [0.5, 0.5], [-0.5, -0.5]];
        let groups: Vec<PointCloud> = (0..12)
            .map(|k| {
                let s = 1.0 + k as f64 * 0.1;
                let pts: Vec<[f64; 2]> = base.iter().map(|p| [3.0 + s * p[0], -2.0 + s * p[1]]).collect();
                PointCloud::from_points(&pts).unwrap()
            })
            .collect();
        let plan = BootstrapPlan::psi(50, 4, MvEstimator::Classical, 0.3, SzFactor::Procedure);
        let b = bootstrap_psi(&groups, &plan).unwrap();
        assert!(b.distribution.values().iter().all(|v| v.abs() < 1e-18));
        assert!((b.grand_mean[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn psi_lambda_domain() {
        let groups = phase1(12, 10, 5);
        let idx = [0, 1, 2];
        for bad in [0.0, 1.0, -0.2] {
            assert!(
                bootstrap_psi_with_indices(&groups, MvEstimator::Classical, bad, SzFactor::Procedure, &idx)
                    .is_err()
            );
        }
    }

    #[test]
    fn sz_factors() {
        assert!((SzFactor::Procedure.factor(0.2) - 0.25).abs() < 1e-15);
        assert!((SzFactor::Asymptotic.factor(0.2) - 0.2 / 1.8).abs() < 1e-15);
    }

    #[test]
    fn all_trimmed_subgroups_are_skipped() {
        // No planar Tukey depth comes near this cut.
        let mut groups = phase1(12, 10, 6);
        let cut = CutValue::new(0.9999).unwrap();
        let est = MvEstimator::DepthTrimmed { depth: DepthKind::Tukey, cut };
        assert!(matches!(
            bootstrap_tau(&groups, &BootstrapPlan::tau(20, 1, est)),
            Err(SpcError::ResampleExhausted { .. })
        ));
        groups.truncate(3);
        assert!(resample_indices(&groups, &BootstrapPlan::tau(5, 1, MvEstimator::Classical)).is_ok());
    }
}
