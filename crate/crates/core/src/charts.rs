//! Control-chart construction (Phase I) and monitoring (Phase II).
//!
//! Univariate charts plot a subgroup statistic against `[lcl, ucl]`;
//! quadratic-form charts plot T², τ², MEWMA or ψ² against `[0, ucl]` with
//! the upper limit taken from a bootstrap distribution. On-limit points are
//! in control.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::bootstrap::{
    BootstrapPlan, EmpiricalDistribution, SzFactor, bootstrap_psi, bootstrap_tau,
};
use crate::cloud::{PointCloud, require_same_shape};
use crate::depth::{CutValue, DepthKind, estimate_cutvalue};
use crate::error::{Result, SpcError, invalid};
use crate::mv_robust::{DispersionMatrix, MvEstimator, quadratic_form};
use crate::robust_stats::{
    DenominatorMode, TrimProportion, fit_gamma, mean, std_dev, trimmed_mean, trimmed_se,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlLimits {
    pub lcl: f64,
    pub center: f64,
    pub ucl: f64,
}

impl ControlLimits {
    pub fn new(lcl: f64, center: f64, ucl: f64) -> Result<Self> {
        if !(lcl <= center && center <= ucl) {
            return Err(invalid(format!("limits out of order: {lcl} / {center} / {ucl}")));
        }
        Ok(Self { lcl, center, ucl })
    }

    pub fn symmetric(center: f64, half_width: f64) -> Result<Self> {
        Self::new(center - half_width, center, center + half_width)
    }

    pub fn contains(&self, statistic: f64) -> bool {
        self.lcl <= statistic && statistic <= self.ucl
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwmaParams {
    pub lambda: f64,
    #[serde(rename = "L")]
    pub l: f64,
}

impl EwmaParams {
    pub fn new(lambda: f64, l: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(invalid(format!("EWMA lambda {lambda} outside (0, 1]")));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(invalid(format!("EWMA L {l} must be positive")));
        }
        Ok(Self { lambda, l })
    }
}

/// Unbiasing constant `c4(n) = √(2/(n−1)) Γ(n/2) / Γ((n−1)/2)`.
pub fn c4(n: usize) -> f64 {
    let n = n as f64;
    (2.0 / (n - 1.0)).sqrt() * (ln_gamma(n / 2.0) - ln_gamma((n - 1.0) / 2.0)).exp()
}

fn univariate_groups(groups: &[PointCloud]) -> Result<(usize, Vec<&[f64]>)> {
    let (n, dim) = require_same_shape(groups)?;
    if dim != 1 {
        return Err(SpcError::DimensionMismatch { expected: 1, found: dim });
    }
    Ok((n, groups.iter().map(PointCloud::coords).collect()))
}

/// Classical `X̄` and `S` chart limits: `X̄̄ ± 3 S̄/√n` and `[B3 S̄, B4 S̄]`.
pub fn shewhart_limits_classic(phase1: &[PointCloud]) -> Result<(ControlLimits, ControlLimits)> {
    let (n, groups) = univariate_groups(phase1)?;
    if groups.len() < 2 {
        return Err(SpcError::InsufficientData("need at least 2 Phase-I subgroups".into()));
    }
    if n < 2 {
        return Err(SpcError::InsufficientData("subgroups need at least 2 observations".into()));
    }
    let grand = mean(&groups.iter().map(|g| mean(g)).collect::<Vec<_>>());
    let s_bar = mean(&groups.iter().map(|g| std_dev(g)).collect::<Vec<_>>());
    let mean_chart = ControlLimits::symmetric(grand, 3.0 * s_bar / (n as f64).sqrt())?;
    let c = c4(n);
    let spread = 3.0 * (1.0 - c * c).sqrt() / c;
    let sd_chart =
        ControlLimits::new(s_bar * (1.0 - spread).max(0.0), s_bar, s_bar * (1.0 + spread))?;
    Ok((mean_chart, sd_chart))
}

/// Trimmed-mean and trimmed-standard-error chart limits.
///
/// `X̄_t` limits are the `tail_prob` and `1 − tail_prob` quantiles of a
/// normal fitted to the Phase-I trimmed means. `S_t` limits are the square
/// roots of the same quantiles of a moment gamma fitted to the Phase-I
/// `S_t²`. Centers are the fitted medians.
pub fn shewhart_limits_trimmed(
    phase1: &[PointCloud],
    alpha: TrimProportion,
    tail_prob: f64,
) -> Result<(ControlLimits, ControlLimits)> {
    let (_, groups) = univariate_groups(phase1)?;
    if groups.len() < 30 {
        return Err(SpcError::InsufficientData(format!(
            "trimmed Shewhart limits need at least 30 Phase-I subgroups, got {}",
            groups.len()
        )));
    }
    if !(tail_prob > 0.0 && tail_prob <= 0.5) {
        return Err(invalid(format!("tail probability {tail_prob} outside (0, 0.5]")));
    }
    let means = groups
        .iter()
        .map(|g| trimmed_mean(g, alpha, DenominatorMode::RetainedCount))
        .collect::<Result<Vec<_>>>()?;
    let se2 = groups
        .iter()
        .map(|g| trimmed_se(g, alpha).map(|s| s * s))
        .collect::<Result<Vec<_>>>()?;

    let (mu, sd) = (mean(&means), std_dev(&means));
    let z = Normal::standard().inverse_cdf(tail_prob);
    let mean_chart = if tail_prob == 0.5 {
        ControlLimits::new(mu, mu, mu)?
    } else {
        ControlLimits::new(mu + z * sd, mu, mu - z * sd)?
    };

    let fit = fit_gamma(&se2)?;
    let median = fit.quantile(0.5).sqrt();
    let se_chart = if tail_prob == 0.5 {
        ControlLimits::new(median, median, median)?
    } else {
        ControlLimits::new(
            fit.quantile(tail_prob).sqrt(),
            median,
            fit.quantile(1.0 - tail_prob).sqrt(),
        )?
    };
    Ok((mean_chart, se_chart))
}

/// One EWMA step `z ← λ·x + (1 − λ)·z`, componentwise.
pub fn ewma_update(z: &mut [f64], x: &[f64], lambda: f64) {
    for (zi, xi) in z.iter_mut().zip(x) {
        *zi = lambda * xi + (1.0 - lambda) * *zi;
    }
}

/// Steady-state EWMA limits `μ₀ ± L·σ_x̄·√(λ/(2 − λ))`, where `sigma_xbar`
/// is the standard deviation of the plotted subgroup statistic.
pub fn ewma_limits(mu0: f64, sigma_xbar: f64, params: EwmaParams) -> Result<ControlLimits> {
    if !(sigma_xbar >= 0.0) {
        return Err(invalid(format!("sigma {sigma_xbar} must be non-negative")));
    }
    let lambda = params.lambda;
    ControlLimits::symmetric(mu0, params.l * sigma_xbar * (lambda / (2.0 - lambda)).sqrt())
}

/// Subgroup statistic plotted by a univariate chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "statistic", rename_all = "kebab-case")]
pub enum UniStatistic {
    Mean,
    StdDev,
    TrimmedMean { alpha: TrimProportion },
    TrimmedSe { alpha: TrimProportion },
    /// `Φ(√n · x̄)`: uniform on `(0, 1)` for in-control N(0, 1) subgroups,
    /// which gives a chart with a known per-subgroup signal probability.
    UniformScore,
}

impl UniStatistic {
    pub fn compute(&self, values: &[f64]) -> Result<f64> {
        match *self {
            UniStatistic::Mean => Ok(mean(values)),
            UniStatistic::StdDev => Ok(std_dev(values)),
            UniStatistic::TrimmedMean { alpha } => {
                trimmed_mean(values, alpha, DenominatorMode::RetainedCount)
            }
            UniStatistic::TrimmedSe { alpha } => trimmed_se(values, alpha),
            UniStatistic::UniformScore => {
                Ok(Normal::standard().cdf((values.len() as f64).sqrt() * mean(values)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniEwma {
    pub lambda: f64,
    pub start: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvEwma {
    pub lambda: f64,
    pub start: Vec<f64>,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniChart {
    pub statistic: UniStatistic,
    pub limits: ControlLimits,
    pub ewma: Option<UniEwma>,
    pub sample_count: u64,
}

/// Quadratic-form chart: plots `(v − center)ᵀ dispersion⁻¹ (v − center)`
/// where `v` is the subgroup location (or its EWMA).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvChart {
    pub estimator: MvEstimator,
    pub center: Vec<f64>,
    pub dispersion: DispersionMatrix,
    pub limits: ControlLimits,
    pub ewma: Option<MvEwma>,
    pub sample_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorVerdict {
    pub statistic: f64,
    pub in_control: bool,
}

/// A fitted chart together with its monitoring state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Chart {
    Univariate(UniChart),
    Multivariate(MvChart),
}

impl Chart {
    pub fn name(&self) -> &'static str {
        match self {
            Chart::Univariate(c) => match (c.statistic, c.ewma.is_some()) {
                (UniStatistic::Mean, false) => "mean",
                (UniStatistic::Mean, true) => "ewma",
                (UniStatistic::StdDev, _) => "sd",
                (UniStatistic::TrimmedMean { .. }, false) => "trimmed-mean",
                (UniStatistic::TrimmedMean { .. }, true) => "trimmed-ewma",
                (UniStatistic::TrimmedSe { .. }, _) => "trimmed-se",
                (UniStatistic::UniformScore, _) => "probe",
            },
            Chart::Multivariate(c) => match (c.estimator, c.ewma.is_some()) {
                (MvEstimator::Classical, false) => "t2",
                (MvEstimator::Classical, true) => "mewma",
                (MvEstimator::DepthTrimmed { .. }, false) => "tau2",
                (MvEstimator::DepthTrimmed { .. }, true) => "psi2",
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Chart::Univariate(_) => 1,
            Chart::Multivariate(c) => c.center.len(),
        }
    }

    pub fn limits(&self) -> ControlLimits {
        match self {
            Chart::Univariate(c) => c.limits,
            Chart::Multivariate(c) => c.limits,
        }
    }

    pub fn sample_count(&self) -> u64 {
        match self {
            Chart::Univariate(c) => c.sample_count,
            Chart::Multivariate(c) => c.sample_count,
        }
    }

    /// Current smoothed value for EWMA-type charts.
    pub fn ewma_value(&self) -> Option<Vec<f64>> {
        match self {
            Chart::Univariate(c) => c.ewma.as_ref().map(|e| vec![e.value]),
            Chart::Multivariate(c) => c.ewma.as_ref().map(|e| e.value.clone()),
        }
    }

    /// Restore the EWMA to its starting value and zero the sample count.
    pub fn reset(&mut self) {
        match self {
            Chart::Univariate(c) => {
                if let Some(e) = &mut c.ewma {
                    e.value = e.start;
                }
                c.sample_count = 0;
            }
            Chart::Multivariate(c) => {
                if let Some(e) = &mut c.ewma {
                    e.value.clone_from(&e.start);
                }
                c.sample_count = 0;
            }
        }
    }

    /// Plot one subgroup. On error the chart state is left unchanged.
    pub fn observe(&mut self, subgroup: &PointCloud) -> Result<MonitorVerdict> {
        if subgroup.dim() != self.dim() {
            return Err(SpcError::DimensionMismatch { expected: self.dim(), found: subgroup.dim() });
        }
        let (statistic, limits) = match self {
            Chart::Univariate(c) => {
                let s = c.statistic.compute(subgroup.coords())?;
                let plotted = match &mut c.ewma {
                    Some(e) => {
                        let mut z = [e.value];
                        ewma_update(&mut z, &[s], e.lambda);
                        e.value = z[0];
                        z[0]
                    }
                    None => s,
                };
                c.sample_count += 1;
                (plotted, c.limits)
            }
            Chart::Multivariate(c) => {
                let loc = c.estimator.location(subgroup)?;
                let plotted = match &c.ewma {
                    Some(e) => {
                        let mut z = e.value.clone();
                        ewma_update(&mut z, &loc, e.lambda);
                        let q = quadratic_form(&z, &c.center, &c.dispersion)?;
                        if let Some(e) = &mut c.ewma {
                            e.value = z;
                        }
                        q
                    }
                    None => quadratic_form(&loc, &c.center, &c.dispersion)?,
                };
                c.sample_count += 1;
                (plotted, c.limits)
            }
        };
        Ok(MonitorVerdict { statistic, in_control: limits.contains(statistic) })
    }
}

/// Verdict stream for a sequence of subgroups; faults surface per point.
pub fn monitor<'a, I>(
    chart: &'a mut Chart,
    subgroups: I,
) -> impl Iterator<Item = Result<MonitorVerdict>> + 'a
where
    I: IntoIterator<Item = &'a PointCloud>,
    I::IntoIter: 'a,
{
    subgroups.into_iter().map(move |g| chart.observe(g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunLength {
    /// 1-based index of the first out-of-control verdict.
    Signal(usize),
    /// No signal within the cap.
    Censored(usize),
}

impl RunLength {
    pub fn value(self) -> usize {
        match self {
            RunLength::Signal(v) | RunLength::Censored(v) => v,
        }
    }

    pub fn is_censored(self) -> bool {
        matches!(self, RunLength::Censored(_))
    }
}

pub fn run_length<I: IntoIterator<Item = MonitorVerdict>>(verdicts: I, cap: usize) -> RunLength {
    for (i, v) in verdicts.into_iter().take(cap).enumerate() {
        if !v.in_control {
            return RunLength::Signal(i + 1);
        }
    }
    RunLength::Censored(cap)
}

/// How multivariate trimming picks its cutvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimRule {
    /// Pooled Phase-I depth quantile at this fraction.
    Fraction(f64),
    Cut(CutValue),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    pub resamples: usize,
    /// Percentile of the bootstrap distribution used as the upper limit.
    pub quantile: f64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self { resamples: 1000, quantile: 0.9 }
    }
}

/// Phase-I recipe for any supported chart family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ChartRecipe {
    /// Classical `X̄` chart, with the `S` chart as companion.
    Shewhart,
    /// `X̄` chart with exact limits `mean ± k·σ/√n` from known parameters.
    KnownShewhart { mean: f64, sigma: f64, k: f64, n: usize },
    /// `X̄_t` chart, with the `S_t` chart as companion.
    TrimmedShewhart { alpha: TrimProportion, tail_prob: f64 },
    Ewma { params: EwmaParams },
    TrimmedEwma { params: EwmaParams, alpha: TrimProportion },
    #[serde(rename = "t2")]
    HotellingT2 { bootstrap: BootstrapSettings },
    #[serde(rename = "tau2")]
    TauSquared { depth: DepthKind, trim: TrimRule, bootstrap: BootstrapSettings },
    Mewma { lambda: f64, sz_factor: SzFactor, bootstrap: BootstrapSettings },
    #[serde(rename = "psi2")]
    PsiSquared {
        depth: DepthKind,
        trim: TrimRule,
        lambda: f64,
        sz_factor: SzFactor,
        bootstrap: BootstrapSettings,
    },
    /// Signals with probability exactly `q` per in-control N(0, 1) subgroup.
    #[serde(rename = "probe")]
    CalibrationProbe { q: f64 },
}

/// Pooled Phase-I estimates behind a quadratic-form chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimates {
    pub grand_mean: Vec<f64>,
    pub mean_dispersion: DispersionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedChart {
    /// Primary chart first; Shewhart families append their dispersion chart.
    pub charts: Vec<Chart>,
    pub cutvalue: Option<CutValue>,
    pub pooled: Option<PooledEstimates>,
    pub distribution: Option<EmpiricalDistribution>,
}

impl FittedChart {
    fn single(chart: Chart) -> Self {
        Self { charts: vec![chart], cutvalue: None, pooled: None, distribution: None }
    }

    pub fn primary(&self) -> &Chart {
        &self.charts[0]
    }
}

fn uni_chart(statistic: UniStatistic, limits: ControlLimits, ewma: Option<UniEwma>) -> Chart {
    Chart::Univariate(UniChart { statistic, limits, ewma, sample_count: 0 })
}

fn quadratic_limits(dist: &EmpiricalDistribution, quantile: f64) -> Result<ControlLimits> {
    let ucl = dist.quantile(quantile)?;
    ControlLimits::new(0.0, dist.quantile(0.5)?.min(ucl), ucl)
}

impl ChartRecipe {
    pub fn family(&self) -> &'static str {
        match self {
            ChartRecipe::Shewhart => "shewhart",
            ChartRecipe::KnownShewhart { .. } => "known-shewhart",
            ChartRecipe::TrimmedShewhart { .. } => "trimmed-shewhart",
            ChartRecipe::Ewma { .. } => "ewma",
            ChartRecipe::TrimmedEwma { .. } => "trimmed-ewma",
            ChartRecipe::HotellingT2 { .. } => "t2",
            ChartRecipe::TauSquared { .. } => "tau2",
            ChartRecipe::Mewma { .. } => "mewma",
            ChartRecipe::PsiSquared { .. } => "psi2",
            ChartRecipe::CalibrationProbe { .. } => "probe",
        }
    }

    /// Whether fitting reads the Phase-I data at all.
    pub fn uses_phase1(&self) -> bool {
        !matches!(self, ChartRecipe::KnownShewhart { .. } | ChartRecipe::CalibrationProbe { .. })
    }

    pub fn is_multivariate(&self) -> bool {
        matches!(
            self,
            ChartRecipe::HotellingT2 { .. }
                | ChartRecipe::TauSquared { .. }
                | ChartRecipe::Mewma { .. }
                | ChartRecipe::PsiSquared { .. }
        )
    }

    fn estimator(
        phase1: &[PointCloud],
        depth: DepthKind,
        trim: TrimRule,
    ) -> Result<(MvEstimator, CutValue)> {
        let cut = match trim {
            TrimRule::Cut(c) => c,
            TrimRule::Fraction(f) => estimate_cutvalue(phase1, depth, f)?,
        };
        Ok((MvEstimator::DepthTrimmed { depth, cut }, cut))
    }

    /// Build limits from Phase-I subgroups. `seed` drives any bootstrap.
    pub fn fit(&self, phase1: &[PointCloud], seed: u64) -> Result<FittedChart> {
        match *self {
            ChartRecipe::Shewhart => {
                let (m, s) = shewhart_limits_classic(phase1)?;
                Ok(FittedChart {
                    charts: vec![
                        uni_chart(UniStatistic::Mean, m, None),
                        uni_chart(UniStatistic::StdDev, s, None),
                    ],
                    cutvalue: None,
                    pooled: None,
                    distribution: None,
                })
            }
            ChartRecipe::KnownShewhart { mean, sigma, k, n } => {
                if n < 1 || !(sigma >= 0.0) || !(k > 0.0) {
                    return Err(invalid("known Shewhart needs n ≥ 1, σ ≥ 0 and k > 0"));
                }
                let limits = ControlLimits::symmetric(mean, k * sigma / (n as f64).sqrt())?;
                Ok(FittedChart::single(uni_chart(UniStatistic::Mean, limits, None)))
            }
            ChartRecipe::TrimmedShewhart { alpha, tail_prob } => {
                let (m, s) = shewhart_limits_trimmed(phase1, alpha, tail_prob)?;
                Ok(FittedChart {
                    charts: vec![
                        uni_chart(UniStatistic::TrimmedMean { alpha }, m, None),
                        uni_chart(UniStatistic::TrimmedSe { alpha }, s, None),
                    ],
                    cutvalue: None,
                    pooled: None,
                    distribution: None,
                })
            }
            ChartRecipe::Ewma { params } => {
                let (n, groups) = univariate_groups(phase1)?;
                if groups.len() < 2 {
                    return Err(SpcError::InsufficientData("need at least 2 Phase-I subgroups".into()));
                }
                let mu0 = mean(&groups.iter().map(|g| mean(g)).collect::<Vec<_>>());
                let s_bar = mean(&groups.iter().map(|g| std_dev(g)).collect::<Vec<_>>());
                let limits = ewma_limits(mu0, s_bar / (n as f64).sqrt(), params)?;
                let ewma = UniEwma { lambda: params.lambda, start: mu0, value: mu0 };
                Ok(FittedChart::single(uni_chart(UniStatistic::Mean, limits, Some(ewma))))
            }
            ChartRecipe::TrimmedEwma { params, alpha } => {
                let (_, groups) = univariate_groups(phase1)?;
                if groups.len() < 2 {
                    return Err(SpcError::InsufficientData("need at least 2 Phase-I subgroups".into()));
                }
                let means = groups
                    .iter()
                    .map(|g| trimmed_mean(g, alpha, DenominatorMode::RetainedCount))
                    .collect::<Result<Vec<_>>>()?;
                let ses =
                    groups.iter().map(|g| trimmed_se(g, alpha)).collect::<Result<Vec<_>>>()?;
                let mu0 = mean(&means);
                let limits = ewma_limits(mu0, mean(&ses), params)?;
                let ewma = UniEwma { lambda: params.lambda, start: mu0, value: mu0 };
                Ok(FittedChart::single(uni_chart(
                    UniStatistic::TrimmedMean { alpha },
                    limits,
                    Some(ewma),
                )))
            }
            ChartRecipe::HotellingT2 { bootstrap } => {
                self.fit_tau(phase1, MvEstimator::Classical, None, bootstrap, seed)
            }
            ChartRecipe::TauSquared { depth, trim, bootstrap } => {
                let (est, cut) = Self::estimator(phase1, depth, trim)?;
                self.fit_tau(phase1, est, Some(cut), bootstrap, seed)
            }
            ChartRecipe::Mewma { lambda, sz_factor, bootstrap } => self.fit_psi(
                phase1,
                MvEstimator::Classical,
                None,
                lambda,
                sz_factor,
                bootstrap,
                seed,
            ),
            ChartRecipe::PsiSquared { depth, trim, lambda, sz_factor, bootstrap } => {
                let (est, cut) = Self::estimator(phase1, depth, trim)?;
                self.fit_psi(phase1, est, Some(cut), lambda, sz_factor, bootstrap, seed)
            }
            ChartRecipe::CalibrationProbe { q } => {
                if !(q > 0.0 && q <= 0.5) {
                    return Err(invalid(format!("probe probability {q} outside (0, 0.5]")));
                }
                let limits = ControlLimits::new(q, 0.5, 1.0)?;
                Ok(FittedChart::single(uni_chart(UniStatistic::UniformScore, limits, None)))
            }
        }
    }

    fn fit_tau(
        &self,
        phase1: &[PointCloud],
        estimator: MvEstimator,
        cutvalue: Option<CutValue>,
        settings: BootstrapSettings,
        seed: u64,
    ) -> Result<FittedChart> {
        let plan = BootstrapPlan::tau(settings.resamples, seed, estimator);
        let boot = bootstrap_tau(phase1, &plan)?;
        let limits = quadratic_limits(&boot.distribution, settings.quantile)?;
        let chart = Chart::Multivariate(MvChart {
            estimator,
            center: boot.grand_mean.clone(),
            dispersion: boot.mean_dispersion.clone(),
            limits,
            ewma: None,
            sample_count: 0,
        });
        Ok(FittedChart {
            charts: vec![chart],
            cutvalue,
            pooled: Some(PooledEstimates {
                grand_mean: boot.grand_mean,
                mean_dispersion: boot.mean_dispersion,
            }),
            distribution: Some(boot.distribution),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn fit_psi(
        &self,
        phase1: &[PointCloud],
        estimator: MvEstimator,
        cutvalue: Option<CutValue>,
        lambda: f64,
        sz_factor: SzFactor,
        settings: BootstrapSettings,
        seed: u64,
    ) -> Result<FittedChart> {
        let plan = BootstrapPlan::psi(settings.resamples, seed, estimator, lambda, sz_factor);
        let boot = bootstrap_psi(phase1, &plan)?;
        let limits = quadratic_limits(&boot.distribution, settings.quantile)?;
        let chart = Chart::Multivariate(MvChart {
            estimator,
            center: boot.z_mean.clone(),
            dispersion: boot.s_z.clone(),
            limits,
            ewma: Some(MvEwma {
                lambda,
                start: boot.grand_mean.clone(),
                value: boot.grand_mean.clone(),
            }),
            sample_count: 0,
        });
        Ok(FittedChart {
            charts: vec![chart],
            cutvalue,
            pooled: Some(PooledEstimates {
                grand_mean: boot.grand_mean,
                mean_dispersion: boot.mean_dispersion,
            }),
            distribution: Some(boot.distribution),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_groups(count: usize, n: usize, seed: u64) -> Vec<PointCloud> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                PointCloud::univariate(v).unwrap()
            })
            .collect()
    }

    fn shifted(groups: &[PointCloud], f: impl Fn(f64) -> f64) -> Vec<PointCloud> {
        groups
            .iter()
            .map(|g| PointCloud::univariate(g.coords().iter().map(|&v| f(v)).collect()).unwrap())
            .collect()
    }

    #[test]
    fn c4_values() {
        assert!((c4(2) - 0.7979).abs() < 1e-4);
        assert!((c4(20) - 0.9869).abs() < 1e-4);
    }

    #[test]
    fn classic_limits_constant_data() {
        let groups = vec![PointCloud::univariate(vec![2.5; 5]).unwrap(); 4];
        let (m, s) = shewhart_limits_classic(&groups).unwrap();
        assert_eq!((m.lcl, m.center, m.ucl), (2.5, 2.5, 2.5));
        assert_eq!(s.center, 0.0);
    }

    #[test]
    fn classic_limits_normal_data() {
        let groups = normal_groups(80, 20, 11);
        let (m, s) = shewhart_limits_classic(&groups).unwrap();
        let s_bar = s.center;
        assert!((m.ucl - m.center - 3.0 * s_bar / 20f64.sqrt()).abs() < 1e-12);
        assert!((m.ucl - 0.671).abs() < 0.06, "{m:?}");
        assert!(m.center.abs() < 0.1);
        let moved = shewhart_limits_classic(&shifted(&groups, |v| v + 5.0)).unwrap().0;
        assert!((moved.center - m.center - 5.0).abs() < 1e-12);
        assert!((moved.ucl - m.ucl - 5.0).abs() < 1e-12);
    }

    #[test]
    fn classic_limits_reject_ragged_groups() {
        let groups = vec![
            PointCloud::univariate(vec![1.0, 2.0, 3.0]).unwrap(),
            PointCloud::univariate(vec![1.0, 2.0]).unwrap(),
        ];
        assert!(matches!(
            shewhart_limits_classic(&groups),
            Err(SpcError::HeterogeneousSubgroups { .. })
        ));
    }

    #[test]
    fn trimmed_limits() {
        let groups = normal_groups(80, 20, 5);
        let alpha = TrimProportion::new(0.1).unwrap();
        let (m, s) = shewhart_limits_trimmed(&groups, alpha, 0.05).unwrap();
        let means: Vec<f64> = groups
            .iter()
            .map(|g| trimmed_mean(g.coords(), alpha, DenominatorMode::RetainedCount).unwrap())
            .collect();
        let sd = std_dev(&means);
        assert!((m.ucl - m.center - 1.6448536269514729 * sd).abs() < 1e-9);
        assert!(s.lcl < s.center && s.center < s.ucl);

        let (m5, s5) = shewhart_limits_trimmed(&groups, alpha, 0.5).unwrap();
        assert_eq!(m5.lcl, m5.ucl);
        assert_eq!(s5.lcl, s5.ucl);

        let scaled = shewhart_limits_trimmed(&shifted(&groups, |v| 2.5 * v), alpha, 0.05).unwrap().0;
        assert!((scaled.ucl - 2.5 * m.ucl).abs() < 1e-9);
        assert!((scaled.lcl - 2.5 * m.lcl).abs() < 1e-9);

        assert!(shewhart_limits_trimmed(&groups[..20], alpha, 0.05).is_err());
    }

    #[test]
    fn ewma_update_examples() {
        let mut z = [3.0];
        ewma_update(&mut z, &[7.0], 1.0);
        assert_eq!(z, [7.0]);
        let mut z = [0.0];
        ewma_update(&mut z, &[1.0], 0.2);
        assert_eq!(z, [0.2]);
        let mut z = [4.0, -1.0];
        ewma_update(&mut z, &[4.0, -1.0], 0.3);
        assert_eq!(z, [4.0, -1.0]);
    }

    #[test]
    fn ewma_limits_examples() {
        let l = ewma_limits(0.0, 1.0, EwmaParams::new(0.25, 3.0).unwrap()).unwrap();
        assert!((l.ucl - 1.1338934190276817).abs() < 1e-12);
        assert!((l.lcl + 1.1338934190276817).abs() < 1e-12);
        let one = ewma_limits(2.0, 0.5, EwmaParams::new(1.0, 3.0).unwrap()).unwrap();
        assert!((one.ucl - 3.5).abs() < 1e-15);
        let flat = ewma_limits(1.0, 0.0, EwmaParams::new(0.2, 3.0).unwrap()).unwrap();
        assert_eq!((flat.lcl, flat.center, flat.ucl), (1.0, 1.0, 1.0));
        assert!(EwmaParams::new(0.0, 3.0).is_err());
        assert!(EwmaParams::new(1.2, 3.0).is_err());
    }

    #[test]
    fn boundary_is_in_control() {
        let limits = ControlLimits::new(-1.0, 0.0, 1.0).unwrap();
        assert!(limits.contains(1.0));
        assert!(limits.contains(-1.0));
        assert!(!limits.contains(1.0 + 1e-15));
        let mut chart = uni_chart(UniStatistic::Mean, limits, None);
        let g = PointCloud::univariate(vec![0.5, 1.5]).unwrap();
        assert!(chart.observe(&g).unwrap().in_control);
    }

    #[test]
    fn big_shift_signals_immediately() {
        let fitted = ChartRecipe::KnownShewhart { mean: 0.0, sigma: 1.0, k: 3.0, n: 5 }
            .fit(&[], 0)
            .unwrap();
        let mut chart = fitted.primary().clone();
        let stream = shifted(&normal_groups(10, 5, 2), |v| v + 10.0);
        let verdicts: Vec<_> = monitor(&mut chart, &stream).map(|v| v.unwrap()).collect();
        assert!(!verdicts[0].in_control);
        assert_eq!(run_length(verdicts, 100), RunLength::Signal(1));
    }

    #[test]
    fn run_length_censoring() {
        let ok = MonitorVerdict { statistic: 0.0, in_control: true };
        assert_eq!(run_length(std::iter::repeat_n(ok, 50), 20), RunLength::Censored(20));
        let bad = MonitorVerdict { statistic: 9.0, in_control: false };
        assert_eq!(run_length([ok, ok, bad], 20), RunLength::Signal(3));
    }

    #[test]
    fn ewma_recursion_closed_form() {
        let params = EwmaParams::new(0.3, 3.0).unwrap();
        let limits = ewma_limits(0.0, 100.0, params).unwrap();
        let mut chart = uni_chart(
            UniStatistic::Mean,
            limits,
            Some(UniEwma { lambda: 0.3, start: 2.0, value: 2.0 }),
        );
        let g = PointCloud::univariate(vec![-1.0, -1.0]).unwrap();
        for k in 1..=12 {
            chart.observe(&g).unwrap();
            let expected = -1.0 + 0.7f64.powi(k) * 3.0;
            assert!((chart.ewma_value().unwrap()[0] - expected).abs() < 1e-12);
        }
        assert_eq!(chart.sample_count(), 12);
        chart.reset();
        assert_eq!(chart.ewma_value().unwrap(), vec![2.0]);
    }

    #[test]
    fn univariate_chart_rejects_vectors() {
        let mut chart = uni_chart(UniStatistic::Mean, ControlLimits::new(-1., 0., 1.).unwrap(), None);
        let g = PointCloud::from_points(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!(matches!(chart.observe(&g), Err(SpcError::DimensionMismatch { .. })));
    }

    #[test]
    fn joint_scaling_preserves_verdicts() {
        let phase1 = normal_groups(40, 10, 8);
        let stream = normal_groups(200, 10, 9);
        let alpha = TrimProportion::new(0.1).unwrap();
        let recipes = [
            ChartRecipe::Shewhart,
            ChartRecipe::TrimmedShewhart { alpha, tail_prob: 0.01 },
            ChartRecipe::Ewma { params: EwmaParams::new(0.2, 2.0).unwrap() },
            ChartRecipe::TrimmedEwma { params: EwmaParams::new(0.2, 2.0).unwrap(), alpha },
        ];
        for recipe in recipes {
            let mut a = recipe.fit(&phase1, 0).unwrap().primary().clone();
            let mut b = recipe.fit(&shifted(&phase1, |v| 4.0 * v), 0).unwrap().primary().clone();
            let scaled = shifted(&stream, |v| 4.0 * v);
            let va: Vec<bool> = monitor(&mut a, &stream).map(|v| v.unwrap().in_control).collect();
            let vb: Vec<bool> = monitor(&mut b, &scaled).map(|v| v.unwrap().in_control).collect();
            assert_eq!(va, vb, "{}", recipe.family());
        }
    }

    #[test]
    fn limits_widen_with_l() {
        let mut prev: Option<ControlLimits> = None;
        for l in [1.0, 2.0, 3.0, 4.0] {
            let lim = ewma_limits(1.0, 0.4, EwmaParams::new(0.25, l).unwrap()).unwrap();
            if let Some(p) = prev {
                assert!(lim.ucl > p.ucl && lim.lcl < p.lcl && lim.center == p.center);
            }
            prev = Some(lim);
        }
    }
}
