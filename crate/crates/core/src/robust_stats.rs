//! Univariate robust estimators and distribution-fit diagnostics.
//!
//! The trimmed mean drops `t = floor(n·α + 0.4)` order statistics from each
//! end of the sample. Winsorization clamps the same `t` values at each end to
//! the nearest retained order statistic, and the winsorized standard
//! deviation feeds the Tukey standard error `s_w / ((1 − 2α)·√n)`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma, Normal};

use crate::error::{Result, SpcError, invalid};

/// Trimming proportion `α ∈ [0, 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TrimProportion(f64);

impl TrimProportion {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&alpha) {
            return Err(invalid(format!("trim proportion {alpha} outside [0, 0.5)")));
        }
        Ok(Self(alpha))
    }

    pub const fn untrimmed() -> Self {
        Self(0.0)
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for TrimProportion {
    type Error = SpcError;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TrimProportion> for f64 {
    fn from(a: TrimProportion) -> f64 {
        a.0
    }
}

/// How the trimmed sum is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorMode {
    /// Divide by the number of retained observations `n − 2t`.
    #[default]
    RetainedCount,
    /// Divide by `n·(1 − 2α)` exactly, even when `t ≠ n·α`.
    NominalFraction,
}

fn validate_sample(values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(SpcError::InsufficientData(format!(
            "sample of size {} (need at least 2)",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SpcError::NonFinite);
    }
    Ok(())
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Number of order statistics removed from each end: `floor(n·α + 0.4)`.
pub fn trim_count(n: usize, alpha: TrimProportion) -> Result<usize> {
    if n < 2 {
        return Err(SpcError::InsufficientData(format!("sample of size {n} (need at least 2)")));
    }
    // The epsilon absorbs representation error in products like 10 × 0.06.
    let t = (n as f64 * alpha.get() + 0.4 + 1e-12).floor() as usize;
    if n < 2 * t + 1 {
        return Err(SpcError::TrimTooLarge { n, trimmed: t });
    }
    Ok(t)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with divisor `n − 1`.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

pub fn std_dev(values: &[f64]) -> f64 {
    variance(values).sqrt()
}

pub fn trimmed_mean(values: &[f64], alpha: TrimProportion, mode: DenominatorMode) -> Result<f64> {
    validate_sample(values)?;
    let n = values.len();
    let t = trim_count(n, alpha)?;
    let s = sorted(values);
    let middle = &s[t..n - t];
    let total: f64 = middle.iter().sum();
    Ok(match mode {
        DenominatorMode::RetainedCount => total / middle.len() as f64,
        DenominatorMode::NominalFraction => total / (n as f64 * (1.0 - 2.0 * alpha.get())),
    })
}

/// Winsorized copy of the sample, in the original order.
///
/// Values below `x_(t+1)` are raised to it and values above `x_(n−t)` are
/// lowered to it, which replaces exactly the `t` extreme order statistics at
/// each end.
pub fn winsorize(values: &[f64], alpha: TrimProportion) -> Result<Vec<f64>> {
    validate_sample(values)?;
    let n = values.len();
    let t = trim_count(n, alpha)?;
    let s = sorted(values);
    let (lo, hi) = (s[t], s[n - 1 - t]);
    Ok(values.iter().map(|v| v.clamp(lo, hi)).collect())
}

pub fn winsorized_sd(values: &[f64], alpha: TrimProportion) -> Result<f64> {
    Ok(std_dev(&winsorize(values, alpha)?))
}

/// Standard error of the trimmed mean, `s_w / ((1 − 2α)·√n)`.
pub fn trimmed_se(values: &[f64], alpha: TrimProportion) -> Result<f64> {
    let sw = winsorized_sd(values, alpha)?;
    Ok(sw / ((1.0 - 2.0 * alpha.get()) * (values.len() as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub shape: f64,
    pub scale: f64,
}

impl GammaFit {
    pub fn distribution(&self) -> Gamma {
        Gamma::new(self.shape, 1.0 / self.scale).expect("validated shape and scale")
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.distribution().cdf(x)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.distribution().inverse_cdf(p)
    }
}

/// Method-of-moments gamma fit: `shape = m²/v`, `scale = v/m`.
pub fn fit_gamma(values: &[f64]) -> Result<GammaFit> {
    if values.len() < 10 {
        return Err(SpcError::InsufficientData(format!(
            "gamma fit needs at least 10 values, got {}",
            values.len()
        )));
    }
    if let Some(&bad) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(SpcError::NonPositive(bad));
    }
    let m = mean(values);
    let v = variance(values);
    if !(v > 0.0) {
        return Err(SpcError::ZeroVariance);
    }
    Ok(GammaFit { shape: m * m / v, scale: v / m })
}

/// Reference distribution for a QQ plot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QqReference {
    /// N(0, 1) against the raw values.
    StandardNormal,
    /// N(0, 1) against values standardized by their own mean and sd.
    FittedNormal,
    Gamma(GammaFit),
}

/// QQ pairs `(F⁻¹((i − 0.5)/m), v_(i))` over the sorted values.
pub fn qq_points(values: &[f64], reference: QqReference) -> Result<Vec<(f64, f64)>> {
    if values.len() < 10 {
        return Err(SpcError::InsufficientData(format!(
            "QQ plot needs at least 10 values, got {}",
            values.len()
        )));
    }
    let mut v = sorted(values);
    let m = v.len() as f64;
    let std_normal = Normal::standard();
    if let QqReference::FittedNormal = reference {
        let (mu, sd) = (mean(&v), std_dev(&v));
        if !(sd > 0.0) {
            return Err(SpcError::ZeroVariance);
        }
        v.iter_mut().for_each(|x| *x = (*x - mu) / sd);
    }
    Ok(v.into_iter()
        .enumerate()
        .map(|(i, x)| {
            let p = (i as f64 + 0.5) / m;
            let q = match reference {
                QqReference::StandardNormal | QqReference::FittedNormal => {
                    std_normal.inverse_cdf(p)
                }
                QqReference::Gamma(fit) => fit.quantile(p),
            };
            (q, x)
        })
        .collect())
}

/// One-sample Kolmogorov–Smirnov statistic `sup |F_m(x) − F(x)|`.
pub fn ks_statistic(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let v = sorted(values);
    let m = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let below = f - i as f64 / m;
            let above = (i as f64 + 1.0) / m - f;
            below.max(above)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of a KS statistic `d` from `m` observations, using the
/// Stephens small-sample correction of the Kolmogorov argument.
pub fn ks_p_value(d: f64, m: usize) -> f64 {
    let sm = (m as f64).sqrt();
    let lambda = (sm + 0.12 + 0.11 / sm) * d;
    kolmogorov_survival(lambda)
}

fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form of the CDF converges fast for small arguments.
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda
            * (1..=20)
                .map(|k| {
                    let j = (2 * k - 1) as f64;
                    (-j * j * c).exp()
                })
                .sum::<f64>();
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let k = k as f64;
                let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(v: f64) -> TrimProportion {
        TrimProportion::new(v).unwrap()
    }

    fn one_to_ten() -> Vec<f64> {
        (1..=10).map(f64::from).collect()
    }

    #[test]
    fn trim_count_examples() {
        assert_eq!(trim_count(10, a(0.10)).unwrap(), 1);
        assert_eq!(trim_count(20, a(0.20)).unwrap(), 4);
        assert_eq!(trim_count(12, a(0.10)).unwrap(), 1);
        assert_eq!(trim_count(20, a(0.10)).unwrap(), 2);
        assert_eq!(trim_count(5, a(0.0)).unwrap(), 0);
    }

    #[test]
    fn trim_count_rejects_total_trimming() {
        // floor(2·0.45 + 0.4) = 1 leaves 0 of 2
        assert!(matches!(trim_count(2, a(0.45)), Err(SpcError::TrimTooLarge { n: 2, trimmed: 1 })));
        assert!(trim_count(1, a(0.1)).is_err());
    }

    #[test]
    fn alpha_domain() {
        assert!(TrimProportion::new(0.5).is_err());
        assert!(TrimProportion::new(-0.01).is_err());
        assert!(TrimProportion::new(f64::NAN).is_err());
        assert!(TrimProportion::new(0.0).is_ok());
    }

    #[test]
    fn trimmed_mean_examples() {
        let rc = DenominatorMode::RetainedCount;
        assert_eq!(trimmed_mean(&one_to_ten(), a(0.1), rc).unwrap(), 5.5);
        let mut x = one_to_ten();
        x[9] = 100.0;
        assert_eq!(trimmed_mean(&x, a(0.1), rc).unwrap(), 5.5);
        let c = vec![3.25; 13];
        assert_eq!(trimmed_mean(&c, a(0.2), rc).unwrap(), 3.25);
    }

    #[test]
    fn nominal_fraction_denominator() {
        let x = [0.3, -1.2, 2.5, 0.9, 1.1, -0.4, 0.0, 3.3, -2.2, 0.7, 1.9, -0.8];
        let mut s = x.to_vec();
        s.sort_by(f64::total_cmp);
        let expected = s[1..11].iter().sum::<f64>() / 9.6;
        let got = trimmed_mean(&x, a(0.1), DenominatorMode::NominalFraction).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn winsorize_examples() {
        assert_eq!(
            winsorize(&one_to_ten(), a(0.1)).unwrap(),
            vec![2., 2., 3., 4., 5., 6., 7., 8., 9., 9.]
        );
        let x = [-100., 0., 1., 2., 3., 4., 5., 6., 7., 200.];
        assert_eq!(trim_count(10, a(0.2)).unwrap(), 2);
        assert_eq!(winsorize(&x, a(0.2)).unwrap(), vec![1., 1., 1., 2., 3., 4., 5., 6., 6., 6.]);
        let c = vec![7.0; 9];
        assert_eq!(winsorize(&c, a(0.2)).unwrap(), c);
    }

    #[test]
    fn winsorize_keeps_positions() {
        let x = [9.0, 1.0, 5.0, 3.0, 10.0, 2.0, 4.0, 8.0, 6.0, 7.0];
        assert_eq!(
            winsorize(&x, a(0.1)).unwrap(),
            vec![9.0, 2.0, 5.0, 3.0, 9.0, 2.0, 4.0, 8.0, 6.0, 7.0]
        );
    }

    #[test]
    fn winsorized_sd_matches_direct_computation() {
        let w = [2., 2., 3., 4., 5., 6., 7., 8., 9., 9.];
        let m = w.iter().sum::<f64>() / 10.0;
        let direct = (w.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 9.0).sqrt();
        assert!((winsorized_sd(&one_to_ten(), a(0.1)).unwrap() - direct).abs() < 1e-14);
        assert_eq!(winsorized_sd(&[4.0; 10], a(0.1)).unwrap(), 0.0);
    }

    #[test]
    fn trimmed_se_cases() {
        assert_eq!(trimmed_se(&[1.5; 20], a(0.1)).unwrap(), 0.0);
        let x: Vec<f64> = (0..15).map(|i| ((i * 7) % 11) as f64 * 0.3).collect();
        let classical = std_dev(&x) / (15f64).sqrt();
        assert!((trimmed_se(&x, a(0.0)).unwrap() - classical).abs() < 1e-15);
        let sw = winsorized_sd(&x, a(0.1)).unwrap();
        assert!((trimmed_se(&x, a(0.1)).unwrap() - sw / (0.8 * 15f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn gamma_moment_fit() {
        // mean 4, variance 2 (divisor n − 1)
        let d = (2.0f64 * 9.0 / 10.0).sqrt();
        let mut v = vec![4.0 - d; 5];
        v.extend(vec![4.0 + d; 5]);
        let fit = fit_gamma(&v).unwrap();
        assert!((fit.shape - 8.0).abs() < 1e-12);
        assert!((fit.scale - 0.5).abs() < 1e-12);
        assert_eq!(fit_gamma(&[2.0; 12]), Err(SpcError::ZeroVariance));
        let mut neg = vec![1.0; 12];
        neg[3] = -1.0;
        assert!(matches!(fit_gamma(&neg), Err(SpcError::NonPositive(_))));
        assert!(fit_gamma(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn qq_identity_for_exact_quantiles() {
        let n = Normal::standard();
        let m = 50;
        let vals: Vec<f64> = (0..m).map(|i| n.inverse_cdf((i as f64 + 0.5) / m as f64)).collect();
        for (q, v) in qq_points(&vals, QqReference::StandardNormal).unwrap() {
            assert!((q - v).abs() < 1e-12);
        }
        let mut rev = vals.clone();
        rev.reverse();
        assert_eq!(
            qq_points(&rev, QqReference::FittedNormal).unwrap(),
            qq_points(&vals, QqReference::FittedNormal).unwrap()
        );
    }

    #[test]
    fn ks_p_value_behaves() {
        assert!(ks_p_value(0.0, 100) == 1.0);
        // Critical value at 5%: 1.358 / √m (asymptotic).
        let p = kolmogorov_survival(1.358);
        assert!((p - 0.05).abs() < 1e-3, "{p}");
        let p = kolmogorov_survival(1.0);
        assert!((p - 0.27).abs() < 1e-2, "{p}");
        let p = kolmogorov_survival(1.62762);
        assert!((p - 0.01).abs() < 1e-3, "{p}");
    }
}
