//! TOML run configuration.
//!
//! ```toml
//! [chart]
//! family = "tau2"
//! depth = "spatial"
//! trim_fraction = 0.1
//! resamples = 1000
//! seed = 7
//!
//! [simulate]
//! seed = 1
//! replications = 500
//!
//! [[simulate.scenario]]
//! name = "n20-outlier"
//! n = 20
//! mean = [0.0, 0.0]
//! covariance = [[1.0, 0.3], [0.3, 1.2]]
//! shift = [0.0, 0.0]
//! outliers = { count = 1, shift = [5.0, 5.0] }
//!
//! [[simulate.recipe]]
//! name = "tau2-spatial"
//! family = "tau2"
//! depth = "spatial"
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bootstrap::SzFactor;
use crate::charts::{BootstrapSettings, ChartRecipe, EwmaParams, TrimRule};
use crate::depth::{CutValue, DepthKind};
use crate::error::{Result, SpcError, invalid};
use crate::robust_stats::TrimProportion;
use crate::simulate::{OutlierSpec, Scenario};

pub const FAMILIES: [&str; 10] = [
    "shewhart",
    "known-shewhart",
    "trimmed-shewhart",
    "ewma",
    "trimmed-ewma",
    "t2",
    "tau2",
    "mewma",
    "psi2",
    "probe",
];

/// Flat chart settings; unset fields take family defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    pub family: Option<String>,
    pub alpha: Option<f64>,
    pub tail_prob: Option<f64>,
    pub lambda: Option<f64>,
    #[serde(rename = "L")]
    pub l: Option<f64>,
    /// Known process mean and sigma for `known-shewhart`.
    pub mean: Option<f64>,
    pub sigma: Option<f64>,
    pub k: Option<f64>,
    pub n: Option<usize>,
    pub depth: Option<DepthKind>,
    pub trim_fraction: Option<f64>,
    pub cutvalue: Option<f64>,
    pub quantile: Option<f64>,
    pub resamples: Option<usize>,
    pub seed: Option<u64>,
    pub sz_factor: Option<SzFactor>,
    pub q: Option<f64>,
}

impl ChartConfig {
    /// Fill every unset field of `self` from `base`.
    pub fn or(self, base: &ChartConfig) -> ChartConfig {
        ChartConfig {
            family: self.family.or_else(|| base.family.clone()),
            alpha: self.alpha.or(base.alpha),
            tail_prob: self.tail_prob.or(base.tail_prob),
            lambda: self.lambda.or(base.lambda),
            l: self.l.or(base.l),
            mean: self.mean.or(base.mean),
            sigma: self.sigma.or(base.sigma),
            k: self.k.or(base.k),
            n: self.n.or(base.n),
            depth: self.depth.or(base.depth),
            trim_fraction: self.trim_fraction.or(base.trim_fraction),
            cutvalue: self.cutvalue.or(base.cutvalue),
            quantile: self.quantile.or(base.quantile),
            resamples: self.resamples.or(base.resamples),
            seed: self.seed.or(base.seed),
            sz_factor: self.sz_factor.or(base.sz_factor),
            q: self.q.or(base.q),
        }
    }

    pub fn family(&self) -> Result<&str> {
        self.family.as_deref().ok_or_else(|| invalid("chart family is not set"))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    fn alpha(&self) -> Result<TrimProportion> {
        TrimProportion::new(self.alpha.unwrap_or(0.1))
    }

    fn ewma(&self) -> Result<EwmaParams> {
        EwmaParams::new(self.lambda.unwrap_or(0.2), self.l.unwrap_or(3.0))
    }

    fn trim(&self) -> Result<TrimRule> {
        match (self.cutvalue, self.trim_fraction) {
            (Some(_), Some(_)) => Err(invalid("set either cutvalue or trim_fraction, not both")),
            (Some(c), None) => Ok(TrimRule::Cut(CutValue::new(c)?)),
            (None, f) => {
                let f = f.unwrap_or(0.1);
                if !(f > 0.0 && f < 0.5) {
                    return Err(invalid(format!("trim fraction {f} outside (0, 0.5)")));
                }
                Ok(TrimRule::Fraction(f))
            }
        }
    }

    fn bootstrap(&self) -> Result<BootstrapSettings> {
        let s = BootstrapSettings {
            resamples: self.resamples.unwrap_or(1000),
            quantile: self.quantile.unwrap_or(0.9),
        };
        if s.resamples == 0 {
            return Err(invalid("resamples must be positive"));
        }
        if !(s.quantile > 0.0 && s.quantile < 1.0) {
            return Err(invalid(format!("bootstrap quantile {} outside (0, 1)", s.quantile)));
        }
        Ok(s)
    }

    fn mv_lambda(&self) -> Result<f64> {
        let lambda = self.lambda.unwrap_or(0.25);
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(invalid(format!("EWMA lambda {lambda} outside (0, 1)")));
        }
        Ok(lambda)
    }

    /// The chart recipe this configuration names.
    pub fn recipe(&self) -> Result<ChartRecipe> {
        let tail_prob = self.tail_prob.unwrap_or(0.05);
        let recipe = match self.family()? {
            "shewhart" => ChartRecipe::Shewhart,
            "known-shewhart" => ChartRecipe::KnownShewhart {
                mean: self.mean.unwrap_or(0.0),
                sigma: self.sigma.unwrap_or(1.0),
                k: self.k.unwrap_or(3.0),
                n: self.n.ok_or_else(|| invalid("known-shewhart needs the subgroup size n"))?,
            },
            "trimmed-shewhart" => {
                ChartRecipe::TrimmedShewhart { alpha: self.alpha()?, tail_prob }
            }
            "ewma" => ChartRecipe::Ewma { params: self.ewma()? },
            "trimmed-ewma" => ChartRecipe::TrimmedEwma { params: self.ewma()?, alpha: self.alpha()? },
            "t2" => ChartRecipe::HotellingT2 { bootstrap: self.bootstrap()? },
            "tau2" => ChartRecipe::TauSquared {
                depth: self.depth.unwrap_or(DepthKind::Spatial),
                trim: self.trim()?,
                bootstrap: self.bootstrap()?,
            },
            "mewma" => ChartRecipe::Mewma {
                lambda: self.mv_lambda()?,
                sz_factor: self.sz_factor.unwrap_or_default(),
                bootstrap: self.bootstrap()?,
            },
            "psi2" => ChartRecipe::PsiSquared {
                depth: self.depth.unwrap_or(DepthKind::Spatial),
                trim: self.trim()?,
                lambda: self.mv_lambda()?,
                sz_factor: self.sz_factor.unwrap_or_default(),
                bootstrap: self.bootstrap()?,
            },
            "probe" => ChartRecipe::CalibrationProbe { q: self.q.unwrap_or(0.01) },
            other => {
                return Err(invalid(format!(
                    "unknown chart family {other:?}; expected one of {}",
                    FAMILIES.join(", ")
                )));
            }
        };
        Ok(recipe)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub n: usize,
    #[serde(default)]
    pub mean: Option<Vec<f64>>,
    #[serde(default)]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub shift: Option<Vec<f64>>,
    #[serde(default)]
    pub outliers: Option<OutlierSpec>,
    #[serde(default)]
    pub phase1_count: Option<usize>,
}

/// A named chart configuration; `name` sits alongside the chart keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "toml::Table")]
pub struct RecipeConfig {
    pub name: String,
    #[serde(flatten)]
    pub chart: ChartConfig,
}

impl TryFrom<toml::Table> for RecipeConfig {
    type Error = String;

    fn try_from(mut table: toml::Table) -> std::result::Result<Self, String> {
        let name = match table.remove("name") {
            Some(toml::Value::String(s)) => s,
            Some(_) => return Err("recipe name must be a string".into()),
            None => return Err("recipe needs a name".into()),
        };
        let chart = ChartConfig::deserialize(table).map_err(|e| format!("recipe {name:?}: {e}"))?;
        Ok(Self { name, chart })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub phase2_cap: Option<usize>,
    /// Emit QQ plot-point files for simulated trimmed means and `S_t²`.
    #[serde(default)]
    pub qq: bool,
    pub qq_subgroups: Option<usize>,
    pub qq_n: Option<usize>,
    pub qq_alpha: Option<f64>,
    #[serde(default)]
    pub scenario: Vec<ScenarioConfig>,
    #[serde(default)]
    pub recipe: Vec<RecipeConfig>,
}

impl SimulateConfig {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn scenarios(&self) -> Result<Vec<(String, Scenario)>> {
        if self.scenario.is_empty() {
            return Err(invalid("simulation grid has no scenarios"));
        }
        self.scenario
            .iter()
            .map(|c| {
                let mean = c.mean.clone().unwrap_or_else(|| vec![0.0]);
                let p = mean.len();
                let covariance = c.covariance.clone().unwrap_or_else(|| {
                    (0..p).map(|i| (0..p).map(|j| f64::from(u8::from(i == j))).collect()).collect()
                });
                let s = Scenario {
                    shift: c.shift.clone().unwrap_or_else(|| vec![0.0; p]),
                    mean,
                    covariance,
                    outliers: c.outliers.clone(),
                    n: c.n,
                    phase1_count: c.phase1_count,
                    phase2_cap: self.phase2_cap.unwrap_or(10_000),
                    replications: self.replications.unwrap_or(500),
                    seed: self.seed(),
                };
                s.validate().map_err(|e| invalid(format!("scenario {:?}: {e}", c.name)))?;
                Ok((c.name.clone(), s))
            })
            .collect()
    }

    pub fn recipes(&self, base: &ChartConfig) -> Result<Vec<(String, ChartRecipe)>> {
        if self.recipe.is_empty() {
            // Fall back to the [chart] table as the only recipe.
            let family = base
                .family()
                .map_err(|_| invalid("simulation grid has no recipes and [chart] has no family"))?;
            return Ok(vec![(family.to_string(), base.recipe()?)]);
        }
        self.recipe
            .iter()
            .map(|r| {
                let recipe = r
                    .chart
                    .clone()
                    .or(base)
                    .recipe()
                    .map_err(|e| invalid(format!("recipe {:?}: {e}", r.name)))?;
                Ok((r.name.clone(), recipe))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub chart: ChartConfig,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() as u64 + 1);
            SpcError::Parse { line, message: e.message().to_string() }
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SpcError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Hex SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_module_doc_example() {
        let text = r#"
[chart]
family = "tau2"
depth = "spatial"
trim_fraction = 0.1
resamples = 1000
seed = 7

[simulate]
seed = 1
replications = 500

[[simulate.scenario]]
name = "n20-outlier"
n = 20
mean = [0.0, 0.0]
covariance = [[1.0, 0.3], [0.3, 1.2]]
shift = [0.0, 0.0]
outliers = { count = 1, shift = [5.0, 5.0] }

[[simulate.recipe]]
name = "tau2-spatial"
family = "tau2"
depth = "spatial"
"#;
        let cfg = RunConfig::from_toml(text).unwrap();
        assert!(matches!(cfg.chart.recipe().unwrap(), ChartRecipe::TauSquared { .. }));
        let sim = cfg.simulate.as_ref().unwrap();
        let sc = sim.scenarios().unwrap();
        assert_eq!(sc[0].1.outliers.as_ref().unwrap().scale, 1.0);
        assert_eq!(sim.recipes(&cfg.chart).unwrap().len(), 1);
        assert_eq!(cfg.hash(), RunConfig::from_toml(text).unwrap().hash());
    }

    #[test]
    fn rejects_unknown_keys_and_families() {
        assert!(matches!(
            RunConfig::from_toml("[chart]\nfamly = \"ewma\"\n"),
            Err(SpcError::Parse { line: 2, .. })
        ));
        let bad_recipe = "[simulate]\n[[simulate.recipe]]\nname = \"a\"\nfamly = \"ewma\"\n";
        assert!(RunConfig::from_toml(bad_recipe).is_err());
        let cfg = RunConfig::from_toml("[chart]\nfamily = \"cusum\"\n").unwrap();
        assert!(cfg.chart.recipe().is_err());
        let both = ChartConfig {
            family: Some("tau2".into()),
            cutvalue: Some(0.2),
            trim_fraction: Some(0.1),
            ..Default::default()
        };
        assert!(both.recipe().is_err());
    }

    #[test]
    fn overrides_win() {
        let base = ChartConfig { family: Some("ewma".into()), lambda: Some(0.1), ..Default::default() };
        let flags = ChartConfig { lambda: Some(0.3), ..Default::default() };
        let merged = flags.or(&base);
        assert_eq!(merged.family.as_deref(), Some("ewma"));
        assert_eq!(merged.lambda, Some(0.3));
    }

    #[test]
    fn every_family_builds() {
        for f in FAMILIES {
            let cfg = ChartConfig { family: Some(f.into()), n: Some(5), ..Default::default() };
            assert!(cfg.recipe().is_ok(), "{f}");
        }
    }
}
