//! Monte Carlo run-length estimation.
//!
//! Each replication draws clean Phase-I subgroups, fits the recipe, then
//! monitors Phase-II subgroups (mean shift plus optional outliers) until the
//! first signal or the cap. Replication `r` of a cell uses a ChaCha8 stream
//! seeded with the cell seed and stream number `r`, so results do not depend
//! on thread count or scheduling.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charts::{ChartRecipe, RunLength};
use crate::cloud::PointCloud;
use crate::error::{Result, SpcError, invalid};

/// Multivariate normal `N(mean, L Lᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
}

impl Gaussian {
    pub fn new(mean: &[f64], covariance: &[Vec<f64>]) -> Result<Self> {
        let p = mean.len();
        if p == 0 {
            return Err(invalid("empty mean vector"));
        }
        if covariance.len() != p || covariance.iter().any(|r| r.len() != p) {
            return Err(SpcError::DimensionMismatch { expected: p, found: covariance.len() });
        }
        let cov = DMatrix::from_fn(p, p, |i, j| covariance[i][j]);
        if (0..p).any(|i| (0..p).any(|j| (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12)) {
            return Err(invalid("covariance must be symmetric"));
        }
        let chol = nalgebra::Cholesky::new(cov)
            .ok_or_else(|| invalid("covariance must be positive definite"))?
            .l();
        Ok(Self { mean: DVector::from_column_slice(mean), chol })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn shifted(&self, delta: &[f64]) -> Self {
        Self { mean: &self.mean + DVector::from_column_slice(delta), chol: self.chol.clone() }
    }

    /// `mean + scale · L z` with `z` standard normal.
    fn draw_scaled<R: Rng + ?Sized>(&self, offset: &[f64], scale: f64, rng: &mut R, out: &mut [f64]) {
        let p = self.dim();
        let z = DVector::from_fn(p, |_, _| StandardNormal.sample(rng));
        let v = &self.chol * z;
        for i in 0..p {
            out[i] = self.mean[i] + offset[i] + scale * v[i];
        }
    }

    pub fn sample_cloud<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PointCloud {
        let p = self.dim();
        let zero = vec![0.0; p];
        let mut coords = vec![0.0; n * p];
        for row in coords.chunks_exact_mut(p) {
            self.draw_scaled(&zero, 1.0, rng, row);
        }
        PointCloud::new(p, coords).expect("finite draws")
    }
}

/// Outliers replace `count` distinct observations of a subgroup with draws
/// from `N(μ ± shift, scale² Σ)`, where `μ, Σ` are the current process
/// parameters and the sign is chosen with probability one half.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSpec {
    pub count: usize,
    pub shift: Vec<f64>,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

pub fn inject_outliers<R: Rng + ?Sized>(
    subgroup: &mut PointCloud,
    spec: &OutlierSpec,
    process: &Gaussian,
    rng: &mut R,
) -> Result<()> {
    if spec.count > subgroup.len() {
        return Err(invalid(format!(
            "{} outliers requested in a subgroup of {}",
            spec.count,
            subgroup.len()
        )));
    }
    if spec.shift.len() != subgroup.dim() || process.dim() != subgroup.dim() {
        return Err(SpcError::DimensionMismatch { expected: subgroup.dim(), found: spec.shift.len() });
    }
    let positions = sample_indices(rng, subgroup.len(), spec.count);
    for i in positions.iter() {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let offset: Vec<f64> = spec.shift.iter().map(|s| sign * s).collect();
        process.draw_scaled(&offset, spec.scale, rng, subgroup.point_mut(i));
    }
    Ok(())
}

fn default_phase2_cap() -> usize {
    10_000
}
fn default_replications() -> usize {
    500
}

/// One simulation cell's data-generating process and run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// Phase-II mean shift.
    pub shift: Vec<f64>,
    #[serde(default)]
    pub outliers: Option<OutlierSpec>,
    pub n: usize,
    /// Phase-I subgroup count; 80 univariate, 100 multivariate if unset.
    #[serde(default)]
    pub phase1_count: Option<usize>,
    #[serde(default = "default_phase2_cap")]
    pub phase2_cap: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    /// Standard normal observations with a Phase-II shift.
    pub fn univariate(n: usize, shift: f64) -> Self {
        Self {
            mean: vec![0.0],
            covariance: vec![vec![1.0]],
            shift: vec![shift],
            outliers: None,
            n,
            phase1_count: None,
            phase2_cap: default_phase2_cap(),
            replications: default_replications(),
            seed: 0,
        }
    }

    pub fn multivariate(mean: Vec<f64>, covariance: Vec<Vec<f64>>, shift: Vec<f64>, n: usize) -> Self {
        Self { mean, covariance, shift, ..Self::univariate(n, 0.0) }
    }

    pub fn with_outliers(mut self, spec: OutlierSpec) -> Self {
        self.outliers = Some(spec);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn phase1_count(&self) -> usize {
        self.phase1_count.unwrap_or(if self.dim() == 1 { 80 } else { 100 })
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dim();
        if self.shift.len() != p {
            return Err(SpcError::DimensionMismatch { expected: p, found: self.shift.len() });
        }
        if self.n < 2 {
            return Err(invalid("subgroup size must be at least 2"));
        }
        if self.replications == 0 || self.phase2_cap == 0 {
            return Err(invalid("replications and the Phase-II cap must be positive"));
        }
        if let Some(o) = &self.outliers {
            if o.count > self.n {
                return Err(invalid("more outliers than observations per subgroup"));
            }
            if o.shift.len() != p {
                return Err(SpcError::DimensionMismatch { expected: p, found: o.shift.len() });
            }
            if !(o.scale > 0.0) {
                return Err(invalid("outlier scale must be positive"));
            }
        }
        Gaussian::new(&self.mean, &self.covariance).map(|_| ())
    }

    /// Replication RNG: cell seed with stream number `replication`.
    pub fn rng(&self, replication: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replication);
        rng
    }
}

/// Samplers for one scenario's in-control and Phase-II processes.
#[derive(Debug, Clone)]
pub struct ScenarioSampler<'a> {
    scenario: &'a Scenario,
    in_control: Gaussian,
    shifted: Gaussian,
}

impl<'a> ScenarioSampler<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        scenario.validate()?;
        let in_control = Gaussian::new(&scenario.mean, &scenario.covariance)?;
        let shifted = in_control.shifted(&scenario.shift);
        Ok(Self { scenario, in_control, shifted })
    }

    pub fn phase1<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<PointCloud> {
        (0..self.scenario.phase1_count())
            .map(|_| self.in_control.sample_cloud(self.scenario.n, rng))
            .collect()
    }

    pub fn phase2<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PointCloud> {
        let mut g = self.shifted.sample_cloud(self.scenario.n, rng);
        if let Some(spec) = &self.scenario.outliers {
            inject_outliers(&mut g, spec, &self.shifted, rng)?;
        }
        Ok(g)
    }
}

/// Run one replication and return its run length.
pub fn simulate_run_length(
    recipe: &ChartRecipe,
    scenario: &Scenario,
    replication: u64,
) -> Result<RunLength> {
    let sampler = ScenarioSampler::new(scenario)?;
    run_one(recipe, &sampler, replication)
}

fn run_one(recipe: &ChartRecipe, sampler: &ScenarioSampler<'_>, replication: u64) -> Result<RunLength> {
    let scenario = sampler.scenario;
    let mut rng = scenario.rng(replication);
    let phase1 = if recipe.uses_phase1() { sampler.phase1(&mut rng) } else { Vec::new() };
    let boot_seed = rng.next_u64();
    let fitted = recipe.fit(&phase1, boot_seed)?;
    let mut chart = fitted.primary().clone();
    for i in 1..=scenario.phase2_cap {
        let g = sampler.phase2(&mut rng)?;
        if !chart.observe(&g)?.in_control {
            return Ok(RunLength::Signal(i));
        }
    }
    Ok(RunLength::Censored(scenario.phase2_cap))
}

/// Run-length summary for one cell.
///
/// `arl` is the mean of uncensored run lengths (the lower bound if every run
/// hit the cap); `arl_lower_bound` counts censored runs at the cap.
/// `sd_run_length` is the standard deviation of individual run lengths and
/// `se_arl` the standard error of `arl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLengthSummary {
    pub arl: f64,
    pub arl_lower_bound: f64,
    pub sd_run_length: f64,
    pub se_arl: f64,
    pub replications: usize,
    pub censored_count: usize,
    pub cap: usize,
    pub seed: u64,
}

impl RunLengthSummary {
    pub fn from_run_lengths(runs: &[RunLength], cap: usize, seed: u64) -> Result<Self> {
        if runs.is_empty() {
            return Err(SpcError::InsufficientData("no replications".into()));
        }
        let all: Vec<f64> = runs.iter().map(|r| r.value() as f64).collect();
        let done: Vec<f64> =
            runs.iter().filter(|r| !r.is_censored()).map(|r| r.value() as f64).collect();
        let lower = crate::robust_stats::mean(&all);
        let (arl, sd) = if done.is_empty() {
            (lower, 0.0)
        } else if done.len() == 1 {
            (done[0], 0.0)
        } else {
            (crate::robust_stats::mean(&done), crate::robust_stats::std_dev(&done))
        };
        let se = if done.is_empty() { 0.0 } else { sd / (done.len() as f64).sqrt() };
        Ok(Self {
            arl,
            arl_lower_bound: lower,
            sd_run_length: sd,
            se_arl: se,
            replications: runs.len(),
            censored_count: runs.len() - done.len(),
            cap,
            seed,
        })
    }
}

/// Per-replication run lengths, in replication order.
pub fn run_lengths(recipe: &ChartRecipe, scenario: &Scenario) -> Result<Vec<RunLength>> {
    let sampler = ScenarioSampler::new(scenario)?;
    if recipe.is_multivariate() != (scenario.dim() > 1) {
        return Err(SpcError::DimensionMismatch {
            expected: if recipe.is_multivariate() { 2 } else { 1 },
            found: scenario.dim(),
        });
    }
    (0..scenario.replications as u64)
        .into_par_iter()
        .map(|r| {
            run_one(recipe, &sampler, r)
                .map_err(|e| SpcError::Replication { replication: r as usize, source: Box::new(e) })
        })
        .collect()
}

pub fn estimate_arl(recipe: &ChartRecipe, scenario: &Scenario) -> Result<RunLengthSummary> {
    let runs = run_lengths(recipe, scenario)?;
    RunLengthSummary::from_run_lengths(&runs, scenario.phase2_cap, scenario.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub scenario_name: String,
    pub recipe_name: String,
    pub scenario: Scenario,
    pub recipe: ChartRecipe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub scenario: String,
    pub recipe: String,
    pub summary: RunLengthSummary,
}

/// Every scenario crossed with every recipe of matching dimension,
/// scenarios outermost.
pub fn grid(scenarios: &[(String, Scenario)], recipes: &[(String, ChartRecipe)]) -> Vec<TableCell> {
    scenarios
        .iter()
        .flat_map(|(sn, s)| {
            recipes
                .iter()
                .filter(|(_, r)| r.is_multivariate() == (s.dim() > 1))
                .map(move |(rn, r)| TableCell {
                scenario_name: sn.clone(),
                recipe_name: rn.clone(),
                scenario: s.clone(),
                recipe: r.clone(),
            })
        })
        .collect()
}

pub fn scenario_table(cells: &[TableCell]) -> Result<Vec<TableRow>> {
    cells
        .iter()
        .map(|c| {
            Ok(TableRow {
                scenario: c.scenario_name.clone(),
                recipe: c.recipe_name.clone(),
                summary: estimate_arl(&c.recipe, &c.scenario)?,
            })
        })
        .collect()
}
