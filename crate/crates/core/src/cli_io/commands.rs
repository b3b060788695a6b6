//! Command implementations. Each is a deterministic function of its
//! configuration and input files.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::artifact::{ChartArtifact, Provenance, TOOL_VERSION, ARTIFACT_FORMAT};
use super::config::RunConfig;
use super::ingest::Dataset;
use crate::cloud::PointCloud;
use crate::error::{Result, SpcError, invalid};
use crate::robust_stats::{
    DenominatorMode, QqReference, TrimProportion, fit_gamma, ks_p_value, ks_statistic, mean,
    qq_points, std_dev, trimmed_mean, trimmed_se,
};
use crate::simulate::{Gaussian, TableRow, grid, scenario_table};

fn io_err(path: &Path, e: impl std::fmt::Display) -> SpcError {
    SpcError::Io(format!("{}: {e}", path.display()))
}

pub fn cmd_phase1(config: &RunConfig, dataset: &Dataset) -> Result<ChartArtifact> {
    let recipe = config.chart.recipe()?;
    if recipe.is_multivariate() != (dataset.dim > 1) {
        let expected = if recipe.is_multivariate() { 2 } else { 1 };
        return Err(SpcError::DimensionMismatch { expected, found: dataset.dim });
    }
    let seed = config.chart.seed();
    let fitted = recipe.fit(&dataset.subgroups, seed)?;
    Ok(ChartArtifact {
        format: ARTIFACT_FORMAT.to_string(),
        family: recipe.family().to_string(),
        recipe,
        dim: dataset.dim,
        subgroup_size: dataset.subgroup_size(),
        phase1_subgroups: dataset.subgroups.len(),
        fitted,
        provenance: Provenance::new(config.hash(), seed),
    })
}

#[derive(Serialize)]
struct PointRecord<'a> {
    index: usize,
    subgroup_id: i64,
    chart: &'a str,
    statistic: f64,
    lcl: f64,
    ucl: f64,
    in_control: bool,
}

#[derive(Serialize)]
struct FaultRecord<'a> {
    index: usize,
    subgroup_id: i64,
    chart: &'a str,
    fault: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MonitorSummary {
    pub points: usize,
    pub signals: usize,
    pub faults: usize,
}

/// Stream one JSON object per subgroup and chart to `out`.
pub fn cmd_monitor<W: Write>(
    artifact: &ChartArtifact,
    dataset: &Dataset,
    out: &mut W,
) -> Result<MonitorSummary> {
    if dataset.dim != artifact.dim {
        return Err(SpcError::DimensionMismatch { expected: artifact.dim, found: dataset.dim });
    }
    let n = dataset.subgroup_size();
    if artifact.subgroup_size != 0 && n != artifact.subgroup_size {
        return Err(SpcError::HeterogeneousSubgroups { expected: artifact.subgroup_size, found: n });
    }
    let mut charts = artifact.fitted.charts.clone();
    let mut summary = MonitorSummary::default();
    for (index, (g, &id)) in dataset.subgroups.iter().zip(&dataset.ids).enumerate() {
        for chart in &mut charts {
            let name = chart.name();
            let limits = chart.limits();
            let line = match chart.observe(g) {
                Ok(v) => {
                    summary.points += 1;
                    if !v.in_control {
                        summary.signals += 1;
                    }
                    serde_json::to_string(&PointRecord {
                        index,
                        subgroup_id: id,
                        chart: name,
                        statistic: v.statistic,
                        lcl: limits.lcl,
                        ucl: limits.ucl,
                        in_control: v.in_control,
                    })
                }
                Err(e) => {
                    summary.faults += 1;
                    serde_json::to_string(&FaultRecord {
                        index,
                        subgroup_id: id,
                        chart: name,
                        fault: e.to_string(),
                    })
                }
            }
            .expect("record serializes");
            match writeln!(out, "{line}") {
                Ok(()) => {}
                // A closed downstream reader ends the stream early.
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(summary),
                Err(e) => return Err(e.into()),
            }
        }
    }
    match out.flush() {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(summary),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutputs {
    pub table: PathBuf,
    pub metadata: PathBuf,
    pub qq: Vec<PathBuf>,
}

#[derive(Serialize)]
struct CellMeta<'a> {
    scenario: &'a str,
    recipe: &'a str,
    seed: u64,
    replications: usize,
    censored: usize,
    phase2_cap: usize,
}

#[derive(Serialize)]
struct QqMeta {
    file: String,
    values: usize,
    ks_statistic: f64,
    ks_p_value: f64,
}

#[derive(Serialize)]
struct SimulateMeta<'a> {
    tool_version: &'a str,
    config_hash: String,
    master_seed: u64,
    rng: &'a str,
    run_length_sd: &'a str,
    cells: Vec<CellMeta<'a>>,
    qq: Vec<QqMeta>,
}

fn write_table(path: &Path, rows: &[TableRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record([
        "scenario",
        "recipe",
        "arl",
        "arl_lower_bound",
        "sd_run_length",
        "se_arl",
        "replications",
        "censored",
        "phase2_cap",
        "seed",
    ])
    .map_err(|e| io_err(path, e))?;
    for r in rows {
        let s = &r.summary;
        w.write_record([
            r.scenario.clone(),
            r.recipe.clone(),
            s.arl.to_string(),
            s.arl_lower_bound.to_string(),
            s.sd_run_length.to_string(),
            s.se_arl.to_string(),
            s.replications.to_string(),
            s.censored_count.to_string(),
            s.cap.to_string(),
            s.seed.to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_pairs(path: &Path, pairs: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["theoretical", "sample"]).map_err(|e| io_err(path, e))?;
    for (t, s) in pairs {
        w.write_record([t.to_string(), s.to_string()]).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// QQ plot data for univariate subgroups: standardized trimmed means
/// against N(0, 1) and `S_t²` against its moment gamma fit.
fn write_qq_files(
    subgroups: &[PointCloud],
    alpha: TrimProportion,
    out_dir: &Path,
) -> Result<(Vec<PathBuf>, Vec<QqMeta>)> {
    if subgroups.iter().any(|g| g.dim() != 1) {
        return Err(SpcError::DimensionMismatch { expected: 1, found: subgroups[0].dim() });
    }
    let means = subgroups
        .iter()
        .map(|g| trimmed_mean(g.coords(), alpha, DenominatorMode::RetainedCount))
        .collect::<Result<Vec<_>>>()?;
    let se2 = subgroups
        .iter()
        .map(|g| trimmed_se(g.coords(), alpha).map(|s| s * s))
        .collect::<Result<Vec<_>>>()?;

    let (mu, sd) = (mean(&means), std_dev(&means));
    let normal = statrs::distribution::Normal::standard();
    let std_means: Vec<f64> = means.iter().map(|m| (m - mu) / sd).collect();
    let d_mean = ks_statistic(&std_means, |x| statrs::distribution::ContinuousCDF::cdf(&normal, x));
    let fit = fit_gamma(&se2)?;
    let d_gamma = ks_statistic(&se2, |x| fit.cdf(x));

    let mean_path = out_dir.join("qq_trimmed_mean_normal.csv");
    let gamma_path = out_dir.join("qq_st2_gamma.csv");
    write_pairs(&mean_path, &qq_points(&means, QqReference::FittedNormal)?)?;
    write_pairs(&gamma_path, &qq_points(&se2, QqReference::Gamma(fit))?)?;
    let meta = vec![
        QqMeta {
            file: "qq_trimmed_mean_normal.csv".into(),
            values: means.len(),
            ks_statistic: d_mean,
            ks_p_value: ks_p_value(d_mean, means.len()),
        },
        QqMeta {
            file: "qq_st2_gamma.csv".into(),
            values: se2.len(),
            ks_statistic: d_gamma,
            ks_p_value: ks_p_value(d_gamma, se2.len()),
        },
    ];
    Ok((vec![mean_path, gamma_path], meta))
}

/// QQ stream seed: distinct from every replication stream of the grid.
const QQ_STREAM: u64 = 1 << 63;

pub fn cmd_simulate(config: &RunConfig, out_dir: &Path) -> Result<SimulateOutputs> {
    let sim = config
        .simulate
        .as_ref()
        .ok_or_else(|| invalid("configuration has no [simulate] section"))?;
    let scenarios = sim.scenarios()?;
    let recipes = sim.recipes(&config.chart)?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    let cells = grid(&scenarios, &recipes);
    let rows = scenario_table(&cells)?;
    let table = out_dir.join("arl.csv");
    write_table(&table, &rows)?;

    let mut qq_files = Vec::new();
    let mut qq_meta = Vec::new();
    if sim.qq {
        let n = sim.qq_n.unwrap_or(20);
        let count = sim.qq_subgroups.unwrap_or(5000);
        let alpha = TrimProportion::new(sim.qq_alpha.unwrap_or(0.1))?;
        let mut rng = ChaCha8Rng::seed_from_u64(sim.seed());
        rng.set_stream(QQ_STREAM);
        let g = Gaussian::new(&[0.0], &[vec![1.0]])?;
        let groups: Vec<PointCloud> = (0..count).map(|_| g.sample_cloud(n, &mut rng)).collect();
        (qq_files, qq_meta) = write_qq_files(&groups, alpha, out_dir)?;
    }

    let meta = SimulateMeta {
        tool_version: TOOL_VERSION,
        config_hash: config.hash(),
        master_seed: sim.seed(),
        rng: "ChaCha8; replication r of every cell uses seed master_seed, stream r",
        run_length_sd: "standard deviation of uncensored run lengths",
        cells: cells
            .iter()
            .zip(&rows)
            .map(|(c, r)| CellMeta {
                scenario: &c.scenario_name,
                recipe: &c.recipe_name,
                seed: c.scenario.seed,
                replications: r.summary.replications,
                censored: r.summary.censored_count,
                phase2_cap: r.summary.cap,
            })
            .collect(),
        qq: qq_meta,
    };
    let metadata = out_dir.join("arl.meta.json");
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    std::fs::write(&metadata, text).map_err(|e| io_err(&metadata, e))?;
    Ok(SimulateOutputs { table, metadata, qq: qq_files })
}

/// QQ plot-point files for a univariate dataset.
pub fn cmd_qq(dataset: &Dataset, alpha: TrimProportion, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if dataset.dim != 1 {
        return Err(SpcError::DimensionMismatch { expected: 1, found: dataset.dim });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    Ok(write_qq_files(&dataset.subgroups, alpha, out_dir)?.0)
}
